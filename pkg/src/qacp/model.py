"""The loaded model: registers, action alphabets with Kraus semantics, the
communication function, recursive specifications, and entry-point terms.

A Model is built either by the spec-file parser or programmatically; all
invariants are enforced by validate(), which both paths call.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import quantum
from .errors import (
    DimensionCap,
    DuplicateDefinition,
    GammaConflict,
    GammaOnQuantumAction,
    KrausNotTracePreserving,
    RegisterMismatch,
    UndeclaredAction,
)
from .quantum import KrausSet, QuantumState, apply_operation, ket_state, validate_kraus
from .terms import ProcessTerm, RecursiveSpec, actions_used, rec_vars

DIM_CAP = 1024  # desk-scale: at most 10 qubits worth of state

RESERVED_IDS = {
    "registers", "actions", "gamma", "sets", "spec", "term", "init",
    "quantum", "classical", "on", "public", "private", "ket", "matrix",
    "delta", "tau", "encap", "rename", "i", "tick",
}


@dataclass(frozen=True)
class Register:
    name: str
    dim: int = 2
    public: bool = True


@dataclass
class Model:
    registers: tuple[Register, ...] = ()
    quantum_alphabet: dict[str, KrausSet] = field(default_factory=dict)
    classical_alphabet: frozenset[str] = frozenset()
    gamma: dict[tuple[str, str], str] = field(default_factory=dict)
    specs: tuple[RecursiveSpec, ...] = ()
    initial_state: QuantumState | None = None
    named_terms: dict[str, ProcessTerm] = field(default_factory=dict)
    action_sets: dict[str, frozenset[str]] = field(default_factory=dict)

    def __post_init__(self):
        self._var_table: dict[str, RecursiveSpec] = {}
        for spec in self.specs:
            for var in spec.variables():
                if var in self._var_table:
                    raise DuplicateDefinition(
                        f"recursion variable {var} declared in more than one spec"
                    )
                self._var_table[var] = spec
        self._op_cache: dict[tuple[str, str], QuantumState] = {}

    # -- lookups ---------------------------------------------------------

    @property
    def state_registers(self) -> tuple[tuple[str, int], ...]:
        return tuple((r.name, r.dim) for r in self.registers)

    @property
    def public_mask(self) -> frozenset[str]:
        return frozenset(r.name for r in self.registers if r.public)

    @property
    def dim(self) -> int:
        d = 1
        for r in self.registers:
            d *= r.dim
        return d

    def all_actions(self) -> frozenset[str]:
        return frozenset(self.quantum_alphabet) | self.classical_alphabet

    def is_quantum(self, action: str) -> bool:
        return action in self.quantum_alphabet

    def is_classical(self, action: str) -> bool:
        return action in self.classical_alphabet

    def spec_of(self, var: str) -> RecursiveSpec:
        try:
            return self._var_table[var]
        except KeyError:
            raise UndeclaredAction(f"unbound recursion variable {var}") from None

    def has_var(self, var: str) -> bool:
        return var in self._var_table

    def rhs_of(self, var: str) -> ProcessTerm:
        return self.spec_of(var).rhs(var)

    def gamma_get(self, a: str, b: str) -> str | None:
        return self.gamma.get((a, b))

    def ground_state(self) -> QuantumState:
        return ket_state(self.state_registers, tuple(0 for _ in self.registers),
                         self.public_mask)

    def state(self) -> QuantumState:
        if self.initial_state is not None:
            return self.initial_state
        return self.ground_state()

    def apply_action(self, state: QuantumState, action: str) -> QuantumState:
        """State after a quantum action, memoized on (state key, action)."""
        cache_key = (state.key(), action)
        hit = self._op_cache.get(cache_key)
        if hit is not None:
            return hit
        result = apply_operation(state, self.quantum_alphabet[action])
        self._op_cache[cache_key] = result
        return result

    # -- validation --------------------------------------------------------

    def validate(self) -> None:
        names = set()
        for r in self.registers:
            if r.name in names or r.name in RESERVED_IDS:
                raise DuplicateDefinition(f"bad register name {r.name}")
            if r.dim < 2:
                raise RegisterMismatch(f"register {r.name} has dimension {r.dim}")
            names.add(r.name)
        if self.dim > DIM_CAP:
            raise DimensionCap(
                f"total dimension {self.dim} exceeds the desk-scale cap {DIM_CAP}"
            )

        overlap = set(self.quantum_alphabet) & set(self.classical_alphabet)
        if overlap:
            raise DuplicateDefinition(
                f"action(s) {sorted(overlap)} declared both quantum and classical"
            )

        reg_dims = dict(self.state_registers)
        for action, op in self.quantum_alphabet.items():
            for reg in op.acts_on:
                if reg not in reg_dims:
                    raise RegisterMismatch(
                        f"action {action} acts on undeclared register {reg}"
                    )
            d = 1
            for reg in op.acts_on:
                d *= reg_dims[reg]
            if op.dim != d:
                raise RegisterMismatch(
                    f"action {action}: Kraus dimension {op.dim} != register dim {d}"
                )
            report = validate_kraus(op)
            if report.classification != "trace-preserving":
                raise KrausNotTracePreserving(
                    f"action {action}: {report.classification} "
                    f"(deviation {report.deviation:.3g}); only trace-preserving "
                    "operations may label process actions"
                )

        for (a, b), c in list(self.gamma.items()):
            for x in (a, b):
                if self.is_quantum(x):
                    raise GammaOnQuantumAction(
                        f"gamma is defined on quantum action {x}; quantum "
                        "operations never communicate"
                    )
                if not self.is_classical(x):
                    raise UndeclaredAction(f"gamma mentions undeclared action {x}")
            if not self.is_classical(c):
                raise UndeclaredAction(f"gamma result {c} is not a classical action")

        for set_name, members in self.action_sets.items():
            unknown = members - self.all_actions()
            if unknown:
                raise UndeclaredAction(
                    f"set {set_name} contains undeclared action(s) {sorted(unknown)}"
                )

        for spec in self.specs:
            for var, term in spec.equations:
                self._check_term(term, f"equation for {var}")
            spec.check_guarded()
        for name, term in self.named_terms.items():
            self._check_term(term, f"term {name}")

        if self.initial_state is not None:
            if self.initial_state.registers != self.state_registers:
                raise RegisterMismatch("initial state registers do not match model")
            self.initial_state.validate()

    def _check_term(self, term: ProcessTerm, where: str) -> None:
        unknown = actions_used(term) - self.all_actions()
        if unknown:
            raise UndeclaredAction(f"{where}: undeclared action(s) {sorted(unknown)}")
        for var in rec_vars(term):
            if var not in self._var_table:
                raise UndeclaredAction(f"{where}: unbound recursion variable {var}")

    def symmetrize_gamma(self) -> None:
        """Close gamma under symmetry; conflicting symmetric entries are an
        error (gamma is a partial commutative function)."""
        for (a, b), c in list(self.gamma.items()):
            mirror = self.gamma.get((b, a))
            if mirror is None:
                self.gamma[(b, a)] = c
            elif mirror != c:
                raise GammaConflict(
                    f"gamma({a},{b})={c} conflicts with gamma({b},{a})={mirror}"
                )

    def fingerprint(self) -> tuple:
        """Cheap identity for ModelMismatch checks between graphs."""
        return (
            self.state_registers,
            tuple(sorted(self.quantum_alphabet)),
            tuple(sorted(self.classical_alphabet)),
            tuple(sorted(self.gamma.items())),
        )


def quantum_dim(model: Model) -> int:
    return model.dim


def make_model(
    registers=(),
    quantum_alphabet=None,
    classical_alphabet=(),
    gamma=None,
    specs=(),
    initial_state=None,
    named_terms=None,
    action_sets=None,
) -> Model:
    """Build, symmetrize and validate a model in one go."""
    model = Model(
        registers=tuple(registers),
        quantum_alphabet=dict(quantum_alphabet or {}),
        classical_alphabet=frozenset(classical_alphabet),
        gamma=dict(gamma or {}),
        specs=tuple(specs),
        initial_state=initial_state,
        named_terms=dict(named_terms or {}),
        action_sets=dict(action_sets or {}),
    )
    model.symmetrize_gamma()
    model.validate()
    return model


# re-exported tolerance knobs live in quantum; kept here for discoverability
PHYS_TOL = quantum.PHYS_TOL
DEDUP_GRAIN = quantum.DEDUP_GRAIN
