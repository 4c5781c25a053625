"""Protocol verification: external-behaviour checking of hidden,
encapsulated implementations against specifications, and the built-in
BB84 key-distribution model.

The BB84 model follows the standard two-party narrative: Alice draws two
random bit strings, prepares qubits, and ships them over a quantum
channel; Bob draws his own bases, measures, and the two sides exchange
bases over a public channel and compare.  Random-bit creation is a
depolarize-then-measure preparation channel, qubit preparation and
measurement are recording channels, and basis application is a controlled
Hadamard — all single trace-preserving superoperators, so runs never
branch probabilistically.  One protocol round therefore acts as a
constant map on the quantum state; the model's initial state is that
map's fixed point, which closes the encapsulated composition into a
finite loop.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .equivalence import EquivalenceVerdict, bisim, minimize
from .errors import DimensionCap, UndeclaredAction
from .model import Model, Register, make_model
from .quantum import HADAMARD, KrausSet, QuantumState, apply_operation
from .semantics import ConfigGraph, build_graph
from .terms import (
    Abstract,
    ClassicalAction,
    Encap,
    Merge,
    ProcessTerm,
    QuantumAction,
    RecVar,
    RecursiveSpec,
    Seq,
    actions_used,
    build_alt,
)

__all__ = [
    "VerificationJob",
    "JobResult",
    "check_external_behavior",
    "run_job",
    "build_bb84",
    "bb84_job",
    "BB84_HIDE",
    "BB84_INTERNAL",
]


@dataclass
class VerificationJob:
    impl: ProcessTerm
    spec: ProcessTerm | RecursiveSpec
    hide: frozenset[str]
    internal: frozenset[str]
    model: Model
    mode: str = "rooted-branching"
    max_states: int = 10_000

    def validate(self) -> None:
        classical = self.model.classical_alphabet
        if not self.hide <= classical:
            raise UndeclaredAction(
                f"hide set must be classical: {sorted(self.hide - classical)}"
            )
        if not self.internal <= self.model.all_actions():
            raise UndeclaredAction(
                f"internal set mentions undeclared actions: "
                f"{sorted(self.internal - self.model.all_actions())}"
            )
        spec_term = self.spec_term()
        spec_model = self.spec_model()
        spec_labels = set(actions_used(spec_term))
        for spec in spec_model.specs:
            for var, rhs in spec.equations:
                if var in self._spec_vars():
                    spec_labels |= actions_used(rhs)
        offenders = spec_labels & (self.hide | self.internal)
        if offenders:
            raise UndeclaredAction(
                f"the specification may only use external labels; "
                f"found {sorted(offenders)}"
            )

    def _spec_vars(self) -> set[str]:
        if isinstance(self.spec, RecursiveSpec):
            return set(self.spec.variables())
        return set()

    def spec_term(self) -> ProcessTerm:
        if isinstance(self.spec, RecursiveSpec):
            return RecVar(self.spec.variables()[0])
        return self.spec

    def spec_model(self) -> Model:
        """The model the specification graph is built against; a foreign
        RecursiveSpec is spliced into a shallow copy."""
        if not isinstance(self.spec, RecursiveSpec):
            return self.model
        known = {v for s in self.model.specs for v in s.variables()}
        if set(self.spec.variables()) <= known:
            return self.model
        extended = Model(
            registers=self.model.registers,
            quantum_alphabet=self.model.quantum_alphabet,
            classical_alphabet=self.model.classical_alphabet,
            gamma=self.model.gamma,
            specs=self.model.specs + (self.spec,),
            initial_state=self.model.initial_state,
            named_terms=self.model.named_terms,
            action_sets=self.model.action_sets,
        )
        self.spec.check_guarded()
        return extended


@dataclass
class JobResult:
    verdict: EquivalenceVerdict
    impl_graph: ConfigGraph
    spec_graph: ConfigGraph
    minimized: ConfigGraph


def run_job(job: VerificationJob) -> JobResult:
    """Build tau_I(encap_H(impl)), divergence-check and minimize it, and
    compare against the specification graph in the job's mode.

    The verdict is decided on the unminimized graph: branching
    quotienting does not preserve rooted behaviour when the
    implementation opens with internal steps.
    """
    job.validate()
    hidden_impl = Abstract(job.internal, Encap(job.hide, job.impl))
    impl_graph = build_graph(hidden_impl, job.model, max_states=job.max_states)
    minimized = minimize(impl_graph, "branching")  # also runs the divergence check
    spec_graph = build_graph(job.spec_term(), job.spec_model(), max_states=job.max_states)
    verdict = bisim(impl_graph, spec_graph, job.mode)
    return JobResult(verdict, impl_graph, spec_graph, minimized)


def check_external_behavior(job: VerificationJob) -> EquivalenceVerdict:
    return run_job(job).verdict


# -- the BB84 model ------------------------------------------------------------

BB84_HIDE = frozenset(
    ["send_Q", "receive_Q", "send_P_Bb", "receive_P_Bb", "send_P_Ba", "receive_P_Ba"]
)

_BB84_QUANTUM = ("Rand_q_Ba", "Rand_q_Ka", "Set_Ka_q", "H_Ba_q", "Rand_qp_Bb", "M_q_Kb")

BB84_INTERNAL = frozenset(_BB84_QUANTUM) | frozenset(["c_Q", "c_P_Bb", "c_P_Ba", "cmp"])


def _uniform_prep(dim: int, register: str) -> KrausSet:
    """Depolarize-then-measure: discard the register and leave it in the
    uniform classical mixture."""
    ops = []
    scale = 1.0 / np.sqrt(dim)
    for k in range(dim):
        for j in range(dim):
            m = np.zeros((dim, dim), dtype=complex)
            m[k, j] = scale
            ops.append(m)
    return KrausSet(tuple(ops), (register,))


def _controlled_prepare(dim: int, control: str, target: str) -> KrausSet:
    """Set target := |control contents>, discarding the previous target."""
    ops = []
    for k in range(dim):
        ctrl = np.zeros((dim, dim), dtype=complex)
        ctrl[k, k] = 1.0
        for j in range(dim):
            setter = np.zeros((dim, dim), dtype=complex)
            setter[k, j] = 1.0
            ops.append(np.kron(ctrl, setter))
    return KrausSet(tuple(ops), (control, target))


def _controlled_hadamard(n_qubits: int, control: str, target: str) -> KrausSet:
    """Per-qubit Hadamard on the target controlled by the matching bit of
    the control register (one unitary)."""
    dim = 2 ** n_qubits
    u = np.zeros((dim * dim, dim * dim), dtype=complex)
    eye = np.eye(2, dtype=complex)
    for k in range(dim):
        ctrl = np.zeros((dim, dim), dtype=complex)
        ctrl[k, k] = 1.0
        h_k = np.ones((1, 1), dtype=complex)
        for bit_index in range(n_qubits):
            bit = (k >> (n_qubits - 1 - bit_index)) & 1
            h_k = np.kron(h_k, HADAMARD if bit else eye)
        u += np.kron(ctrl, h_k)
    return KrausSet((u,), (control, target))


def _recording_measurement(dim: int, measured: str, record: str) -> KrausSet:
    """Computational-basis measurement of `measured`, outcome overwritten
    into `record`, as one trace-preserving superoperator."""
    ops = []
    for m in range(dim):
        proj = np.zeros((dim, dim), dtype=complex)
        proj[m, m] = 1.0
        for j in range(dim):
            setter = np.zeros((dim, dim), dtype=complex)
            setter[m, j] = 1.0
            ops.append(np.kron(proj, setter))
    return KrausSet(tuple(ops), (measured, record))


def _chain(spec_pairs: list[tuple[str, ProcessTerm]]) -> RecursiveSpec:
    return RecursiveSpec(tuple(spec_pairs))


def build_bb84(n_qubits: int = 1, data_in: int = 1, data_out: int = 1) -> Model:
    """The two-party BB84 model: Alice and Bob process specs, the three
    channel communications, the hide/internal sets, and the external
    two-step specification loop.

    n_qubits is the string length; the state space is 2^(5 n) so the
    desk-scale cap admits n <= 2.  data_in/data_out size the indexed
    external sums (singletons by default).
    """
    if n_qubits < 1:
        raise DimensionCap("n_qubits must be at least 1")
    if 2 ** (5 * n_qubits) > 1024:
        raise DimensionCap(
            f"BB84 with {n_qubits} qubits needs dimension {2 ** (5 * n_qubits)} > 1024"
        )
    dim = 2 ** n_qubits
    registers = [
        Register("q", dim, public=False),
        Register("Ba", dim, public=False),
        Register("Ka", dim, public=False),
        Register("Bb", dim, public=False),
        Register("Kb", dim, public=False),
    ]
    quantum_alphabet = {
        "Rand_q_Ba": _uniform_prep(dim, "Ba"),
        "Rand_q_Ka": _uniform_prep(dim, "Ka"),
        "Set_Ka_q": _controlled_prepare(dim, "Ka", "q"),
        "H_Ba_q": _controlled_hadamard(n_qubits, "Ba", "q"),
        "Rand_qp_Bb": _uniform_prep(dim, "Bb"),
        "M_q_Kb": _recording_measurement(dim, "q", "Kb"),
    }
    receive_inputs = [f"receive_A_d{i}" for i in range(data_in)]
    send_outputs = [f"send_B_d{o}" for o in range(data_out)]
    classical = (
        receive_inputs
        + send_outputs
        + ["send_Q", "receive_Q", "c_Q"]
        + ["send_P_Bb", "receive_P_Bb", "c_P_Bb"]
        + ["send_P_Ba", "receive_P_Ba", "c_P_Ba"]
        + ["cmp"]
    )
    gamma = {
        ("send_Q", "receive_Q"): "c_Q",
        ("send_P_Bb", "receive_P_Bb"): "c_P_Bb",
        ("send_P_Ba", "receive_P_Ba"): "c_P_Ba",
    }

    def qop(name):
        return QuantumAction(name)

    def act(name):
        return ClassicalAction(name)

    def prefix(head, var):
        return Seq(head, RecVar(var))

    # Round phasing: a free interleaving of the two parties lets Alice
    # accept the next input while Bob is still comparing and replying,
    # which both blows up the state space and breaks the strict
    # request-response external behaviour.  Alice therefore compares as
    # soon as she has Bob's bases, closes her round by shipping her own
    # bases (terminating), and the next round is spawned by Bob's output
    # step.  The composed encapsulated graph is then the deterministic
    # thirteen-step protocol loop.
    alice = _chain([
        ("A", build_alt([prefix(act(r), "A1") for r in receive_inputs])),
        ("A1", prefix(qop("Rand_q_Ba"), "A2")),
        ("A2", prefix(qop("Rand_q_Ka"), "A3")),
        ("A3", prefix(qop("Set_Ka_q"), "A4")),
        ("A4", prefix(qop("H_Ba_q"), "A5")),
        ("A5", prefix(act("send_Q"), "A6")),
        ("A6", prefix(act("receive_P_Bb"), "A7")),
        ("A7", prefix(act("cmp"), "A8")),
        ("A8", act("send_P_Ba")),
    ])
    restart = Merge(RecVar("A"), RecVar("B"))
    bob = _chain([
        ("B", prefix(act("receive_Q"), "B1")),
        ("B1", prefix(qop("Rand_qp_Bb"), "B2")),
        ("B2", prefix(qop("M_q_Kb"), "B3")),
        ("B3", prefix(act("send_P_Bb"), "B4")),
        ("B4", prefix(act("receive_P_Ba"), "B5")),
        ("B5", prefix(act("cmp"), "B6")),
        ("B6", build_alt([Seq(act(s), restart) for s in send_outputs])),
    ])
    external = _chain([
        ("SPEC", build_alt([prefix(act(r), "SPEC_B") for r in receive_inputs])),
        ("SPEC_B", build_alt([prefix(act(s), "SPEC") for s in send_outputs])),
    ])

    hide = frozenset(BB84_HIDE)
    internal = frozenset(BB84_INTERNAL)
    ab = Encap(hide, Merge(RecVar("A"), RecVar("B")))
    named_terms = {
        "AB": ab,
        "System": Abstract(internal, ab),
        "External": RecVar("SPEC"),
    }

    reg_pairs = tuple((r.name, r.dim) for r in registers)
    state = QuantumState(reg_pairs, _ground_matrix(dim ** 5), frozenset())
    for action in ("Rand_q_Ba", "Rand_q_Ka", "Set_Ka_q", "H_Ba_q", "Rand_qp_Bb", "M_q_Kb"):
        state = apply_operation(state, quantum_alphabet[action])

    return make_model(
        registers=registers,
        quantum_alphabet=quantum_alphabet,
        classical_alphabet=classical,
        gamma=gamma,
        specs=(alice, bob, external),
        initial_state=state,
        named_terms=named_terms,
        action_sets={"H": hide, "I": internal},
    )


def _ground_matrix(dim: int) -> np.ndarray:
    m = np.zeros((dim, dim), dtype=complex)
    m[0, 0] = 1.0
    return m


def bb84_job(model: Model, mode: str = "rooted-branching",
             max_states: int = 10_000) -> VerificationJob:
    """The standard BB84 verification job: hide the channel actions,
    abstract the internal work, compare against the external loop."""
    return VerificationJob(
        impl=Merge(RecVar("A"), RecVar("B")),
        spec=RecVar("SPEC"),
        hide=model.action_sets["H"],
        internal=model.action_sets["I"],
        model=model,
        mode=mode,
        max_states=max_states,
    )
