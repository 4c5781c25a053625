"""Density-matrix state backend.

States are density operators over an ordered list of named registers;
quantum operations are Kraus sets acting on a subset of those registers,
embedded with identity elsewhere.  Measurements are whole trace-preserving
superoperators (never probabilistic branches), so every action maps one
state to one state.

Tolerances, stated once and used everywhere:
  PHYS_TOL     1e-9   physicality (hermiticity, positivity, trace, Kraus completeness)
  DEDUP_GRAIN  1e-6   entry rounding grain for deduplication keys
  PUBLIC_TOL   1e-6   allowed public-state drift for hidden actions
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import reduce

import numpy as np

from .errors import NonPhysicalResult, NonSquareKraus, RegisterMismatch

PHYS_TOL = 1e-9
DEDUP_GRAIN = 1e-6
PUBLIC_TOL = 1e-6

__all__ = [
    "PHYS_TOL",
    "DEDUP_GRAIN",
    "PUBLIC_TOL",
    "QuantumState",
    "KrausSet",
    "KrausReport",
    "apply_operation",
    "validate_kraus",
    "trace_distance",
    "partial_trace",
    "state_key",
    "compose_operations",
    "ket_state",
    "HADAMARD",
    "PAULI_X",
    "PAULI_Z",
    "IDENTITY2",
]

HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY2 = np.eye(2, dtype=complex)


def _freeze(matrix: np.ndarray) -> np.ndarray:
    out = np.asarray(matrix, dtype=complex)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class QuantumState:
    """Density operator over named registers.

    registers    ordered (name, dimension) pairs
    matrix       D x D complex matrix, D = product of dimensions
    public_mask  register names visible to an external observer
    """

    registers: tuple[tuple[str, int], ...]
    matrix: np.ndarray
    public_mask: frozenset[str] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "matrix", _freeze(self.matrix))
        d = self.dim
        if self.matrix.shape != (d, d):
            raise RegisterMismatch(
                f"matrix shape {self.matrix.shape} does not match register dimension {d}"
            )

    @property
    def dim(self) -> int:
        return int(np.prod([d for _, d in self.registers])) if self.registers else 1

    @property
    def register_names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.registers)

    def validate(self, tol: float | None = None, check_psd: bool = True) -> None:
        """Raise NonPhysicalResult unless this is a density operator."""
        tol = PHYS_TOL if tol is None else tol
        m = self.matrix
        if np.max(np.abs(m - m.conj().T)) > tol:
            raise NonPhysicalResult("state is not Hermitian within tolerance")
        if abs(np.trace(m) - 1.0) > tol:
            raise NonPhysicalResult(f"state trace {np.trace(m):.12g} != 1")
        if check_psd and self.dim > 1:
            if np.linalg.eigvalsh(m).min() < -tol:
                raise NonPhysicalResult("state has a negative eigenvalue")

    def key(self, grain: float = DEDUP_GRAIN) -> str:
        return state_key(self, grain)

    def reduced(self, keep) -> "QuantumState":
        return partial_trace(self, keep)

    def public_reduced(self) -> "QuantumState":
        return partial_trace(self, self.public_mask)


@dataclass(frozen=True, eq=False)
class KrausSet:
    """A quantum operation as Kraus operators on an ordered register subset.

    trace_preserving is the *declared* classification; validate_kraus
    reports whether the operators live up to it.
    """

    operators: tuple[np.ndarray, ...]
    acts_on: tuple[str, ...]
    trace_preserving: bool = True

    def __post_init__(self):
        if not self.operators:
            raise NonSquareKraus("a Kraus set needs at least one operator")
        ops = tuple(_freeze(k) for k in self.operators)
        d = ops[0].shape[0]
        for k in ops:
            if k.ndim != 2 or k.shape != (d, d):
                raise NonSquareKraus(
                    f"Kraus operators must be square and of equal dimension, got {k.shape}"
                )
        object.__setattr__(self, "operators", ops)

    @property
    def dim(self) -> int:
        return self.operators[0].shape[0]

    def completeness(self) -> np.ndarray:
        """Sum of K^dagger K."""
        return sum(k.conj().T @ k for k in self.operators)


@dataclass(frozen=True)
class KrausReport:
    deviation: float  # max |sum K^dagger K - I|
    classification: str  # trace-preserving | trace-non-increasing | not-a-channel
    declared_trace_preserving: bool
    consistent: bool

    @property
    def ok(self) -> bool:
        return self.consistent and self.classification != "not-a-channel"


def validate_kraus(op: KrausSet, tol: float | None = None) -> KrausReport:
    """Classify a Kraus set against Kraus completeness."""
    tol = PHYS_TOL if tol is None else tol
    s = op.completeness()
    deviation = float(np.max(np.abs(s - np.eye(op.dim))))
    if deviation <= tol:
        classification = "trace-preserving"
    elif np.linalg.eigvalsh(s).max() <= 1.0 + tol:
        classification = "trace-non-increasing"
    else:
        classification = "not-a-channel"
    consistent = (classification == "trace-preserving") == op.trace_preserving
    return KrausReport(deviation, classification, op.trace_preserving, consistent)


def _axes_of(state: QuantumState, names) -> list[int]:
    positions = {name: i for i, (name, _) in enumerate(state.registers)}
    missing = [n for n in names if n not in positions]
    if missing:
        raise RegisterMismatch(f"register(s) {missing} not in state {state.register_names}")
    return [positions[n] for n in names]


def apply_operation(state: QuantumState, op: KrausSet) -> QuantumState:
    """Apply sum_k K rho K^dagger, with K embedded on op.acts_on and
    identity elsewhere.

    Only trace-preserving results are physical here: if the output trace
    drifts from 1 by more than 1e-6 the result is rejected rather than
    renormalized.
    """
    axes = _axes_of(state, op.acts_on)
    dims = [d for _, d in state.registers]
    d_act = int(np.prod([dims[a] for a in axes])) if axes else 1
    if op.dim != d_act:
        raise RegisterMismatch(
            f"Kraus dimension {op.dim} does not match registers {op.acts_on} (dim {d_act})"
        )
    d_total = state.dim
    n = len(dims)

    # rho as a 2n-axis tensor; acted-on axes brought to the front of the
    # row and column groups, then grouped to (d_act, rest, d_act, rest).
    rest_axes = [i for i in range(n) if i not in axes]
    perm = axes + rest_axes
    tensor = state.matrix.reshape(dims + dims)
    tensor = np.transpose(tensor, perm + [n + p for p in perm])
    d_rest = d_total // d_act if d_act else d_total
    rho4 = tensor.reshape(d_act, d_rest, d_act, d_rest)

    out4 = np.zeros_like(rho4)
    for k in op.operators:
        tmp = np.tensordot(k, rho4, axes=([1], [0]))  # (act, rest, act, rest)
        out4 += np.tensordot(tmp, k.conj(), axes=([2], [1])).transpose(0, 1, 3, 2)

    # undo the permutation
    sizes = [dims[p] for p in perm]
    tensor = out4.reshape(sizes + sizes)
    inverse = np.argsort(perm)
    tensor = np.transpose(tensor, list(inverse) + [n + int(p) for p in inverse])
    matrix = tensor.reshape(d_total, d_total)

    trace = float(np.trace(matrix).real)
    if op.trace_preserving and abs(trace - 1.0) > 1e-6:
        raise NonPhysicalResult(
            f"trace-preserving operation produced trace {trace:.9g}"
        )
    return QuantumState(state.registers, matrix, state.public_mask)


def partial_trace(state: QuantumState, keep) -> QuantumState:
    """Reduced density matrix over the kept registers (original order)."""
    keep = set(keep)
    _axes_of(state, keep)  # raises RegisterMismatch on unknown names
    kept = tuple((name, d) for name, d in state.registers if name in keep)
    dims = [d for _, d in state.registers]
    n = len(dims)
    tensor = state.matrix.reshape(dims + dims)
    for i in reversed(range(n)):
        name = state.registers[i][0]
        if name not in keep:
            tensor = np.trace(tensor, axis1=i, axis2=i + tensor.ndim // 2)
    d_kept = int(np.prod([d for _, d in kept])) if kept else 1
    matrix = tensor.reshape(d_kept, d_kept)
    return QuantumState(kept, matrix, state.public_mask & keep)


def trace_distance(a: QuantumState, b: QuantumState) -> float:
    """Half the trace norm of a - b; 0 iff equal, 1 for orthogonal purities."""
    if a.registers != b.registers:
        raise RegisterMismatch(
            f"register mismatch: {a.register_names} vs {b.register_names}"
        )
    diff = a.matrix - b.matrix
    return float(0.5 * np.abs(np.linalg.eigvalsh(diff)).sum())


def state_key(state: QuantumState, grain: float = DEDUP_GRAIN) -> str:
    """Canonical byte-string key: entries rounded to the dedup grain."""
    rounded = np.round(state.matrix / grain)
    payload = np.ascontiguousarray(rounded.real).tobytes() + np.ascontiguousarray(
        rounded.imag
    ).tobytes()
    digest = hashlib.blake2b(payload, digest_size=16)
    digest.update("|".join(f"{n}:{d}" for n, d in state.registers).encode())
    return digest.hexdigest()


def _embed(op: KrausSet, registers: tuple[tuple[str, int], ...]) -> list[np.ndarray]:
    """Embed operators onto an ordered register tuple (identity elsewhere)."""
    names = [n for n, _ in registers]
    dims = [d for _, d in registers]
    n = len(dims)
    axes = [names.index(a) for a in op.acts_on]
    rest = [i for i in range(n) if i not in axes]
    perm = axes + rest
    inverse = np.argsort(perm)
    d_rest = int(np.prod([dims[i] for i in rest])) if rest else 1
    out = []
    for k in op.operators:
        big = np.kron(k, np.eye(d_rest))
        tensor = big.reshape([dims[p] for p in perm] * 2)
        tensor = np.transpose(tensor, list(inverse) + [n + int(p) for p in inverse])
        out.append(tensor.reshape(int(np.prod(dims)), int(np.prod(dims))))
    return out


def compose_operations(first: KrausSet, then: KrausSet,
                       registers: tuple[tuple[str, int], ...]) -> KrausSet:
    """The composite superoperator `then after first` as one Kraus set over
    the given registers (products of embedded operators)."""
    f = _embed(first, registers)
    t = _embed(then, registers)
    ops = tuple(b @ a for a in f for b in t)
    return KrausSet(ops, tuple(n for n, _ in registers),
                    first.trace_preserving and then.trace_preserving)


def ket_state(registers: tuple[tuple[str, int], ...], values: tuple[int, ...],
              public_mask: frozenset[str] = frozenset()) -> QuantumState:
    """Product computational-basis state |values>."""
    if len(values) != len(registers):
        raise RegisterMismatch("one basis index per register required")
    vectors = []
    for (name, d), v in zip(registers, values):
        if not 0 <= v < d:
            raise RegisterMismatch(f"basis index {v} out of range for register {name}")
        e = np.zeros(d, dtype=complex)
        e[v] = 1.0
        vectors.append(e)
    ket = reduce(np.kron, vectors) if vectors else np.ones(1, dtype=complex)
    return QuantumState(registers, np.outer(ket, ket.conj()), public_mask)
