"""qacp: a verification toolkit for quantum process algebra.

Parse quantum/classical process specifications, generate configuration
graphs from the operational rules, decide strong / branching /
rooted-branching equivalence, normalize closed terms against the axiom
catalogues, and check protocol implementations against their external
behaviour (a BB84 model ships built in).
"""

from .equivalence import (
    Counterexample,
    EquivalenceVerdict,
    ReductionReport,
    bisim,
    branching_bisim,
    find_clusters,
    minimize,
    quantum_bisim_terms,
    rooted_branching_bisim,
    strong_bisim,
    validate_witness,
)
from .errors import QacpError
from .model import Model, Register, make_model
from .parser import format_model, parse_spec, parse_term
from .quantum import (
    DEDUP_GRAIN,
    PHYS_TOL,
    PUBLIC_TOL,
    KrausSet,
    QuantumState,
    apply_operation,
    compose_operations,
    ket_state,
    partial_trace,
    state_key,
    trace_distance,
    validate_kraus,
)
from .rewrite import make_system, normalize, rewrite_step, unfold_rdp
from .semantics import (
    ConfigGraph,
    Configuration,
    RULESETS,
    build_graph,
    build_structural_graph,
    linearize,
    step,
    to_aut,
    to_dot,
    to_json_dict,
)
from .terms import (
    Abstract,
    Alt,
    ClassicalAction,
    CommMerge,
    DELTA,
    Deadlock,
    Encap,
    LeftMerge,
    Merge,
    ProcessTerm,
    QuantumAction,
    RecVar,
    RecursiveSpec,
    Rename,
    Seq,
    Silent,
    TAU,
    canonical,
    format_term,
)
from .verify import (
    VerificationJob,
    bb84_job,
    build_bb84,
    check_external_behavior,
    run_job,
)

__version__ = "0.1.0"
