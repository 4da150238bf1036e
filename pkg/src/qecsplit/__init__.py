"""Logical failure-rate estimation for surface-code syndrome extraction.

Builds gate-level rotated-surface-code circuits under independent Pauli
noise, decodes with exact minimum-weight matching, and estimates logical
failure rates by direct Monte Carlo or by multilevel splitting with
Metropolis chains restricted to the malignant event set.
"""

from .circuit import (
    Circuit,
    Event,
    Gate,
    GateKind,
    InvalidEventError,
    InvalidParameterError,
    NoiseModel,
    build_rotated_surface_code,
    enumerate_faults,
    event_log_probability,
    fault_labels,
    serialize_circuit,
)
from .pauli import Syndrome, SyndromeTable, is_malignant, propagate
from .decoder import (
    BOUNDARY,
    CircuitDecoder,
    DecodingGraph,
    GraphConstructionError,
    MatchingInfeasibleError,
    MatchResult,
    build_decoding_graph,
    decode_count,
    mwpm_decode,
)
from .estimator import (
    BennettBracketError,
    BudgetExceededError,
    ChainState,
    EstimationError,
    FailureCache,
    FractionEstimate,
    GelmanRubinUndefinedError,
    MalignancyOracle,
    PartialResultError,
    RatioEstimate,
    Schedule,
    SetupError,
    SplitReport,
    StepRecord,
    SubsetEstimate,
    acceptance_probability,
    bennett_solve,
    cached_is_malignant,
    gelman_rubin,
    generate_schedule,
    malignant_fraction,
    mc_estimate,
    metropolis_step,
    run_splitting,
    subset_sampling_estimate,
    visited_weight_histogram,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
