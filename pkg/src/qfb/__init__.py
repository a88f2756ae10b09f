"""Maximum output entropy bounds for classical communication over quantum
channels assisted by classical feedback, with protocol simulation and
randomized verification of the supporting entropy inequalities."""

from .bounds import (
    BoundReport,
    EnergyConstraint,
    InfeasibleConstraint,
    binary_entropy,
    feedback_rate_bound,
    g_function,
    max_avg_output_entropy,
    max_output_entropy,
)
from .channels import ChannelMixture, KrausChannel, make_erasure, make_named, stinespring
from .cq import CQEnsemble, Instrument, OneWayLOCC, conditional_entropy, monotone, mutual_information
from .protocol import ProtocolSpec, ProtocolTrace, run_mixture_simulation, run_original, run_purified
from .states import DensityMatrix, HermitianObservable, PureState, SystemLayout, von_neumann_entropy
from .verify import CheckResult

__all__ = [
    "BoundReport", "EnergyConstraint", "InfeasibleConstraint", "binary_entropy", "feedback_rate_bound",
    "g_function", "max_avg_output_entropy", "max_output_entropy", "ChannelMixture", "KrausChannel",
    "make_erasure", "make_named", "stinespring", "CQEnsemble", "Instrument", "OneWayLOCC",
    "conditional_entropy", "monotone", "mutual_information", "ProtocolSpec", "ProtocolTrace",
    "run_mixture_simulation", "run_original", "run_purified", "DensityMatrix", "HermitianObservable",
    "PureState", "SystemLayout", "von_neumann_entropy", "CheckResult",
]
