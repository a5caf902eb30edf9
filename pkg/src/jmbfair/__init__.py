"""Max-min fair precoding for multi-user MISO downlinks with imperfect CSIT.

A common stream decoded by every user (and removed by successive interference
cancellation) is added on top of the private streams.  Precoders are
optimized over a sampled approximation of the average rates by alternating
between MMSE receivers, a water-filling split of the common rate and a convex
precoder update solved with a built-in interior-point method.
"""

__version__ = "0.1.0"

from .model import (  # noqa: E402
    Channel,
    Decaying,
    Fixed,
    RngStream,
    SampleSet,
    Scenario,
    draw_estimate,
    draw_sample_set,
    draw_true_channel,
    effective_error_variance,
)
from .mmse import Precoder  # noqa: E402
from .partition import PartitionResult, lp_oracle, waterfill  # noqa: E402
from .cone_solver import ConvexQcqp, SolverReport, SolverStatus, assemble, solve  # noqa: E402
from .ao import AoConfig, AoError, AoResult, Init, Mode, ao_solve  # noqa: E402
from .harness import (  # noqa: E402
    ErRecord,
    ExperimentSpec,
    achieved_min_rate,
    draw_instance,
    run_convergence,
    run_ergodic,
)

__all__ = [
    "__version__",
    "Channel", "Decaying", "Fixed", "RngStream", "SampleSet", "Scenario",
    "draw_estimate", "draw_sample_set", "draw_true_channel", "effective_error_variance",
    "Precoder",
    "PartitionResult", "lp_oracle", "waterfill",
    "ConvexQcqp", "SolverReport", "SolverStatus", "assemble", "solve",
    "AoConfig", "AoError", "AoResult", "Init", "Mode", "ao_solve",
    "ErRecord", "ExperimentSpec", "achieved_min_rate", "draw_instance", "run_convergence",
    "run_ergodic",
]
