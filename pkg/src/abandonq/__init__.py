"""Steady-state evaluation and capacity sizing for single-server queues
with abandonment until end of service."""

from .chain import (EVAL_SCHEME, FiniteChain, StationaryVector, build_chain,
                    ergodicity_probe, estimate_r_star, stationary_distribution,
                    stationary_vector)
from .distributions import (Deterministic, Erlang, Exponential, Gamma, MixtureExponential,
                            PointMass, ServiceDist, TruncatedMixtureExponential, Uniform,
                            UniformPatience, fit_exponential, fit_hyperexp2, ks_statistic,
                            moment_match_hyperexp2, validate_assumption1)
from .errors import (AbandonqError, ConfigError, DegenerateLp, Inadmissible, Infeasible,
                     InfeasibleBox, NodeLimit, NotConverged, NumericalFailure, OutOfDomain,
                     QuadratureFailure, SchemaError, ScvBelowOne, SingularSystem,
                     UnboundedVariation)
from .kernel import KernelContext, kernel_eval, kernel_grid
from .measures import (AbandonmentProb, AvgQueueLength, Custom, OfferedSojourn, OfferedWait,
                       TailWait, WaitingAbandonment, expected_measure, finite_measures, g_eval,
                       validate_assumption23)
from .model import QueueSpec

__version__ = "0.1.0"
