"""Sizing: parameter spaces with tied devices, figures of merit, Gaussian
process surrogates, expected improvement, and the optimization loop."""

from .space import (DEFAULT_BOUNDS, Parameter, ParameterSpace, SpaceError,  # noqa: F401
                    Tie, space_from_entity, space_from_netlist)
from .fom import (FoMConfig, FoMError, MetricTerm, comparator_fom,  # noqa: F401
                  compute_fom, estimate_norms, opamp_fom)
from .gp import (GPError, GPModel, Hyperparams, gp_fit, gp_predict,  # noqa: F401
                 log_marginal_likelihood, median_heuristic)
from .acquisition import expected_improvement, propose_next  # noqa: F401
from .bo import (BOConfig, BOError, BOResult, EvaluationRecord,  # noqa: F401
                 load_snapshot, run_bo, save_snapshot, write_trajectory)
