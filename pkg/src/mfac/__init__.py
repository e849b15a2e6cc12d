"""Model-free adaptive control on the equivalent dynamic linearization model."""

from .analysis import (ClosedLoopPolynomial, StabilityReport, build_T, lambda_sweep, poles,
                       polynomial_roots, static_error_power, static_error_ramp)
from .controller import (ControlDecision, ControllerConfig, approximate_gain, decide,
                         iterative_law, minimize_constrained, minimize_polynomial_cost,
                         one_step_law)
from .edlm import (History, IncrementWindow, PartialDerivativeTable, PGVector, PseudoOrders,
                   predict_increment, taylor_pg, unmodeled_dynamics)
from .errors import *  # noqa: F401,F403
from .estimator import EstimatorConfig, EstimatorState, ResetPolicy, update
from .harness import (Metrics, Scenario, SimTrace, compute_metrics, export_csv, import_csv,
                      load_scenario, run, scenario_metrics)
from .plants import Plant, Trajectory, make_plant, trajectory_eval

__version__ = "0.1.0"
