"""Average predictor feedback for switched linear systems with input delay.

Design, simulate and certify delay-compensating feedback laws for plants
that switch between linear modes under dwell-time constraints, where the
input reaches the plant a fixed ``D`` seconds late and the future switching
signal is unknown.
"""

from ._backend import BACKEND
from .control import (AveragePredictor, AveragingPredictors, ExactOracle,
                      OpenLoop, exact_predictor, predict_mode, predict_short,
                      residual_w, u1, u2, u_exact)
from .design import DesignResult, chebyshev_center, mean_fallback, synthesize
from .harness import (ConfigError, ReproductionReport, RunSummary, Scenario,
                      ablate_dwell, mismatch_sweep, reproduce_paper, run,
                      three_mode_design, three_mode_dwell, three_mode_plant)
from .margins import (MarginConstants, MarginReport, eps_bar_star, eps_star,
                      mismatch_bound, mismatch_bound_hat, nu_constants,
                      rate_pipeline)
from .numerics import (NormKind, expm, induced_norm, is_hurwitz, pole_place,
                       solve_lyapunov, zoh_discretize)
from .plant import (InputHistory, SwitchedPlantSpec, Trajectory,
                    history_integral, simulate, step)
from .switching import (DwellSpec, SwitchingSignal, generate, mode_at,
                        signal_from_table, signal_to_table, tau, tau0,
                        validate)

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "__version__",
    # numerics
    "NormKind", "expm", "zoh_discretize", "solve_lyapunov", "pole_place",
    "induced_norm", "is_hurwitz",
    # switching
    "DwellSpec", "SwitchingSignal", "mode_at", "tau0", "tau", "generate",
    "validate", "signal_to_table", "signal_from_table",
    # plant
    "SwitchedPlantSpec", "InputHistory", "Trajectory", "step", "simulate",
    "history_integral",
    # control
    "AveragePredictor", "AveragingPredictors", "ExactOracle", "OpenLoop",
    "predict_short", "predict_mode", "u1", "u2", "exact_predictor", "u_exact",
    "residual_w",
    # design
    "DesignResult", "chebyshev_center", "mean_fallback", "synthesize",
    # margins
    "MarginConstants", "MarginReport", "mismatch_bound", "mismatch_bound_hat",
    "nu_constants", "eps_star", "eps_bar_star", "rate_pipeline",
    # harness
    "Scenario", "RunSummary", "ConfigError", "run", "ablate_dwell",
    "mismatch_sweep", "reproduce_paper", "ReproductionReport",
    "three_mode_plant", "three_mode_dwell", "three_mode_design",
]
