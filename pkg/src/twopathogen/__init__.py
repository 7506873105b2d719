"""Two-pathogen SIR dynamics, stochastic simulation and Bayesian season fits."""

from .errors import EXIT_CODES, NonConvergenceWarning, TwoPathogenError
from .model import (ModelParams, Regime, Stability, Trajectory, classify_regime, dfe_stability,
                    equilibria, integrate, r0, replacement_numbers)
from .observation import (LogPosterior, ObservationWindow, PriorSpec, ThetaVector,
                          expected_weekly_incidence)
from .inference import FitReport, PosteriorSample, SamplerConfig, fit_report, run_chains
from .stochastic import ensemble, gillespie_run

__version__ = "0.1.0"
