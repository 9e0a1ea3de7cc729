"""Finite-volume simulation and estimate auditing for a chemotaxis-consumption
model with logistic growth and constant Dirichlet chemoattractant data."""
from .core import (Dirichlet, Field, Grid, NoFlux, NonFiniteFieldError, divergence, face_energy,
                   grad_face, grad_lp_norm, grad_magnitude, integrate, laplacian, lp_norm,
                   v_seminorm)
from .elliptic import (ConvergenceFailure, EllipticError, EllipticEstimateReport,
                       EllipticSolution, MaximumPrincipleViolation, elliptic_report, solve_v)
from .evolve import (BlowUpError, ModelParams, PositivityError, SimState, SimulationError,
                     StepControl, Trajectory, compute_dt, initial_state, simulate, step)
from .steady import (SteadyBoundReport, SteadyState, check_instability_trivial,
                     check_trivial_steady, find_steady)
from .analysis import (DecayRateParams, DifferenceDiagnostics, LogisticParams,
                       certified_threshold, convergence_experiment, decay_functional,
                       difference_diagnostics, fit_decay_rate, logistic_exact,
                       ode_comparison_bound, predicted_rate, subsolution, threshold_sweep)
from .audit import InvariantReport, audit_snapshot, audit_trajectory
from .io import ConfigError, RunConfig, emit_plot_data, load_config, read_snapshot, write_snapshot

__version__ = "0.1.0"
