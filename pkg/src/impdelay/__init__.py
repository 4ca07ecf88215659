"""Impulsive control of delayed systems: measures, simulation, approximation and optimality checks."""

from .approximation import density_sequence, filippov_bound, mollify, switch_pulse_sequence
from .auxiliary import AuxiliaryControl, from_auxiliary, simulate_auxiliary, to_auxiliary
from .dynamics import BVTrajectory, gronwall_bound, probe_drift, residual, simulate
from .errors import (ConfigurationError, DivergenceError, EvaluationError, HypothesisWarning, ImpDelayError,
                     InfeasibilityError, UndefinedDirectionError)
from .expressions import parse_expression
from .measures import Cone, VectorMeasure, integrate, radon_nikodym, weakstar_gap
from .pmp import PMPCertificate, certify, solve_adjoint
from .problem import ControlPath, ControlSet, ImpulsiveControl, InitialSet, ProblemSpec, TargetSet
from .scenario import builtin_scenario, load_scenario, probe_hypotheses
from .transcription import Transcription, optimize, optimize_and_certify

__version__ = "0.1.0"
