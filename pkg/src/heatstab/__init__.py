"""Sampled-data output feedback stabilization of 1-D heat equations with a potential."""

__version__ = "0.1.0"

from .spectral import (ModelConfig, SpectralModel, build_model, decay_integral, duhamel_const,
                       inject, mode, observe, project, semigroup_apply)
from .gram import (CalibratedConstant, GramData, calibrate_C0, check_interpolation_averages,
                   gram_data, gram_matrix, gram_spectrum, tau, theta, theta_sequence)
from .minnorm import (InpProblem, MinNormSolution, SnpProblem, inp_bounds, snp_bounds, solve_inp,
                      solve_snp)
from .feedback import (FeedbackLaw, FeedbackParameters, bound_curves, operator_norm,
                       select_parameters, synthesize, zero_law)
from .closed_loop import Trajectory, simulate, verify_decay

__all__ = [
    "ModelConfig", "SpectralModel", "build_model", "decay_integral", "duhamel_const", "inject",
    "mode", "observe", "project", "semigroup_apply",
    "CalibratedConstant", "GramData", "calibrate_C0", "check_interpolation_averages",
    "gram_data", "gram_matrix", "gram_spectrum", "tau", "theta", "theta_sequence",
    "InpProblem", "MinNormSolution", "SnpProblem", "inp_bounds", "snp_bounds", "solve_inp",
    "solve_snp",
    "FeedbackLaw", "FeedbackParameters", "bound_curves", "operator_norm", "select_parameters",
    "synthesize", "zero_law",
    "Trajectory", "simulate", "verify_decay",
]
