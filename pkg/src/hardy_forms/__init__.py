"""Numerical Hardy inequalities for Dirichlet forms on finite state spaces and grids."""

from .core import (GraphForm, energy, energy_bilinear, gamma, apply_form_operator, restrict,
                   is_transient, green, random_form, form_to_dict, form_from_dict)
from .errors import (RecurrentFormError, ConvergenceError, DivergenceError,
                     NotSubcriticalError, MarginError)
from .spectral import (SpectralResult, pencil_min, largest_eig_potential_op,
                       best_hardy_constant, resolvent_markov_check)
from .certify import (HardyCertificate, check_supersolution, neumann_weight,
                      riesz_certificate, weight_from_subcritical)
from .transform import ground_state_form, is_markovian_form

__version__ = "0.1.0"
