"""Heat determinants of Laplace-type operators on model manifolds."""

from .asymptotics import a_coeffs, b_coeffs, B_coeffs, coeff_set, gaussian_moment, predicted_K, prefactor
from .errors import (
    ConfigError,
    DomainError,
    EmptyBasisError,
    FitError,
    HeatdetError,
    InputError,
    TruncationError,
)
from .fitkit import FitResult, fit, normalize, recommend_window
from .invariants import (
    DetValue,
    c_invariant,
    det_small,
    det_sum_expansion,
    heat_determinant,
    heat_determinant_many,
    k_from_spectral,
    phi_tilde,
    scalar_heat_determinant,
    zeta,
)
from .kernel import heat_content, heat_kernel, heat_trace, mixed_tensor, scalar_mixed_tensor, tail_bound
from .models import Kind, geodesic, make_bundle, make_model
from .quadrature import build_rule, integrate, integrate_pair
from .spectrum import enumerate_basis, eval_mode, gram_check

__version__ = "0.1.0"
