"""Spherical-harmonic and SO(3) Fourier machinery (float64 reference path)."""
from .correlate import (
    rotate_s2_coefficients,
    rotate_s2_signal,
    rotate_signal,
    rotate_so3_coefficients,
    rotate_so3_signal,
    s2_correlate,
    so3_correlate,
)
from .transforms import (
    S2Coefficients,
    SO3Coefficients,
    SO3FeatureMap,
    coeff_inner_s2,
    coeff_inner_so3,
    grid_inner_s2,
    grid_inner_so3,
    load_coefficients,
    random_s2_coefficients,
    random_so3_coefficients,
    real_part,
    save_coefficients,
    sht_forward,
    sht_inverse,
    so3_ft_forward,
    so3_ft_inverse,
)
from .wigner import (
    alpha_grid,
    beta_grid,
    quadrature_weights,
    sph_basis_table,
    wigner_D_blocks,
    wigner_D_matrix,
    wigner_d_matrix,
    wigner_d_stack,
    wigner_d_table,
)

__all__ = [
    "S2Coefficients",
    "SO3Coefficients",
    "SO3FeatureMap",
    "alpha_grid",
    "beta_grid",
    "coeff_inner_s2",
    "coeff_inner_so3",
    "grid_inner_s2",
    "grid_inner_so3",
    "load_coefficients",
    "quadrature_weights",
    "random_s2_coefficients",
    "random_so3_coefficients",
    "real_part",
    "rotate_s2_coefficients",
    "rotate_s2_signal",
    "rotate_signal",
    "rotate_so3_coefficients",
    "rotate_so3_signal",
    "s2_correlate",
    "save_coefficients",
    "sht_forward",
    "sht_inverse",
    "so3_correlate",
    "so3_ft_forward",
    "so3_ft_inverse",
    "sph_basis_table",
    "wigner_D_blocks",
    "wigner_D_matrix",
    "wigner_d_matrix",
    "wigner_d_stack",
    "wigner_d_table",
]
