"""Physical constants (CODATA 2018) and quadrature-ordering conventions.

All dynamical quantities in this package are expressed in angular-frequency
units (rad/s).  States are ordered (X_m, Y_m, X_c, Y_c[, X_A, Y_A]); the
covariance convention is "doubled", sigma_ij = <r_i r_j + r_j r_i>, so the
vacuum covariance is the identity matrix.
"""

from __future__ import annotations

import numpy as np
from numpy.typing import NDArray

HBAR = 1.054571817e-34  # J s (exact, derived from the 2018 definition of h)
KB = 1.380649e-23  # J/K (exact)
PLANCK_H = 6.62607015e-34  # J s (exact)

TWO_PI = 2.0 * np.pi

# Single-mode symplectic form: [X, Y] = i corresponds to sigma + i*J >= 0.
J2 = np.array([[0.0, 1.0], [-1.0, 0.0]])


def symplectic_form(n_modes: int) -> NDArray[np.float64]:
    """Block-diagonal symplectic form for ``n_modes`` bosonic modes."""
    J = np.zeros((2 * n_modes, 2 * n_modes))
    for k in range(n_modes):
        J[2 * k : 2 * k + 2, 2 * k : 2 * k + 2] = J2
    return J
