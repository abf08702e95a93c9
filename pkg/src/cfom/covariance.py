"""Covariance-matrix propagation for linear quadrature dynamics.

Covariances use the doubled convention sigma_ij = <r_i r_j + r_j r_i>
(vacuum = identity).  For a drift A and diffusion N the second moments obey
d sigma/dt = A sigma + sigma A^T + N; propagation over a step uses the exact
map sigma -> Phi sigma Phi^T + Q with Phi = exp(A dt) and
Q = int_0^dt exp(A s) N exp(A^T s) ds.  Q is computed by a Van Loan block
exponential at a scaled-down step followed by doublings, which stays
well-conditioned even when ||A|| dt is as large as 1e6 (a 10 GHz cavity
inside a 0.1 s protocol).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from numpy.typing import NDArray

from .constants import J2
from .errors import UnstableModelError
from .model import LinearDelayModel


def steady_covariance_matrix(
    a: NDArray[np.float64], n: NDArray[np.float64]
) -> NDArray[np.float64]:
    """Solve A sigma + sigma A^T + N = 0 for a stable drift A."""
    eigs = np.linalg.eigvals(a)
    if np.max(eigs.real) >= 0.0:
        raise UnstableModelError(
            f"drift has a non-negative eigenvalue (max Re = {np.max(eigs.real):.3e}); "
            "no steady state"
        )
    sigma = sla.solve_continuous_lyapunov(a, -np.asarray(n))
    return 0.5 * (sigma + sigma.T)


def propagate_lyapunov(
    a: NDArray[np.float64], n: NDArray[np.float64], dt: float
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Exact one-step covariance propagator (Phi, Q) over duration dt.

    Returns Phi = exp(A dt) and Q = int_0^dt exp(A s) N exp(A^T s) ds.  The
    Van Loan block matrix is evaluated at dt / 2^m with m chosen so the
    scaled norm is order one, then (Phi, Q) are squared up by the doubling
    recursion Q(2h) = Phi(h) Q(h) Phi(h)^T + Q(h).
    """
    a = np.asarray(a, dtype=float)
    n = np.asarray(n, dtype=float)
    dim = a.shape[0]
    if dt == 0.0:
        return np.eye(dim), np.zeros_like(a)
    norm = np.linalg.norm(a, ord=1) * dt
    m = max(0, int(np.ceil(np.log2(max(norm, 1e-30) / 0.5))))
    h = dt / (2.0**m)

    block = np.zeros((2 * dim, 2 * dim))
    block[:dim, :dim] = a * h
    block[:dim, dim:] = n * h
    block[dim:, dim:] = -a.T * h
    eb = sla.expm(block)
    phi = eb[:dim, :dim]
    # upper-right block is int_0^h exp(A(h-s)) N exp(-A^T s) ds; multiplying
    # by exp(A^T h) turns it into Q(h)
    q = eb[:dim, dim:] @ sla.expm(a.T * h)
    q = 0.5 * (q + q.T)

    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(m):
            q = phi @ q @ phi.T + q
            q = 0.5 * (q + q.T)
            phi = phi @ phi
    return phi, q


@dataclass
class CovarianceState:
    """Symmetric second-moment matrix with quadrature labels.

    ``comm_weights`` holds the commutator scale of each two-component mode:
    1 for a canonical mode, and the accumulated fraction of the envelope
    norm for a partially integrated temporal mode.  Physicality is
    sigma + i K >= 0 with K the weighted symplectic form.
    """

    sigma: NDArray[np.float64]
    labels: tuple[str, ...]
    comm_weights: dict = field(default_factory=dict)

    def __post_init__(self):
        self.sigma = np.asarray(self.sigma, dtype=float)
        if self.sigma.shape != (len(self.labels), len(self.labels)):
            raise ValueError("sigma shape does not match labels")

    @property
    def dim(self) -> int:
        return self.sigma.shape[0]

    def mode_names(self) -> list[str]:
        return [lab[1:] for lab in self.labels[::2]]

    def comm_matrix(self) -> NDArray[np.float64]:
        k = np.zeros_like(self.sigma)
        for j, name in enumerate(self.mode_names()):
            w = self.comm_weights.get(name, 1.0)
            k[2 * j : 2 * j + 2, 2 * j : 2 * j + 2] = w * J2
        return k

    def physicality_margin(self) -> float:
        """Smallest eigenvalue of sigma + i K; >= 0 for a physical state."""
        h = self.sigma.astype(complex) + 1j * self.comm_matrix()
        return float(np.min(np.linalg.eigvalsh(h)))

    def index(self, label: str) -> int:
        return self.labels.index(label)

    def block(self, names: list[str]) -> NDArray[np.float64]:
        idx = [self.index(lab) for name in names for lab in (f"X{name}", f"Y{name}")]
        return self.sigma[np.ix_(idx, idx)]

    def keep(self, names: list[str]) -> "CovarianceState":
        """Restrict to the given modes (trace out the rest)."""
        idx = [self.index(lab) for name in names for lab in (f"X{name}", f"Y{name}")]
        labels = tuple(self.labels[i] for i in idx)
        weights = {n: self.comm_weights.get(n, 1.0) for n in names}
        return CovarianceState(self.sigma[np.ix_(idx, idx)], labels, weights)

    def extend(self, name: str, block: NDArray[np.float64], weight: float = 1.0) -> "CovarianceState":
        """Append an uncorrelated two-quadrature mode."""
        d = self.dim
        sigma = np.zeros((d + 2, d + 2))
        sigma[:d, :d] = self.sigma
        sigma[d:, d:] = block
        labels = self.labels + (f"X{name}", f"Y{name}")
        weights = dict(self.comm_weights)
        weights[name] = weight
        return CovarianceState(sigma, labels, weights)


def mechanical_occupation(state: CovarianceState) -> float:
    """Phonon number from the mechanical block, (sig_XX + sig_YY)/4 - 1/2."""
    i = state.index("Xm")
    j = state.index("Ym")
    return 0.25 * (state.sigma[i, i] + state.sigma[j, j]) - 0.5


def model_steady_state(model: LinearDelayModel) -> CovarianceState:
    """Steady covariance of a zero-delay model (Lyapunov solve)."""
    sigma = steady_covariance_matrix(model.drift(), model.diffusion())
    return CovarianceState(sigma, model.state_labels)
