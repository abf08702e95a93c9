"""Stability of delay models via the characteristic quasi-polynomial.

The characteristic function is

    chi(s) = det( s (I + D e^{-s tau}) - A0 - A1 e^{-s tau} ),

and the model is stable iff (i) the neutral condition holds (spectral
radius of D below one, so the difference operator is stable) and (ii)
chi has no zeros in the closed right half-plane.  The zero count is taken
by the argument principle: the winding number of the normalized function

    phi(s) = det( (s I - (A0 + A1 e^{-s tau}) (I + D e^{-s tau})^{-1})
                  / (s + c) )

along a closed D-shaped contour (imaginary axis plus a right half-circle;
all enclosed singularities of phi are zeros of chi).  For a neutral model
the root chains accumulate on the vertical line Re s = ln(rho(D)) / tau,
so the axis must be sampled at that distance scale or finer; the sampler
does this, clusters around every known resonance, and a dip-probing
refinement splits any segment that hides a deep |phi| minimum.  Zero-delay
models take a plain eigenvalue route unless the winding method is forced.

The contour is truncated at a radius beyond which the loop cannot sustain
a zero: both cavity reflections are passive (sub-unity magnitude at every
real frequency), so a right-half-plane zero needs mechanical gain, which
rolls off far above the mechanical and coupling scales.  The truncation
radius leaves generous margin over every such scale; push ``omega_max``
higher to widen the certified band at proportional cost.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import MarginalStabilityError
from .model import LinearDelayModel

_NEUTRAL_TOL = 1e-9
_CHI_ZERO_TOL = 1e-12
_CHUNK = 200_000


@dataclass(frozen=True)
class StabilityReport:
    """Outcome of the stability test.

    ``margin`` is the smallest |phi| encountered on the contour (or the
    scaled distance of the rightmost eigenvalue from the axis for the
    eigenvalue route); it is diagnostic only.
    """

    stable: bool
    winding_number: int
    neutral_ok: bool
    margin: float
    method: str = "winding"

    def __str__(self):
        return (
            f"stable={self.stable} rhp_zeros={self.winding_number} "
            f"neutral_ok={self.neutral_ok} margin={self.margin:.3e} [{self.method}]"
        )


def _ode_drift(model: LinearDelayModel) -> NDArray[np.float64]:
    if np.any(model.d_mat):
        return np.linalg.solve(np.eye(model.dim) + model.d_mat, model.a0 + model.a1)
    return model.a0 + model.a1


def _eig_report(model: LinearDelayModel) -> StabilityReport:
    eigs = np.linalg.eigvals(_ode_drift(model))
    k = int(np.argmax(eigs.real))
    max_re = float(eigs.real[k])
    # marginality is judged against the critical eigenvalue's own magnitude,
    # not the stiffest rate in the system
    scale = max(abs(eigs[k]), 1e-16 * float(np.max(np.abs(eigs))), 1e-300)
    if abs(max_re) < 1e-13 * scale:
        raise MarginalStabilityError(
            f"rightmost eigenvalue {max_re:.3e} is within tolerance of the "
            "imaginary axis; stability is numerically ambiguous"
        )
    n_rhp = int(np.sum(eigs.real > 0.0))
    return StabilityReport(
        stable=(n_rhp == 0),
        winding_number=n_rhp,
        neutral_ok=True,
        margin=abs(max_re) / scale,
        method="eig",
    )


def stability_eig_oracle(a: NDArray[np.float64]) -> bool:
    """Plain eigenvalue verdict for a drift matrix (test oracle)."""
    return bool(np.max(np.linalg.eigvals(a).real) < 0.0)


def _phi_values(
    model: LinearDelayModel, s: NDArray[np.complex128], c: float
) -> NDArray[np.complex128]:
    """Normalized characteristic function at a batch of complex points."""
    eye = np.eye(model.dim)
    if model.tau > 0:
        ph = np.exp(-s * model.tau)[:, None, None]
        dd = eye + model.d_mat * ph
        aa = model.a0 + model.a1 * ph
    else:
        dd = np.broadcast_to(eye, (len(s), model.dim, model.dim)).astype(complex)
        aa = np.broadcast_to(
            (model.a0 + model.a1).astype(complex), (len(s), model.dim, model.dim)
        )
    t = np.linalg.solve(np.swapaxes(dd, -1, -2), np.swapaxes(aa, -1, -2))
    t = np.swapaxes(t, -1, -2)  # A (I + D)^-1
    m = (s[:, None, None] * eye - t) / (s + c)[:, None, None]
    return np.linalg.det(m)


def _phi_chunked(model, s, c):
    out = np.empty(len(s), dtype=complex)
    for k in range(0, len(s), _CHUNK):
        out[k : k + _CHUNK] = _phi_values(model, s[k : k + _CHUNK], c)
    return out


def _chain_distance(model: LinearDelayModel) -> float:
    """Distance of the neutral root chains from the imaginary axis."""
    if model.tau <= 0 or not np.any(model.d_mat):
        return np.inf
    rho = float(np.max(np.abs(np.linalg.eigvals(model.d_mat))))
    if rho <= 0.0:
        return np.inf
    if rho >= 1.0:
        return 0.0
    return -np.log(rho) / model.tau


def _radii(model: LinearDelayModel, fast: bool) -> float:
    feats = [f for f in model.meta.get("features", []) if f > 0]
    if not feats:
        feats = [abs(x) for x in np.linalg.eigvals(_ode_drift(model)) if abs(x) > 0]
        feats = feats or [1.0]
    g = model.meta.get("g", 0.0)
    base = max(feats)
    if fast:
        r = max(30.0 * base, 10.0 * g)
        if model.tau > 0:
            r = max(r, 8.0 * np.pi / model.tau)
    else:
        r = max(200.0 * base, 40.0 * g)
        if model.tau > 0:
            r = max(r, 24.0 * np.pi / model.tau)
    return r


def _axis_grid(
    model: LinearDelayModel, radius: float, max_points: int
) -> NDArray[np.float64]:
    """Frequency samples on [0, radius] clustered around known features and,
    for delayed models, dense enough to resolve the neutral root chains."""
    pts = [0.0, radius]
    feats = [f for f in model.meta.get("features", []) if 0 < f < radius]
    if not feats:
        eigs = np.linalg.eigvals(_ode_drift(model))
        feats = [abs(x) for x in eigs.imag if 0 < abs(x) < radius]
    scales = [model.meta.get("gamma_m", 0.0), model.meta.get("kappa_c", 0.0)]
    w_min = max(min(feats or [radius * 1e-6]) * 1e-8, radius * 1e-14)
    pts.extend(np.geomspace(w_min, radius, 200).tolist())
    for f in feats:
        local = np.geomspace(max(f * 1e-10, w_min / 10.0), f * 0.9, 60)
        pts.extend((f - local).tolist())
        pts.extend((f + local).tolist())
        pts.append(f)
    for sc in scales:
        if 0 < sc < radius:
            pts.extend(np.geomspace(sc * 1e-3, min(sc * 1e3, radius), 30).tolist())
    if model.tau > 0:
        period = 2.0 * np.pi / model.tau
        d_chain = _chain_distance(model)
        step = min(period / 6.0, d_chain / 4.0)
        n = int(np.ceil(radius / step)) + 1
        n = min(n, max_points // 3)
        pts.extend(np.linspace(0.0, radius, n).tolist())
    w = np.unique(np.asarray(pts))
    return w[(w >= 0.0) & (w <= radius)]


def _arc_grid(model: LinearDelayModel, radius: float) -> NDArray[np.float64]:
    """Angles theta in (-pi/2, pi/2) for the half-circle s = R e^{i theta}."""
    base = np.linspace(-np.pi / 2, np.pi / 2, 241)
    if model.tau > 0:
        # boundary layers near the axis where the delay terms still matter
        layer = min(14.0 / (radius * model.tau), np.pi / 2)
        period_theta = 2.0 * np.pi / (radius * model.tau)
        d_chain = _chain_distance(model)
        step_theta = min(period_theta / 6.0, d_chain / (4.0 * radius))
        n = int(np.ceil(layer / max(step_theta, 1e-12))) + 16
        n = min(n, 300_000)
        off = layer * np.linspace(0.0, 1.0, n) ** 1.5
        base = np.concatenate([base, np.pi / 2 - off, -np.pi / 2 + off])
    return np.unique(base)


def _winding_report(
    model: LinearDelayModel, radius: float, max_points: int
) -> StabilityReport:
    # neutral condition: the difference operator must be a contraction
    rho_d = (
        float(np.max(np.abs(np.linalg.eigvals(model.d_mat))))
        if np.any(model.d_mat)
        else 0.0
    )
    neutral_ok = rho_d < 1.0 - _NEUTRAL_TOL
    if not neutral_ok:
        return StabilityReport(False, -1, False, np.nan, method="winding")

    c = 2.0 * max(np.linalg.norm(model.a0, 2), 1e-300)

    # closed contour: down the axis from +iR to -iR, then the right arc back
    ax = _axis_grid(model, radius, max_points)
    th = _arc_grid(model, radius)
    s_axis = 1j * np.concatenate([ax[::-1], -ax[1:]])
    s_arc = radius * np.exp(1j * th)
    pts = np.concatenate([s_axis, s_arc, s_axis[:1]])
    phi = _phi_chunked(model, pts, c)

    # midpoint-probing refinement: every active segment is split at its
    # midpoint; a segment's children stay active while either half-step
    # turns too fast, the magnitude jumps, or the midpoint reveals a dip
    # the endpoints could not see.  Anomalies are chased down to a length
    # floor; a dip surviving at the floor is an on-contour zero candidate.
    def midpoints(a, b):
        mid = 0.5 * (a + b)
        on_arc = np.abs(np.abs(mid) - radius) < 0.5 * radius
        on_arc &= np.abs(mid.real) > 1e-12 * radius
        mid[on_arc] *= radius / np.abs(mid[on_arc])
        return mid

    def anomalous(pa, pm, pb):
        d1 = np.abs(np.angle(pm / pa))
        d2 = np.abs(np.angle(pb / pm))
        am, aa, ab = np.abs(pm), np.abs(pa), np.abs(pb)
        j1 = np.abs(np.log((am + 1e-300) / (aa + 1e-300)))
        j2 = np.abs(np.log((ab + 1e-300) / (am + 1e-300)))
        dipped = am < 0.3 * np.sqrt(aa * ab)
        return (d1 > np.pi / 4) | (d2 > np.pi / 4) | (j1 > 0.7) | (j2 > 0.7) | dipped

    active = np.arange(len(pts) - 1)
    converged = False
    for _ in range(200):
        if len(active) == 0:
            converged = True
            break
        if len(pts) > max_points:
            break
        a, b = pts[active], pts[active + 1]
        mid = midpoints(a, b)
        phim = _phi_chunked(model, mid, c)
        flagged = anomalous(phi[active], phim, phi[active + 1])
        seg_scale = np.maximum(np.abs(a), 1.0)
        chase = flagged & (np.abs(b - a) > 2e-13 * seg_scale)
        # insert every probed midpoint; children of chased parents stay active
        order = np.argsort(active)
        ins_at = active[order] + 1
        pts = np.insert(pts, ins_at, mid[order])
        phi = np.insert(phi, ins_at, phim[order])
        # after insertion, parent k (sorted position j) owns segments
        # active[order][j] + j and + j + 1 in the new arrays
        shifted = active[order] + np.arange(len(order))
        keep = chase[order]
        active = np.concatenate([shifted[keep], shifted[keep] + 1])

    # dip-probed segments shrink to min_len at a true near-axis zero; judge
    # those by the estimated distance to the zero rather than by |phi|
    absphi = np.abs(phi)
    margin = float(absphi.min())
    k = int(np.argmin(absphi))
    lo, hi = max(k - 1, 0), min(k + 1, len(pts) - 1)
    ds = abs(pts[hi] - pts[lo])
    slope = abs(phi[hi] - phi[lo]) / ds if ds > 0 else 0.0
    dist = margin / slope if slope > 0 else np.inf
    if dist < _CHI_ZERO_TOL * max(abs(pts[k]), 1.0):
        raise MarginalStabilityError(
            f"stability contour passes within {dist:.1e} rad/s of a "
            "characteristic zero; verdict is marginal"
        )
    if not converged:
        raise MarginalStabilityError(
            "winding refinement exhausted its point budget before the phase "
            "was fully resolved; verdict is marginal"
        )
    total = float(np.angle(phi[1:] / phi[:-1]).sum())
    n_rhp = total / (2.0 * np.pi)
    if abs(n_rhp - round(n_rhp)) > 0.2:
        raise MarginalStabilityError(
            f"winding number did not converge to an integer (got {n_rhp:.3f})"
        )
    n_rhp = int(round(n_rhp))
    if n_rhp < 0:
        raise MarginalStabilityError(
            f"winding produced a negative zero count ({n_rhp}); phase tracking "
            "is unresolved"
        )
    return StabilityReport(
        stable=(n_rhp == 0),
        winding_number=n_rhp,
        neutral_ok=True,
        margin=margin,
        method="winding",
    )


def stability_check(
    model: LinearDelayModel,
    method: str = "auto",
    omega_max: float | None = None,
    fast: bool = False,
    max_points: int = 3_000_000,
) -> StabilityReport:
    """Stability verdict for a delay model.

    "auto" uses the eigenvalue route for plain ODE models and the
    argument-principle winding for delayed ones; "winding" forces the
    contour method (the cross-validation suite does this), "eig" forces
    the eigenvalue route.  ``fast`` shrinks the contour radius for use
    inside optimization loops; final records re-check at the default
    radius.  Marginal verdicts raise instead of returning a boolean.
    """
    if method == "auto":
        method = "eig" if model.is_ode else "winding"
    if method == "eig":
        if not model.is_ode:
            raise ValueError("eigenvalue stability route requires a tau = 0 model")
        return _eig_report(model)
    if method != "winding":
        raise ValueError(f"unknown stability method '{method}'")
    radius = omega_max if omega_max is not None else _radii(model, fast)
    return _winding_report(model, radius, max_points)
