"""Frequency-domain steady state: transfer matrix, spectra, phonon number.

Fourier convention u(omega) = int u(t) exp(+i omega t) dt, under which the
delay model becomes

    -i w (I + D e^{i w tau}) u = (A0 + A1 e^{i w tau}) u
                                 + (sum_n C_n e^{i n w tau_s}) u_in,

so u = M(w) u_in with
M(w) = -[i w (I + D e^{i w tau}) + A0 + A1 e^{i w tau}]^-1 sum_n C_n e^{i n w tau_s}.

Single-sided spectra are S_u = |M|^2 S_in entrywise, and the phonon
occupation is n = 1/2 int_0^inf dw/2pi (S_Xm + S_Ym) - 1/2, evaluated by
adaptive Gauss-Kronrod panels with a linear core across the mechanical
resonance, geometric approach panels, logarithmic panels to 10 kappa_c and
an analytic 1/w^2 tail beyond.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .covariance import mechanical_occupation, model_steady_state
from .errors import QuadratureError, UnstableModelError
from .model import LinearDelayModel
from .stability import StabilityReport, stability_check

# Gauss-Kronrod 7-15 nodes and weights on [-1, 1]
_XGK = np.array([
    -0.991455371120813, -0.949107912342759, -0.864864423359769,
    -0.741531185599394, -0.586087235467691, -0.405845151377397,
    -0.207784955007898, 0.0,
    0.207784955007898, 0.405845151377397, 0.586087235467691,
    0.741531185599394, 0.864864423359769, 0.949107912342759,
    0.991455371120813,
])
_WGK = np.array([
    0.022935322010529, 0.063092092629979, 0.104790010322250,
    0.140653259715525, 0.169004726639267, 0.190350578064785,
    0.204432940075298, 0.209482141084728,
    0.204432940075298, 0.190350578064785, 0.169004726639267,
    0.140653259715525, 0.104790010322250, 0.063092092629979,
    0.022935322010529,
])
_WG7 = np.array([
    0.129484966168870, 0.279705391489277, 0.381830050505119,
    0.417959183673469,
    0.381830050505119, 0.279705391489277, 0.129484966168870,
])
_G7_IDX = np.arange(1, 15, 2)


@dataclass(frozen=True)
class FrequencyResponse:
    """Transfer matrix M(omega) from input channels to state quadratures."""

    omega: float
    m: NDArray[np.complex128]


def response_matrix(
    model: LinearDelayModel, omegas: NDArray[np.float64]
) -> NDArray[np.complex128]:
    """Batched M(omega) with shape (len(omegas), dim, n_in)."""
    w = np.atleast_1d(np.asarray(omegas, dtype=float))
    eye = np.eye(model.dim)
    if model.tau > 0.0:
        ph = np.exp(1j * w * model.tau)[:, None, None]
        phs = np.exp(1j * w * model.tau_s)[:, None, None]
        bracket = (
            1j * w[:, None, None] * (eye + model.d_mat * ph)
            + model.a0
            + model.a1 * ph
        )
        cmat = model.c0 + model.c1 * phs + model.c2 * phs**2
        cmat = np.broadcast_to(cmat, (len(w), model.dim, model.n_in))
    else:
        bracket = 1j * w[:, None, None] * eye + model.a0
        cmat = np.broadcast_to(model.c0, (len(w), model.dim, model.n_in))
    return -np.linalg.solve(bracket, cmat)


def transfer_matrix(model: LinearDelayModel, omega: float) -> FrequencyResponse:
    """M(omega) at a single frequency.

    Raises if the bracket is singular, which happens only when omega sits
    exactly on the system's spectrum.
    """
    try:
        m = response_matrix(model, np.array([omega]))[0]
    except np.linalg.LinAlgError as exc:
        raise UnstableModelError(
            f"transfer-matrix bracket singular at omega = {omega:.6e} rad/s "
            "(frequency sits on a system pole)"
        ) from exc
    return FrequencyResponse(omega=float(omega), m=m)


def _psd_rows(
    model: LinearDelayModel, omegas: NDArray[np.float64], rows
) -> NDArray[np.float64]:
    m = response_matrix(model, omegas)
    psd = model.noise_psd
    return np.einsum("krj,j->kr", np.abs(m[:, rows, :]) ** 2, psd)


def quadrature_psd(
    model: LinearDelayModel,
    omega,
    stability_report: StabilityReport | None = None,
) -> NDArray[np.float64]:
    """Single-sided symmetric spectra of all state quadratures at ``omega``.

    Refuses unstable models; pass a precomputed ``stability_report`` to skip
    the (possibly expensive) re-check.
    """
    if stability_report is None:
        stability_report = stability_check(model)
    if not stability_report.stable:
        raise UnstableModelError(
            f"model is unstable ({stability_report}); spectra are undefined"
        )
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    s = _psd_rows(model, w, list(range(model.dim)))
    return s[0] if np.ndim(omega) == 0 else s


def _peak_and_width(model: LinearDelayModel, rows) -> tuple[float, float]:
    """Locate the dominant mechanical-spectrum peak and its FWHM by scan."""
    omega_m = model.meta.get("omega_m")
    if omega_m is None:
        eigs = np.linalg.eigvals(model.a0)
        omega_m = float(np.max(np.abs(eigs.imag))) or 1.0
    grid = omega_m * np.logspace(np.log10(0.3), np.log10(3.0), 601)
    vals = _psd_rows(model, grid, rows).sum(axis=1)
    w_star = grid[int(np.argmax(vals))]
    span = w_star * 0.02
    for _ in range(14):
        local = np.linspace(w_star - span, w_star + span, 21)
        local = local[local > 0]
        lv = _psd_rows(model, local, rows).sum(axis=1)
        w_star = local[int(np.argmax(lv))]
        span *= 0.15
    s_peak = float(_psd_rows(model, np.array([w_star]), rows).sum())

    def half_cross(direction: float) -> float:
        d = w_star * 1e-9
        for _ in range(80):
            w = w_star + direction * d
            if w <= 0:
                break
            if float(_psd_rows(model, np.array([w]), rows).sum()) < s_peak / 2.0:
                lo, hi = d / 2.0, d
                for _ in range(50):
                    mid = 0.5 * (lo + hi)
                    v = float(
                        _psd_rows(model, np.array([w_star + direction * mid]), rows).sum()
                    )
                    if v < s_peak / 2.0:
                        hi = mid
                    else:
                        lo = mid
                return 0.5 * (lo + hi)
            d *= 2.0
            if d > 2.0 * w_star:
                break
        return w_star / 12.0  # no prominent peak: fall back to a broad scale

    width = half_cross(+1.0) + half_cross(-1.0)
    gamma_floor = model.meta.get("gamma_m", w_star * 1e-12) / 10.0
    return w_star, float(np.clip(width, gamma_floor, w_star / 2.0))


def _initial_edges(
    model: LinearDelayModel,
    w_star: float,
    gamma_eff: float,
    omega_max: float,
    core_width_factor: float,
) -> NDArray[np.float64]:
    edges = [0.0]
    lo = max(w_star - 50.0 * gamma_eff, w_star * 0.01)
    hi = min(w_star + 50.0 * gamma_eff, omega_max * 0.9)
    hi = max(hi, lo + gamma_eff)

    # low band: one panel to 1e-4 w*, then logarithmic up to the approach zone
    tiny = w_star * 1e-4
    edges.append(tiny)
    edges.extend(np.geomspace(tiny, w_star * 0.5, 40).tolist())
    # geometric approach towards the resonance window from below
    d = w_star * 0.5
    while d > (w_star - lo) * 1.0000001 and w_star - lo > 0:
        edges.append(w_star - d)
        d /= 1.6
    # linear core across the resonance
    n_core = int(np.ceil((hi - lo) / (gamma_eff * core_width_factor)))
    n_core = min(max(n_core, 64), 1400)
    edges.extend(np.linspace(lo, hi, n_core + 1).tolist())
    # geometric retreat above the window
    d = hi - w_star
    while w_star + d < 1.5 * w_star:
        edges.append(w_star + d)
        d *= 1.6
    # logarithmic band to omega_max, seeded around known secondary features
    edges.extend(np.geomspace(1.5 * w_star, omega_max, 60).tolist())
    for f in model.meta.get("features", []):
        if 1.2 * w_star < f < omega_max:
            for rel in (0.7, 0.9, 0.97, 1.0, 1.03, 1.1, 1.4):
                edges.append(f * rel)
    e = np.unique(np.clip(np.asarray(edges), 0.0, omega_max))
    keep = np.concatenate([[True], np.diff(e) > 1e-14 * omega_max])
    return e[keep]


def _panel_eval(func, a: NDArray, b: NDArray) -> tuple[NDArray, NDArray]:
    """Kronrod-15 values and embedded-error estimates for many panels."""
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    pts = mid[:, None] + half[:, None] * _XGK[None, :]
    vals = func(pts.ravel()).reshape(pts.shape)
    k15 = half * (vals @ _WGK)
    g7 = half * (vals[:, _G7_IDX] @ _WG7)
    return k15, np.abs(k15 - g7)


def integrate_psd_rows(
    model: LinearDelayModel,
    rows,
    rtol: float = 1e-6,
    omega_max: float | None = None,
    core_width_factor: float = 0.1,
    max_panels: int = 60000,
) -> tuple[float, dict]:
    """Adaptive integral of sum_rows S(omega) over [0, inf), d omega only.

    Returns the integral (without the 1/2pi) plus an info dict with the
    achieved error estimate, panel count and the analytic tail.  The band
    beyond ``omega_max`` (default 10 kappa_c) is added as an analytic
    1/omega^2 tail fitted at the top edge.
    """
    if omega_max is None:
        omega_max = 10.0 * model.meta.get("kappa_c", 100.0 * model.meta.get("omega_m", 1.0))

    def func(w):
        return _psd_rows(model, w, rows).sum(axis=1)

    w_star, gamma_eff = _peak_and_width(model, rows)
    edges = _initial_edges(model, w_star, gamma_eff, omega_max, core_width_factor)
    a, b = edges[:-1], edges[1:]
    vals, errs = _panel_eval(func, a, b)

    for _ in range(60):
        total = float(vals.sum())
        tol_abs = rtol * abs(total)
        err_total = float(errs.sum())
        if err_total <= 0.5 * tol_abs or len(a) >= max_panels:
            break
        # split every panel whose error exceeds its share of the budget
        share = 0.5 * tol_abs / max(len(a), 1)
        bad = errs > np.maximum(share, err_total * 1e-4 / max(len(a), 1))
        if not np.any(bad):
            bad = errs >= np.partition(errs, -1)[-1] * 0.5
        n_split = int(bad.sum())
        if len(a) + n_split > max_panels:
            order = np.argsort(errs[bad])[::-1][: max_panels - len(a)]
            idx = np.flatnonzero(bad)[order]
            bad = np.zeros_like(bad)
            bad[idx] = True
            if not np.any(bad):
                break
        mid = 0.5 * (a[bad] + b[bad])
        new_a = np.concatenate([a[~bad], a[bad], mid])
        new_b = np.concatenate([b[~bad], mid, b[bad]])
        keep_vals, keep_errs = vals[~bad], errs[~bad]
        split_vals, split_errs = _panel_eval(
            func, np.concatenate([a[bad], mid]), np.concatenate([mid, b[bad]])
        )
        a, b = new_a, new_b
        vals = np.concatenate([keep_vals, split_vals])
        errs = np.concatenate([keep_errs, split_errs])

    order = np.argsort(a, kind="stable")
    total = float(vals[order].sum())
    err_total = float(errs.sum())

    # analytic 1/w^2 tail from the mean of S * w^2 near the top edge
    wt = omega_max * np.linspace(0.97, 1.0, 8)
    t_hat = float(np.mean(func(wt) * wt**2))
    tail = t_hat / omega_max
    total += tail

    info = {
        "panels": int(len(a)),
        "err_abs": err_total,
        "tail": tail,
        "omega_max": omega_max,
        "peak": w_star,
        "gamma_eff": gamma_eff,
    }
    if err_total > rtol * abs(total) and len(a) >= max_panels:
        raise QuadratureError(
            f"spectral integral did not converge: error {err_total:.3e} vs "
            f"requested {rtol * abs(total):.3e} with {len(a)} panels",
            achieved_rtol=err_total / abs(total),
        )
    return total, info


def phonon_occupation(
    model: LinearDelayModel,
    method: str = "auto",
    rtol: float = 1e-6,
    omega_max: float | None = None,
    core_width_factor: float = 0.1,
    stability_report: StabilityReport | None = None,
) -> float:
    """Steady-state phonon occupation of the mechanical mode.

    ``method`` is "auto" (Lyapunov solve for zero-delay models, spectral
    quadrature otherwise), "quadrature", or "lyapunov".  Both routes agree
    to the quadrature tolerance; the Lyapunov route exists because it is
    orders of magnitude cheaper inside optimization loops.
    """
    if stability_report is None:
        stability_report = stability_check(model)
    if not stability_report.stable:
        raise UnstableModelError(f"model is unstable ({stability_report})")
    if method == "auto":
        method = "lyapunov" if model.is_ode else "quadrature"
    if method == "lyapunov":
        return mechanical_occupation(model_steady_state(model))
    if method != "quadrature":
        raise ValueError(f"unknown method '{method}'")
    xm = model.state_labels.index("Xm")
    ym = model.state_labels.index("Ym")
    total, _ = integrate_psd_rows(
        model, [xm, ym], rtol=rtol, omega_max=omega_max,
        core_width_factor=core_width_factor,
    )
    return 0.5 * total / (2.0 * np.pi) - 0.5


def quadrature_variances(
    model: LinearDelayModel,
    rows,
    rtol: float = 1e-6,
    omega_max: float | None = None,
) -> float:
    """Summed steady variances 2 int_0^inf S d omega / 2pi of the given rows."""
    total, _ = integrate_psd_rows(model, rows, rtol=rtol, omega_max=omega_max)
    return total / np.pi


def spectrum_table(
    model: LinearDelayModel,
    omegas: NDArray[np.float64],
    stability_report: StabilityReport | None = None,
) -> tuple[list[str], NDArray[np.float64]]:
    """(header, rows) of the spectrum export: omega plus one PSD per quadrature."""
    s = quadrature_psd(model, np.asarray(omegas, float), stability_report)
    header = ["omega_rad_s"] + [f"S_{lab}" for lab in model.state_labels]
    data = np.column_stack([np.asarray(omegas, float), s])
    return header, data
