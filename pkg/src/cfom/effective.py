"""Closed-form effective sideband-resolved description of the feedback loop.

For resonant drive (delta_c = 0), zero path phase and zero delay, the broad
optomechanical cavity plus feedback loop is equivalent to the mechanics
coupled directly to the auxiliary cavity with modified parameters: a
reduced port coupling, a reduced coupling rate, and a bath occupation
raised by the loop loss.  The loop factors are

    r   = 1 - kappa_c_ext / (kappa_c / 2)   (amplitude reflection)
    xi_n = 1 - eta_s^n r^n.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .constants import TWO_PI
from .errors import ParameterError
from .model import LinearDelayModel, NoiseChannel
from .parameters import AuxCavityParams, OmParams, PathParams


@dataclass(frozen=True)
class LoopCoefficients:
    """Amplitude reflection of the optomechanical cavity and loop factors."""

    r: float
    xi1: float
    xi2: float


@dataclass(frozen=True)
class EffectiveParams:
    """Parameters of the equivalent sideband-resolved model."""

    kappa1_eff: float
    kappa_a_eff: float
    g_eff: float
    n_th_eff: float


def loop_coefficients(om: OmParams, path: PathParams) -> LoopCoefficients:
    r = 1.0 - om.kappa_c_ext / (om.kappa_c / 2.0)
    e = path.eta_s
    return LoopCoefficients(r=r, xi1=1.0 - e * r, xi2=1.0 - (e * r) ** 2)


def _require_resonant(om: OmParams):
    if om.delta_c != 0.0:
        raise ParameterError(
            "the effective mapping is derived for resonant drive (delta_c = 0)"
        )
    if om.kappa_c / om.omega_m <= 100.0:
        warnings.warn(
            "effective mapping assumes kappa_c >> omega_m; "
            f"kappa_c/omega_m = {om.kappa_c / om.omega_m:.1f} is below 100",
            stacklevel=3,
        )


def effective_params(
    om: OmParams, aux: AuxCavityParams, path: PathParams
) -> EffectiveParams:
    """Modified auxiliary-cavity parameters and effective bath occupation."""
    _require_resonant(om)
    lc = loop_coefficients(om, path)
    k1_eff = (lc.xi2 / lc.xi1**2) * aux.kappa1
    g_eff = (
        -np.sqrt(path.eta_s * aux.kappa1 * om.kappa_c_ext)
        / (lc.xi1 * om.kappa_c / 2.0)
        * om.g
    )
    n_eff = om.n_th + 4.0 * (1.0 - path.eta_s) / lc.xi1 * om.g**2 / (
        om.gamma_m * om.kappa_c
    )
    return EffectiveParams(
        kappa1_eff=k1_eff,
        kappa_a_eff=k1_eff + aux.kappa2,
        g_eff=g_eff,
        n_th_eff=n_eff,
    )


def quantum_cooperativity(om: OmParams) -> float:
    """C_qu = 4 g^2 / (n_th kappa_c Gamma_m)."""
    if om.g == 0.0:
        return 0.0
    if om.n_th == 0.0:
        return np.inf
    return 4.0 * om.g**2 / (om.n_th * om.kappa_c * om.gamma_m)


def _ratio_pieces(om: OmParams, aux: AuxCavityParams, path: PathParams):
    lc = loop_coefficients(om, path)
    frac = aux.kappa1 / aux.kappa_a
    denom1 = 1.0 + 2.0 * path.eta_s * lc.r / lc.xi1 * frac
    if denom1 <= 0.0:
        raise ParameterError(
            "effective cooperativity out of validity: the effective linewidth "
            f"factor 1 + 2 eta_s r kappa1 / (xi1 kappa_A) = {denom1:.3e} <= 0"
        )
    k = 4.0 * path.eta_s * om.eta_c * frac / lc.xi1**2 / denom1
    beta = (1.0 - path.eta_s) / lc.xi1
    return k, beta


def effective_cooperativity(
    om: OmParams, aux: AuxCavityParams, path: PathParams
) -> dict:
    """Effective quantum cooperativity and its ratio to the bare one.

    The ratio is k / (1 + beta C_qu); by construction it equals
    4 g_eff^2 / (kappa_A_eff Gamma_m n_th_eff) / C_qu exactly.
    """
    _require_resonant(om)
    k, beta = _ratio_pieces(om, aux, path)
    c_qu = quantum_cooperativity(om)
    ratio = k / (1.0 + beta * c_qu) if np.isfinite(c_qu) else 0.0
    return {"c_qu": c_qu, "ratio": ratio, "c_eff": ratio * c_qu}


def enhancement_threshold(
    om: OmParams, aux: AuxCavityParams, path: PathParams
) -> float | None:
    """Largest bare C_qu for which the feedback still enhances cooperativity.

    Solves ratio(C_qu) = 1, which is linear in C_qu.  Returns None when no
    finite threshold exists: either the ratio is below one already at
    C_qu = 0, or the path is lossless so the ratio never decays.
    """
    _require_resonant(om)
    k, beta = _ratio_pieces(om, aux, path)
    if k <= 1.0:
        return None
    if beta == 0.0:
        return None  # lossless path: enhancement for every drive
    return (k - 1.0) / beta


def effective_noise_fields(om: OmParams, path: PathParams) -> dict:
    """Coefficients of the effective loop vacuum and the added-noise field.

    Both fields are combinations of the intrinsic-cavity vacuum and the two
    path vacua (backward, forward); their coefficient vectors are unit-norm,
    which is what preserves the bosonic commutators.  ``add_weight_mech`` is
    the prefactor with which the added field's X quadrature drives the
    mechanical momentum; it vanishes for a lossless path.
    """
    _require_resonant(om)
    lc = loop_coefficients(om, path)
    e = path.eta_s
    kext, kint, kc = om.kappa_c_ext, om.kappa_c_int, om.kappa_c
    u_a1 = {
        "c_int": -np.sqrt(e * kext * kint) / (kc / 2.0) / np.sqrt(lc.xi2),
        "bw": lc.r * np.sqrt(e * (1.0 - e)) / np.sqrt(lc.xi2),
        "fw": np.sqrt(1.0 - e) / np.sqrt(lc.xi2),
    }
    eta_om = kext / kc
    if e < 1.0:
        pref = np.sqrt(eta_om / ((1.0 - e) * lc.xi1))
        u_add = {
            "c_int": pref * (1.0 - e) * np.sqrt(kint / kext) if kext > 0 else 0.0,
            "bw": pref * np.sqrt(1.0 - e),
            "fw": pref * np.sqrt(e * (1.0 - e)),
        }
    else:
        u_add = {"c_int": 0.0, "bw": 0.0, "fw": 0.0}
    # weight of u_add's X quadrature in dY_m/dt, divided by -2 g_eff
    add_weight = 4.0 * om.g * np.sqrt((1.0 - e) / (lc.xi1 * kc))
    return {"u_a1": u_a1, "u_add": u_add, "add_weight_mech": add_weight}


def build_effective_model(
    om: OmParams, aux: AuxCavityParams, path: PathParams
) -> LinearDelayModel:
    """Four-mode ODE of the equivalent sideband-resolved system.

    Mechanics coupled to the auxiliary cavity with (kappa1_eff, g_eff) and a
    bath at n_th_eff; the added-noise field is folded into the bath spectrum,
    which is exact because it is orthogonal to the effective loop vacuum and
    drives only the momentum quadrature.  The auxiliary damping enters
    dissipatively (-kappa_A_eff / 2).
    """
    eff = effective_params(om, aux, path)
    g = eff.g_eff
    a0 = np.zeros((4, 4))
    a0[0, 1] = om.omega_m
    a0[1, 0] = -om.omega_m
    a0[1, 1] = -om.gamma_m
    a0[1, 2] = -2.0 * g
    a0[2, 2] = -eff.kappa_a_eff / 2.0
    a0[2, 3] = -aux.delta_a
    a0[3, 2] = aux.delta_a
    a0[3, 3] = -eff.kappa_a_eff / 2.0
    a0[3, 0] = -2.0 * g

    channels = (
        NoiseChannel("a1_eff", 1.0),
        NoiseChannel("aux2", 1.0),
        NoiseChannel("mech", 2.0 * eff.n_th_eff + 1.0, mask=(0, 1)),
    )
    c0 = np.zeros((4, 6))
    c0[2:4, 0:2] = np.sqrt(eff.kappa1_eff) * np.eye(2)
    c0[2:4, 2:4] = np.sqrt(aux.kappa2) * np.eye(2)
    c0[1, 5] = np.sqrt(2.0 * om.gamma_m)

    scale = max(om.omega_m, eff.kappa_a_eff, abs(aux.delta_a))
    meta = {
        "scheme": "effective",
        "omega_m": om.omega_m,
        "gamma_m": om.gamma_m,
        "kappa_c": 30.0 * scale,  # quadrature roll-off scale of this model
        "features": [om.omega_m, abs(aux.delta_a), eff.kappa_a_eff],
    }
    z = np.zeros((4, 4))
    z_c = np.zeros((4, 6))
    return LinearDelayModel(
        dim=4, a0=a0, a1=z, d_mat=z.copy(), c0=c0, c1=z_c, c2=z_c.copy(),
        tau=0.0, tau_s=0.0, channels=channels,
        state_labels=("Xm", "Ym", "XA", "YA"), meta=meta,
    )
