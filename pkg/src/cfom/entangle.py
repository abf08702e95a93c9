"""Pulsed photon-phonon entanglement protocol and EPR variance.

Four stages: pre-cool to the feedback steady state, entanglement generation
with a blue-detuned auxiliary cavity, a short switching gap with the
optomechanical cavity driven directly, and a state-swap readout with the
opposite detuning and path phase.  During generation and swap the output of
the auxiliary cavity's outer port is integrated against a rotating
exponential envelope into a temporal mode,

    d r/dt = f(t) R(theta(t)) (u_A_in2 - sqrt(kappa2) u_A).

Because f R(theta) = F(t_b) exp(-W (t_b - t)) with a constant 2x2 generator
W, each substep augments the state with an auxiliary accumulator rho obeying
a time-invariant equation; the covariance update is then exact for any
substep length, stiffness included, and the temporal-mode increment is
r += F(t_b) rho.  No rotating-wave approximation is made anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from numpy.typing import NDArray

from .constants import J2
from .covariance import (
    CovarianceState,
    mechanical_occupation,
    model_steady_state,
    propagate_lyapunov,
)
from .errors import ParameterError, ProtocolError, UnstableModelError
from .model import (
    LinearDelayModel,
    build_adiabatic_bare,
    build_adiabatic_feedback,
    build_bare_om,
    build_cavity_feedback,
)
from .parameters import AuxCavityParams, OmParams, PathParams
from .stability import stability_check

_PHYS_TOL = 1e-8
_ENVELOPE_CUTOFF = 25.0  # e^{-2*25} of the envelope norm is dropped


@dataclass(frozen=True)
class TemporalModeSpec:
    """Envelope rate, pulse duration and stage boundary times.

    The generation stage ends at ``t_g_end`` and the swap stage starts at
    ``t_s_start``; they are centered on t = 0, so t_g_end = -t_s_start.
    The envelope normalization enforces int f^2 dt = 1 over each stage,
    which is what makes the accumulated temporal mode canonical.
    """

    gamma_tm: float
    tau_p: float
    t_g_end: float = -5e-8
    t_s_start: float = 5e-8

    def __post_init__(self):
        if self.gamma_tm < 0.0 or self.tau_p <= 0.0:
            raise ParameterError("gamma_tm must be >= 0 and tau_p > 0")
        if abs(self.t_g_end + self.t_s_start) > 1e-12 * max(abs(self.t_s_start), 1e-30):
            raise ParameterError("stage boundaries must satisfy t_g_end = -t_s_start")

    @property
    def gap(self) -> float:
        return self.t_s_start - self.t_g_end

    def norm(self) -> float:
        x = 2.0 * self.gamma_tm * self.tau_p
        if x < 1e-12:
            return 1.0 / np.sqrt(self.tau_p)
        return np.sqrt(2.0 * self.gamma_tm / -np.expm1(-x))


def envelope(spec: TemporalModeSpec, stage: str, t) -> NDArray[np.float64]:
    """Normalized temporal-mode envelope f_g or f_s at time t (0 outside)."""
    t = np.asarray(t, dtype=float)
    n = spec.norm()
    if stage == "generate":
        inside = (t >= spec.t_g_end - spec.tau_p) & (t <= spec.t_g_end)
        val = n * np.exp(spec.gamma_tm * (t - spec.t_g_end))
    elif stage == "swap":
        inside = (t >= spec.t_s_start) & (t <= spec.t_s_start + spec.tau_p)
        val = n * np.exp(-spec.gamma_tm * (t - spec.t_s_start))
    else:
        raise ValueError(f"unknown stage '{stage}'")
    return np.where(inside, val, 0.0)


def envelope_sq_integral(spec: TemporalModeSpec, stage: str, t: float) -> float:
    """int f^2 from the stage start up to t (the accumulated mode norm)."""
    g = spec.gamma_tm
    if stage == "generate":
        t0 = spec.t_g_end - spec.tau_p
        t = np.clip(t, t0, spec.t_g_end)
        if 2.0 * g * spec.tau_p < 1e-12:
            return (t - t0) / spec.tau_p
        return (
            np.exp(2.0 * g * (t - spec.t_g_end)) - np.exp(-2.0 * g * spec.tau_p)
        ) / -np.expm1(-2.0 * g * spec.tau_p)
    if stage == "swap":
        t = np.clip(t, spec.t_s_start, spec.t_s_start + spec.tau_p)
        if 2.0 * g * spec.tau_p < 1e-12:
            return (t - spec.t_s_start) / spec.tau_p
        return -np.expm1(-2.0 * g * (t - spec.t_s_start)) / -np.expm1(
            -2.0 * g * spec.tau_p
        )
    raise ValueError(f"unknown stage '{stage}'")


@dataclass(frozen=True)
class StageSchedule:
    """Timing and per-stage auxiliary parameters of the protocol.

    The swap cavity mirrors the generation cavity with opposite detuning,
    and the swap path phase is the negative of the generation one.
    """

    precool_aux: AuxCavityParams = AuxCavityParams()
    precool_phi_s: float = 0.0
    precool_mode: str = "steady"  # "steady" or "timed"
    precool_duration: float = 0.1
    gen_aux: AuxCavityParams = AuxCavityParams(delta_a=2.0 * np.pi * 1e6)
    gen_phi_s: float = 0.0
    gap: float = 1e-7

    def __post_init__(self):
        if self.gap < 0.0:
            raise ParameterError("gap must be >= 0")
        if self.precool_mode not in ("steady", "timed"):
            raise ParameterError("precool_mode must be 'steady' or 'timed'")
        if self.precool_duration <= 0.0:
            raise ParameterError("precool_duration must be > 0")

    @property
    def swap_aux(self) -> AuxCavityParams:
        return replace(self.gen_aux, delta_a=-self.gen_aux.delta_a)

    @property
    def swap_phi_s(self) -> float:
        return -self.gen_phi_s


@dataclass(frozen=True)
class AccumulatorSpec:
    """Temporal-mode accumulator attached to one stage."""

    name: str
    w_gen: NDArray[np.float64]  # constant generator of F(t)
    f_of_t: object  # callable t -> 2x2 matrix F(t)
    weight_of_t: object  # callable t -> accumulated commutator fraction
    kappa2: float


def _thermal_vacuum_init(model: LinearDelayModel, n_th: float) -> CovarianceState:
    sigma = np.eye(model.dim)
    sigma[0, 0] = sigma[1, 1] = 2.0 * n_th + 1.0
    return CovarianceState(sigma, model.state_labels)


def precool_covariance(model: LinearDelayModel, mode: str = "steady",
                       duration: float = 0.1, n_th: float | None = None) -> CovarianceState:
    """Covariance after the pre-cooling stage (zero-delay model required).

    "steady" solves the continuous Lyapunov equation; "timed" propagates a
    thermal-mechanics, vacuum-optics state for ``duration`` (identical for
    a stable system that has reached steady state, and much cheaper).
    """
    if not model.is_ode:
        raise ParameterError("the protocol is modeled without delay (tau_s = 0)")
    report = stability_check(model)
    if not report.stable:
        raise UnstableModelError(f"pre-cool model unstable: {report}")
    if mode == "steady":
        return model_steady_state(model)
    if mode != "timed":
        raise ValueError(f"unknown precool mode '{mode}'")
    if n_th is None:
        n_th = max((ch.psd - 1.0) / 2.0 for ch in model.channels)
    state = _thermal_vacuum_init(model, n_th)
    phi, q = propagate_lyapunov(model.drift(), model.diffusion(), duration)
    return CovarianceState(phi @ state.sigma @ phi.T + q, model.state_labels)


def _augmented_system(model, state, accum):
    """Drift and diffusion of (system + statics + rho)."""
    n_sys = model.dim
    n_tot = state.dim + 2
    if state.labels[:n_sys] != model.state_labels:
        raise ProtocolError(
            "state labels do not start with the stage model's labels"
        )
    a = np.zeros((n_tot, n_tot))
    a[:n_sys, :n_sys] = model.drift()
    c = np.zeros((n_tot, model.n_in))
    c[:n_sys, :] = model.c0
    ia = model.state_labels.index("XA")
    a[n_tot - 2 : n_tot, ia : ia + 2] = -np.sqrt(accum.kappa2) * np.eye(2)
    a[n_tot - 2 : n_tot, n_tot - 2 : n_tot] = -accum.w_gen
    j2 = 2 * model.channel_labels.index("aux2")
    c[n_tot - 2 : n_tot, j2 : j2 + 2] = np.eye(2)
    n_mat = (c * model.noise_psd) @ c.T
    return a, n_mat


def evolve_stage(
    state: CovarianceState,
    model: LinearDelayModel,
    t0: float,
    t1: float,
    accum: AccumulatorSpec | None = None,
    n_sub: int | None = None,
) -> CovarianceState:
    """Propagate the extended covariance through one piecewise-constant stage.

    Without an accumulator this is a single exact covariance step.  With
    one, the stage is cut into substeps; each substep evolves the augmented
    time-invariant system exactly and then folds the auxiliary accumulator
    into the temporal mode.  Substeps exist only to keep the generator
    well-conditioned, so doubling their number changes nothing beyond
    roundoff.  A physicality violation rejects the stage and retries with
    more substeps.
    """
    if t1 < t0:
        raise ParameterError("t1 must be >= t0")
    if t1 == t0:
        return state
    if not model.is_ode:
        raise ParameterError("stage models must be delay-free")
    n_sys = model.dim

    if accum is None:
        if state.labels[:n_sys] != model.state_labels:
            raise ProtocolError("state labels do not start with the model's labels")
        n_tot = state.dim
        a = np.zeros((n_tot, n_tot))
        a[:n_sys, :n_sys] = model.drift()
        c = np.zeros((n_tot, model.n_in))
        c[:n_sys, :] = model.c0
        n_mat = (c * model.noise_psd) @ c.T
        phi, q = propagate_lyapunov(a, n_mat, t1 - t0)
        out = CovarianceState(
            phi @ state.sigma @ phi.T + q, state.labels, dict(state.comm_weights)
        )
        _check_physical(out, "evolve")
        return out

    if n_sub is None:
        n_sub = max(8, int(np.ceil(accum.w_gen[0, 0].__abs__() * (t1 - t0) / 0.5)))
    entry = state
    for attempt in range(4):
        try:
            return _run_substeps(entry, model, t0, t1, accum, n_sub)
        except ProtocolError:
            if attempt == 3:
                raise
            n_sub *= 2
    raise AssertionError("unreachable")


def _check_physical(state: CovarianceState, stage: str):
    sig = state.sigma
    if not np.all(np.isfinite(sig)):
        raise ProtocolError(f"covariance overflowed during '{stage}'", stage=stage)
    margin = state.physicality_margin()
    # the tolerance is absolute for vacuum-scale blocks and relative for
    # thermal ones (entries ~1e5 leave only ~1e-11 relative to roundoff)
    scale = max(1.0, float(np.max(np.abs(sig))))
    if margin < -_PHYS_TOL * scale:
        raise ProtocolError(
            f"uncertainty relation violated by {margin:.2e} during '{stage}'",
            stage=stage,
        )


def _run_substeps(state, model, t0, t1, accum, n_sub):
    a_aug, n_aug = _augmented_system(model, state, accum)
    dt = (t1 - t0) / n_sub
    phi, q = propagate_lyapunov(a_aug, n_aug, dt)
    d = state.dim
    r_idx = state.labels.index(f"X{accum.name}")
    sigma = state.sigma
    weights = dict(state.comm_weights)
    for k in range(1, n_sub + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            ext = np.zeros((d + 2, d + 2))
            ext[:d, :d] = sigma
            ext = phi @ ext @ phi.T + q
            t_b = t0 + k * dt
            f_b = accum.f_of_t(t_b)
            # fold rho into the temporal mode: r += F(t_b) rho
            t_mat = np.eye(d + 2)
            t_mat[r_idx : r_idx + 2, d : d + 2] = f_b
            ext = t_mat @ ext @ t_mat.T
            sigma = ext[:d, :d]
            sigma = 0.5 * (sigma + sigma.T)
        weights[accum.name] = accum.weight_of_t(t_b)
        snap = CovarianceState(sigma, state.labels, weights)
        _check_physical(snap, f"accumulate-{accum.name}")
    return CovarianceState(sigma, state.labels, weights)


@dataclass(frozen=True)
class ProtocolResult:
    sigma: NDArray[np.float64]  # 4x4 over (rg_X, rg_Y, rs_X, rs_Y)
    delta_epr: float
    n_precool: float
    diagnostics: dict


def epr_variance(sigma4: NDArray[np.float64]) -> float:
    """Delta_EPR = (tr sigma)/2 + (sigma_13 - sigma_24); below 2 is entangled."""
    s = np.asarray(sigma4, dtype=float)
    if s.shape != (4, 4):
        raise ParameterError("EPR variance needs the 4x4 temporal-mode covariance")
    return float(0.5 * np.trace(s) + s[0, 2] - s[1, 3])


def _make_accumulator(name, spec, stage, omega_m, phi_read, kappa2):
    sgn = 1.0 if stage == "generate" else -1.0
    w = spec.gamma_tm * sgn * np.eye(2) + omega_m * sgn * J2

    def f_of_t(t, _stage=stage):
        f = float(envelope(spec, _stage, t))
        theta = omega_m * t if _stage == "generate" else -omega_m * t + phi_read
        c, s_ = np.cos(theta), np.sin(theta)
        return f * np.array([[c, s_], [-s_, c]])

    def weight_of_t(t, _stage=stage):
        return float(envelope_sq_integral(spec, _stage, t))

    return AccumulatorSpec(name=name, w_gen=w, f_of_t=f_of_t,
                           weight_of_t=weight_of_t, kappa2=kappa2)


def run_protocol(
    om: OmParams,
    path: PathParams,
    schedule: StageSchedule | None = None,
    tm: TemporalModeSpec | None = None,
    detection_efficiency: float = 1.0,
    adiabatic: bool = False,
    substep_scale: int = 1,
) -> ProtocolResult:
    """Run all four stages and return the temporal-mode covariance.

    ``adiabatic`` switches every stage model to the broad-cavity-eliminated
    form, used as a cross-validation of the stiff full model.  The
    accumulated modes share the auxiliary output channel with the cavities,
    so all input-noise cross correlations are retained.
    """
    if path.tau_s != 0.0:
        raise ParameterError("the protocol is modeled without delay (tau_s = 0)")
    if not 0.0 <= detection_efficiency <= 1.0:
        raise ParameterError("detection efficiency must lie in [0, 1]")
    schedule = schedule or StageSchedule()
    tm = tm or TemporalModeSpec(gamma_tm=2e4, tau_p=2e-4, t_g_end=-schedule.gap / 2,
                                t_s_start=schedule.gap / 2)
    if abs(tm.gap - schedule.gap) > 1e-12 * max(schedule.gap, 1e-30):
        raise ParameterError("temporal-mode boundaries do not match the schedule gap")

    build = build_adiabatic_feedback if adiabatic else build_cavity_feedback
    sys_modes = ["m"] if adiabatic else ["m", "c"]

    def stage_path(phi_s):
        return PathParams(eta_s=path.eta_s, phi_s=phi_s, tau_s=0.0)

    diag = {}
    # --- pre-cool ---
    model_pre = build(om, schedule.precool_aux, stage_path(schedule.precool_phi_s))
    try:
        pre = precool_covariance(model_pre, mode=schedule.precool_mode,
                                 duration=schedule.precool_duration, n_th=om.n_th)
    except UnstableModelError as exc:
        raise ProtocolError(f"pre-cool stage unstable: {exc}", stage="precool")
    n0 = mechanical_occupation(pre)
    state = pre.keep(sys_modes)

    # --- generation ---
    model_gen = build(om, schedule.gen_aux, stage_path(schedule.gen_phi_s))
    state = state.extend("A", np.eye(2))  # fresh generation cavity in vacuum
    state = state.extend("rg", np.zeros((2, 2)), weight=0.0)
    t_g0 = tm.t_g_end - tm.tau_p
    acc_g = _make_accumulator("rg", tm, "generate", om.omega_m,
                              schedule.gen_phi_s, schedule.gen_aux.kappa2)
    t_acc = tm.t_g_end - min(tm.tau_p, _ENVELOPE_CUTOFF / max(tm.gamma_tm, 1e-300))
    if t_acc > t_g0:
        state = evolve_stage(state, model_gen, t_g0, t_acc)
    n_sub = max(8, int(np.ceil(tm.gamma_tm * (tm.t_g_end - t_acc) / 0.5))) * substep_scale
    state = evolve_stage(state, model_gen, t_acc, tm.t_g_end, acc_g, n_sub)
    diag["generate_margin"] = state.physicality_margin()

    # --- gap: trace out the generation cavity, drive the bare cavity ---
    model_gap = build_adiabatic_bare(om) if adiabatic else build_bare_om(om)
    state = state.keep(sys_modes + ["rg"])
    state = evolve_stage(state, model_gap, tm.t_g_end, tm.t_s_start)
    diag["gap_margin"] = state.physicality_margin()

    # --- swap: fresh vacuum cavity inserted between system block and rg ---
    model_swap = build(om, schedule.swap_aux, stage_path(schedule.swap_phi_s))
    reordered = state.keep(sys_modes + ["rg"])
    labels = model_swap.state_labels + ("Xrg", "Yrg")
    d_sys = len(sys_modes) * 2
    sig = np.zeros((d_sys + 4, d_sys + 4))
    sig[:d_sys, :d_sys] = reordered.sigma[:d_sys, :d_sys]
    sig[d_sys : d_sys + 2, d_sys : d_sys + 2] = np.eye(2)  # vacuum swap cavity
    sig[d_sys + 2 :, d_sys + 2 :] = reordered.sigma[d_sys:, d_sys:]
    sig[: d_sys, d_sys + 2 :] = reordered.sigma[:d_sys, d_sys:]
    sig[d_sys + 2 :, : d_sys] = reordered.sigma[d_sys:, :d_sys]
    state = CovarianceState(sig, labels, {"rg": 1.0})
    state = state.extend("rs", np.zeros((2, 2)), weight=0.0)
    acc_s = _make_accumulator("rs", tm, "swap", om.omega_m,
                              schedule.gen_phi_s, schedule.swap_aux.kappa2)
    t_s_end = tm.t_s_start + min(tm.tau_p, _ENVELOPE_CUTOFF / max(tm.gamma_tm, 1e-300))
    n_sub = max(8, int(np.ceil(tm.gamma_tm * (t_s_end - tm.t_s_start) / 0.5))) * substep_scale
    state = evolve_stage(state, model_swap, tm.t_s_start, t_s_end, acc_s, n_sub)
    diag["swap_margin"] = state.physicality_margin()

    final = state.keep(["rg", "rs"])
    final.comm_weights.update({"rg": 1.0, "rs": 1.0})
    sigma4 = final.sigma
    if detection_efficiency < 1.0:
        sigma4 = detection_efficiency * sigma4 + (1.0 - detection_efficiency) * np.eye(4)
    return ProtocolResult(
        sigma=sigma4,
        delta_epr=epr_variance(sigma4),
        n_precool=n0,
        diagnostics=diag,
    )
