"""Assembly of linear delay-Langevin models for coherent-feedback optomechanics.

The model class represents equations of the form

    du(t)/dt + D du(t - tau)/dt
        = A0 u(t) + A1 u(t - tau) + sum_n C_n u_in(t - n tau_s),

with u the vector of localized quadratures ordered
(X_m, Y_m, X_c, Y_c[, X_A, Y_A]) and u_in the stacked input-channel
quadratures.  A zero-delay loop is eliminated algebraically; a delayed loop
is eliminated by subtracting the loop-gain-weighted, lag-shifted copy of
each equation that contains the recursive input field, which is exact and
produces the single-lag form above.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .constants import J2
from .errors import DegenerateLoopError, ParameterError
from .parameters import AuxCavityParams, AuxMirrorParams, OmParams, PathParams

_SINGULAR_LOOP_TOL = 1e-12


def rotation(phi: float) -> NDArray[np.float64]:
    """Quadrature rotation by the path phase phi.

    Returns [[cos phi, sin phi], [-sin phi, cos phi]]; orthogonal with
    determinant one, and rotation(a) @ rotation(b) == rotation(a + b).
    """
    c, s = np.cos(phi), np.sin(phi)
    return np.array([[c, s], [-s, c]])


@dataclass(frozen=True)
class NoiseChannel:
    """One physical input channel (two quadrature components).

    ``mask`` selects which quadrature components actually drive the system;
    the mechanical bath couples only to the momentum quadrature, so its mask
    is (0, 1), while optical vacuum channels use (1, 1).
    """

    label: str
    psd: float
    mask: tuple[int, int] = (1, 1)

    def __post_init__(self):
        if self.psd < 1.0:
            raise ParameterError(
                f"channel '{self.label}' psd must be >= 1 (vacuum), got {self.psd}"
            )


@dataclass(frozen=True)
class LinearDelayModel:
    """Matrices, lags and noise spectra of one assembled configuration.

    ``noise_psd`` is the per-column single-sided symmetric spectral density
    of the stacked inputs (1 for optical vacuum, 2 n_th + 1 for the
    mechanical bath).  When ``tau`` is zero the model is a plain ODE and
    ``a1``, ``c1``, ``c2`` and ``d_mat`` are all zero.
    """

    dim: int
    a0: NDArray[np.float64]
    a1: NDArray[np.float64]
    d_mat: NDArray[np.float64]
    c0: NDArray[np.float64]
    c1: NDArray[np.float64]
    c2: NDArray[np.float64]
    tau: float
    tau_s: float
    channels: tuple[NoiseChannel, ...]
    state_labels: tuple[str, ...]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n_in = 2 * len(self.channels)
        shapes = {
            "a0": (self.dim, self.dim),
            "a1": (self.dim, self.dim),
            "d_mat": (self.dim, self.dim),
            "c0": (self.dim, n_in),
            "c1": (self.dim, n_in),
            "c2": (self.dim, n_in),
        }
        for name, shape in shapes.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ParameterError(f"{name} must have shape {shape}, got {arr.shape}")
            arr.setflags(write=False)
        if self.tau < 0.0 or self.tau_s < 0.0:
            raise ParameterError("lags must be >= 0")
        if self.tau == 0.0:
            for name in ("a1", "c1", "c2", "d_mat"):
                if np.any(getattr(self, name)):
                    raise ParameterError(f"tau = 0 requires {name} == 0 (plain ODE)")

    @property
    def is_ode(self) -> bool:
        return self.tau == 0.0

    @property
    def n_in(self) -> int:
        return 2 * len(self.channels)

    @property
    def channel_labels(self) -> tuple[str, ...]:
        return tuple(ch.label for ch in self.channels)

    @property
    def noise_psd(self) -> NDArray[np.float64]:
        """Per-column PSD vector of the stacked input quadratures."""
        return np.repeat([ch.psd for ch in self.channels], 2).astype(float)

    def drift(self) -> NDArray[np.float64]:
        """Drift matrix of the ODE form; only defined for tau = 0."""
        if not self.is_ode:
            raise ParameterError("drift() is defined only for tau = 0 models")
        return self.a0

    def diffusion(self) -> NDArray[np.float64]:
        """Noise diffusion C0 diag(psd) C0^T of the ODE form."""
        if not self.is_ode:
            raise ParameterError("diffusion() is defined only for tau = 0 models")
        return (self.c0 * self.noise_psd) @ self.c0.T

    def to_json_dict(self) -> dict:
        """Row-major labeled dump of all matrices for cross-implementation diffs."""
        return {
            "dim": self.dim,
            "state_labels": list(self.state_labels),
            "channel_labels": list(self.channel_labels),
            "tau": self.tau,
            "tau_s": self.tau_s,
            "noise_psd": self.noise_psd.tolist(),
            "a0": self.a0.tolist(),
            "a1": self.a1.tolist(),
            "d_mat": self.d_mat.tolist(),
            "c0": self.c0.tolist(),
            "c1": self.c1.tolist(),
            "c2": self.c2.tolist(),
            "meta": {k: v for k, v in self.meta.items() if isinstance(v, (int, float, str))},
        }


def _om_blocks(om: OmParams):
    """Mechanical drift, cavity drift and the two coupling blocks of the
    bare optomechanical equations."""
    g = om.g
    a_mech = np.array([[0.0, om.omega_m], [-om.omega_m, -om.gamma_m]])
    a_cav = np.array(
        [[-om.kappa_c / 2.0, -om.delta_c], [om.delta_c, -om.kappa_c / 2.0]]
    )
    # position-position coupling enters through the momentum rows
    b_mc = np.array([[0.0, 0.0], [-2.0 * g, 0.0]])  # X_c into dY_m/dt
    b_cm = np.array([[0.0, 0.0], [-2.0 * g, 0.0]])  # X_m into dY_c/dt
    return a_mech, a_cav, b_mc, b_cm


def _mech_channel(om: OmParams) -> NoiseChannel:
    return NoiseChannel("mech", 2.0 * om.n_th + 1.0, mask=(0, 1))


def _base_meta(om: OmParams, **extra) -> dict:
    feats = [om.omega_m]
    if om.delta_c:
        feats.append(abs(om.delta_c))
    meta = {
        "omega_m": om.omega_m,
        "gamma_m": om.gamma_m,
        "kappa_c": om.kappa_c,
        "g": om.g,
        "features": feats,
    }
    meta.update(extra)
    return meta


def build_bare_om(om: OmParams) -> LinearDelayModel:
    """Bare optomechanical cavity driven through its external port.

    Input channels: external optical vacuum (weight sqrt(kappa_c_ext)),
    intrinsic optical vacuum (sqrt(kappa_c_int)) and the mechanical bath
    (sqrt(2 Gamma_m) into the momentum quadrature, PSD 2 n_th + 1).
    """
    a_mech, a_cav, b_mc, b_cm = _om_blocks(om)
    a0 = np.zeros((4, 4))
    a0[0:2, 0:2] = a_mech
    a0[0:2, 2:4] = b_mc
    a0[2:4, 2:4] = a_cav
    a0[2:4, 0:2] = b_cm

    channels = (
        NoiseChannel("c_ext", 1.0),
        NoiseChannel("c_int", 1.0),
        _mech_channel(om),
    )
    c0 = np.zeros((4, 6))
    c0[2:4, 0:2] = np.sqrt(om.kappa_c_ext) * np.eye(2)
    c0[2:4, 2:4] = np.sqrt(om.kappa_c_int) * np.eye(2)
    c0[1, 5] = np.sqrt(2.0 * om.gamma_m)

    z4 = np.zeros((4, 4))
    z46 = np.zeros((4, 6))
    return LinearDelayModel(
        dim=4,
        a0=a0,
        a1=z4,
        d_mat=z4.copy(),
        c0=c0,
        c1=z46,
        c2=z46.copy(),
        tau=0.0,
        tau_s=0.0,
        channels=channels,
        state_labels=("Xm", "Ym", "Xc", "Yc"),
        meta=_base_meta(om, scheme="bare"),
    )


def _loop_inverse(gain: NDArray[np.float64]) -> NDArray[np.float64]:
    """(I - gain)^-1 for the instantaneous loop, rejecting the degenerate case."""
    m = np.eye(2) - gain
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    if abs(det) < _SINGULAR_LOOP_TOL:
        raise DegenerateLoopError(
            "zero-delay feedback loop has unit gain (eta_s = 1 with the loop "
            "phase a multiple of pi); the algebraic loop cannot be eliminated"
        )
    return np.linalg.inv(m)


def build_cavity_feedback(
    om: OmParams, aux: AuxCavityParams, path: PathParams
) -> LinearDelayModel:
    """Optomechanical cavity coupled to an auxiliary cavity through the path.

    For ``tau_s`` = 0 (or a broken path) the instantaneous loop is removed
    algebraically and the result is a six-dimensional ODE.  For positive
    ``tau_s`` the recursion of the circulating field is removed by a single
    delayed-subtraction pass, giving a neutral delay model with loop lag
    tau = 2 tau_s, after shifting the auxiliary field's time origin by
    tau_s so that state couplings occur only at lags {0, tau}.
    """
    a_mech, a_cav, b_mc, b_cm = _om_blocks(om)
    a_aux = np.array(
        [[-aux.kappa_a / 2.0, -aux.delta_a], [aux.delta_a, -aux.kappa_a / 2.0]]
    )
    eta, phi = path.eta_s, path.phi_s
    r1 = rotation(phi)
    gain = eta * rotation(2.0 * phi)
    kext, kint = om.kappa_c_ext, om.kappa_c_int
    k1, k2 = aux.kappa1, aux.kappa2

    channels = (
        NoiseChannel("c_int", 1.0),
        NoiseChannel("fw", 1.0),
        NoiseChannel("bw", 1.0),
        NoiseChannel("aux2", 1.0),
        _mech_channel(om),
    )
    labels = ("Xm", "Ym", "Xc", "Yc", "XA", "YA")
    meta = _base_meta(
        om,
        scheme="cavity_feedback",
        kappa_a=aux.kappa_a,
        delta_a=aux.delta_a,
        eta_s=eta,
        loop_gain=eta,
    )
    meta["features"] = meta["features"] + [abs(aux.delta_a), aux.kappa_a]

    mech, cav, auxs = slice(0, 2), slice(2, 4), slice(4, 6)

    if path.tau_s == 0.0 or eta == 0.0:
        kinv = _loop_inverse(gain) if eta > 0.0 else np.eye(2)
        a0 = np.zeros((6, 6))
        a0[mech, mech] = a_mech
        a0[mech, cav] = b_mc
        a0[cav, mech] = b_cm
        a0[cav, cav] = a_cav - kext * kinv @ gain
        a0[cav, auxs] = -np.sqrt(eta * kext * k1) * kinv @ r1
        a0[auxs, cav] = -np.sqrt(eta * k1 * kext) * kinv @ r1
        a0[auxs, auxs] = a_aux - k1 * kinv @ gain

        c0 = np.zeros((6, 10))
        c0[cav, 0:2] = np.sqrt(kint) * np.eye(2)
        c0[cav, 2:4] = np.sqrt(kext * eta * (1.0 - eta)) * kinv @ r1
        c0[cav, 4:6] = np.sqrt(kext * (1.0 - eta)) * kinv
        c0[auxs, 2:4] = np.sqrt(k1 * (1.0 - eta)) * kinv
        c0[auxs, 4:6] = np.sqrt(k1 * eta * (1.0 - eta)) * kinv @ r1
        c0[auxs, 6:8] = np.sqrt(k2) * np.eye(2)
        c0[1, 9] = np.sqrt(2.0 * om.gamma_m)

        z = np.zeros((6, 6))
        z_c = np.zeros((6, 10))
        return LinearDelayModel(
            dim=6, a0=a0, a1=z, d_mat=z.copy(), c0=c0, c1=z_c, c2=z_c.copy(),
            tau=0.0, tau_s=0.0, channels=channels, state_labels=labels, meta=meta,
        )

    # delayed loop: one subtraction pass per circulating equation
    tau = 2.0 * path.tau_s
    a0 = np.zeros((6, 6))
    a0[mech, mech] = a_mech
    a0[mech, cav] = b_mc
    a0[cav, mech] = b_cm
    a0[cav, cav] = a_cav
    a0[cav, auxs] = -np.sqrt(eta * kext * k1) * r1  # aux frame shifted by tau_s
    a0[auxs, auxs] = a_aux

    a1 = np.zeros((6, 6))
    a1[cav, cav] = -gain @ (a_cav + kext * np.eye(2))
    a1[cav, mech] = -gain @ b_cm
    a1[auxs, auxs] = -gain @ (a_aux + k1 * np.eye(2))
    a1[auxs, cav] = -np.sqrt(eta * k1 * kext) * r1

    d_mat = np.zeros((6, 6))
    d_mat[cav, cav] = -gain
    d_mat[auxs, auxs] = -gain

    c0 = np.zeros((6, 10))
    c0[cav, 0:2] = np.sqrt(kint) * np.eye(2)
    c0[cav, 4:6] = np.sqrt(kext * (1.0 - eta)) * np.eye(2)
    c0[auxs, 6:8] = np.sqrt(k2) * np.eye(2)
    c0[1, 9] = np.sqrt(2.0 * om.gamma_m)

    c1 = np.zeros((6, 10))
    c1[cav, 2:4] = np.sqrt(kext * eta * (1.0 - eta)) * r1
    c1[auxs, 2:4] = np.sqrt(k1 * (1.0 - eta)) * np.eye(2)

    c2 = np.zeros((6, 10))
    c2[cav, 0:2] = -np.sqrt(kint) * gain
    c2[auxs, 4:6] = np.sqrt(k1 * eta * (1.0 - eta)) * r1
    c2[auxs, 6:8] = -np.sqrt(k2) * gain

    meta["aux_frame_shift"] = path.tau_s
    return LinearDelayModel(
        dim=6, a0=a0, a1=a1, d_mat=d_mat, c0=c0, c1=c1, c2=c2,
        tau=tau, tau_s=path.tau_s, channels=channels, state_labels=labels, meta=meta,
    )


def build_mirror_feedback(
    om: OmParams, mirror: AuxMirrorParams, path: PathParams
) -> LinearDelayModel:
    """Optomechanical cavity with a mirror of reflectivity R_A closing the loop.

    The mirror contributes no dynamical state; the loop relation couples the
    cavity to its own output one round trip tau_rt = 2 tau_s earlier, and
    sqrt(1 - R_A) of the mirror's back port enters as an extra vacuum.
    """
    a_mech, a_cav, b_mc, b_cm = _om_blocks(om)
    eta, phi, ra = path.eta_s, path.phi_s, mirror.reflectivity
    r1 = rotation(phi)
    loop_amp = eta * np.sqrt(ra)
    gain = loop_amp * rotation(2.0 * phi)
    kext, kint = om.kappa_c_ext, om.kappa_c_int

    channels = (
        NoiseChannel("c_int", 1.0),
        NoiseChannel("fw", 1.0),
        NoiseChannel("bw", 1.0),
        NoiseChannel("aux2", 1.0),
        _mech_channel(om),
    )
    labels = ("Xm", "Ym", "Xc", "Yc")
    meta = _base_meta(
        om, scheme="mirror_feedback", eta_s=eta, reflectivity=ra, loop_gain=loop_amp
    )
    mech, cav = slice(0, 2), slice(2, 4)

    a0 = np.zeros((4, 4))
    a0[mech, mech] = a_mech
    a0[mech, cav] = b_mc
    a0[cav, mech] = b_cm
    a0[cav, cav] = a_cav

    if path.tau_s == 0.0 or loop_amp == 0.0:
        kinv = _loop_inverse(gain) if loop_amp > 0.0 else np.eye(2)
        a0[cav, cav] = a_cav - kext * kinv @ gain
        c0 = np.zeros((4, 10))
        c0[cav, 0:2] = np.sqrt(kint) * np.eye(2)
        c0[cav, 2:4] = np.sqrt(kext * eta * (1.0 - eta) * ra) * kinv @ r1
        c0[cav, 4:6] = np.sqrt(kext * (1.0 - eta)) * kinv
        c0[cav, 6:8] = np.sqrt(kext * eta * (1.0 - ra)) * kinv @ r1
        c0[1, 9] = np.sqrt(2.0 * om.gamma_m)
        z = np.zeros((4, 4))
        z_c = np.zeros((4, 10))
        return LinearDelayModel(
            dim=4, a0=a0, a1=z, d_mat=z.copy(), c0=c0, c1=z_c, c2=z_c.copy(),
            tau=0.0, tau_s=0.0, channels=channels, state_labels=labels, meta=meta,
        )

    tau_rt = 2.0 * path.tau_s
    a1 = np.zeros((4, 4))
    a1[cav, cav] = -gain @ (a_cav + kext * np.eye(2))
    a1[cav, mech] = -gain @ b_cm
    d_mat = np.zeros((4, 4))
    d_mat[cav, cav] = -gain

    c0 = np.zeros((4, 10))
    c0[cav, 0:2] = np.sqrt(kint) * np.eye(2)
    c0[cav, 4:6] = np.sqrt(kext * (1.0 - eta)) * np.eye(2)
    c0[1, 9] = np.sqrt(2.0 * om.gamma_m)
    c1 = np.zeros((4, 10))
    c1[cav, 2:4] = np.sqrt(kext * eta * (1.0 - eta) * ra) * r1
    c1[cav, 6:8] = np.sqrt(kext * eta * (1.0 - ra)) * r1
    c2 = np.zeros((4, 10))
    c2[cav, 0:2] = -np.sqrt(kint) * gain

    return LinearDelayModel(
        dim=4, a0=a0, a1=a1, d_mat=d_mat, c0=c0, c1=c1, c2=c2,
        tau=tau_rt, tau_s=path.tau_s, channels=channels, state_labels=labels, meta=meta,
    )


def build_adiabatic_bare(om: OmParams) -> LinearDelayModel:
    """Bare optomechanics with the cavity eliminated (resonant drive only).

    Two-dimensional mechanical model: at delta_c = 0 the cavity imprints no
    spring or damping, only flat back-action noise on the momentum.
    """
    if om.delta_c != 0.0:
        raise ParameterError("adiabatic elimination is implemented for delta_c = 0")
    g = om.g
    a0 = np.array([[0.0, om.omega_m], [-om.omega_m, -om.gamma_m]])
    channels = (
        NoiseChannel("c_ext", 1.0),
        NoiseChannel("c_int", 1.0),
        _mech_channel(om),
    )
    c0 = np.zeros((2, 6))
    c0[1, 0] = -4.0 * g * np.sqrt(om.kappa_c_ext) / om.kappa_c
    c0[1, 2] = -4.0 * g * np.sqrt(om.kappa_c_int) / om.kappa_c
    c0[1, 5] = np.sqrt(2.0 * om.gamma_m)
    z = np.zeros((2, 2))
    z_c = np.zeros((2, 6))
    return LinearDelayModel(
        dim=2, a0=a0, a1=z, d_mat=z.copy(), c0=c0, c1=z_c, c2=z_c.copy(),
        tau=0.0, tau_s=0.0, channels=channels, state_labels=("Xm", "Ym"),
        meta=_base_meta(om, scheme="adiabatic_bare"),
    )


def build_adiabatic_feedback(
    om: OmParams, aux: AuxCavityParams, path: PathParams
) -> LinearDelayModel:
    """Cavity-feedback model with the broad optomechanical cavity eliminated.

    Valid for tau_s = 0 and kappa_c much larger than every other rate: the
    cavity field is replaced by its instantaneous response, leaving a
    four-dimensional (mechanics + auxiliary) ODE.  Unlike the exact
    zero-delay builder this composition stays regular at eta_s = 1 with
    phi_s = 0, because the loop gain is damped by the cavity's amplitude
    reflection r = 1 - 2 eta_c.
    """
    if path.tau_s != 0.0:
        raise ParameterError("adiabatic elimination is defined for tau_s = 0 only")
    g = om.g
    eta, phi = path.eta_s, path.phi_s
    kext, kint, kc = om.kappa_c_ext, om.kappa_c_int, om.kappa_c
    k1, k2 = aux.kappa1, aux.kappa2
    r = 1.0 - kext / (kc / 2.0)
    r1 = rotation(phi)
    r2 = rotation(2.0 * phi)
    gain = eta * r2
    xi1_inv = np.linalg.inv(np.eye(2) - r * gain)

    a_mech = np.array([[0.0, om.omega_m], [-om.omega_m, -om.gamma_m]])
    a_aux = np.array(
        [[-aux.kappa_a / 2.0, -aux.delta_a], [aux.delta_a, -aux.kappa_a / 2.0]]
    )
    b_cm = np.array([[0.0, 0.0], [-2.0 * g, 0.0]])  # X_m into the cavity Y row

    # instantaneous cavity response u_c = s_c [ (I-G)(B u_m + sqrt(kint) u_i)
    #   - sqrt(eta kext k1) R1 u_A + sqrt(eta kext (1-eta)) R1 u_fw
    #   + sqrt(kext (1-eta)) u_bw ]
    s_c = (2.0 / kc) * xi1_inv
    t_mech = s_c @ (np.eye(2) - gain) @ b_cm
    t_int = s_c @ (np.eye(2) - gain) * np.sqrt(kint)
    t_aux = -np.sqrt(eta * kext * k1) * s_c @ r1
    t_fw = np.sqrt(eta * kext * (1.0 - eta)) * s_c @ r1
    t_bw = np.sqrt(kext * (1.0 - eta)) * s_c

    mech, auxs = slice(0, 2), slice(2, 4)
    a0 = np.zeros((4, 4))
    a0[mech, mech] = a_mech
    # the mechanics sees -2g X_c; X_c is the first row of each cavity block
    a0[1, 0:2] += -2.0 * g * t_mech[0, :]
    a0[1, 2:4] = -2.0 * g * t_aux[0, :]
    a0[auxs, auxs] = a_aux - k1 * eta * r * xi1_inv @ r2
    a0[auxs, mech] = -np.sqrt(eta * k1 / kext) * (2.0 * kext / kc) * xi1_inv @ r1 @ b_cm

    channels = (
        NoiseChannel("c_int", 1.0),
        NoiseChannel("fw", 1.0),
        NoiseChannel("bw", 1.0),
        NoiseChannel("aux2", 1.0),
        _mech_channel(om),
    )
    c0 = np.zeros((4, 10))
    c0[1, 0:2] = -2.0 * g * t_int[0, :]
    c0[1, 2:4] = -2.0 * g * t_fw[0, :]
    c0[1, 4:6] = -2.0 * g * t_bw[0, :]
    c0[1, 9] += np.sqrt(2.0 * om.gamma_m)

    u_in1_int = -np.sqrt(eta / kext) * (1.0 - r) * xi1_inv @ r1 * np.sqrt(kint)
    u_in1_fw = np.sqrt(1.0 - eta) * xi1_inv
    u_in1_bw = r * np.sqrt(eta * (1.0 - eta)) * xi1_inv @ r1
    c0[auxs, 0:2] = np.sqrt(k1) * u_in1_int
    c0[auxs, 2:4] = np.sqrt(k1) * u_in1_fw
    c0[auxs, 4:6] = np.sqrt(k1) * u_in1_bw
    c0[auxs, 6:8] = np.sqrt(k2) * np.eye(2)

    meta = _base_meta(
        om, scheme="adiabatic_feedback", kappa_a=aux.kappa_a, delta_a=aux.delta_a,
        eta_s=eta,
    )
    meta["features"] = meta["features"] + [abs(aux.delta_a), aux.kappa_a]
    z = np.zeros((4, 4))
    z_c = np.zeros((4, 10))
    return LinearDelayModel(
        dim=4, a0=a0, a1=z, d_mat=z.copy(), c0=c0, c1=z_c, c2=z_c.copy(),
        tau=0.0, tau_s=0.0, channels=channels,
        state_labels=("Xm", "Ym", "XA", "YA"), meta=meta,
    )
