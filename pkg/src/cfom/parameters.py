"""Physical parameter records for the optomechanical system and feedback path.

All rates are angular frequencies (rad/s).  The records are frozen
dataclasses: they validate on construction and can be shared freely across
workers.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .constants import HBAR, KB, PLANCK_H, TWO_PI
from .errors import ParameterError


def bath_occupation(temperature: float, omega_m: float) -> float:
    """Thermal phonon occupation of the mechanical bath.

    Uses the high-temperature form n_th = k_B T / (hbar Omega_m), which is
    the relevant limit for MHz resonators at kelvin temperatures; returns 0
    exactly at T = 0.

    Parameters
    ----------
    temperature:
        Bath temperature in kelvin, >= 0.
    omega_m:
        Mechanical angular frequency in rad/s, > 0.
    """
    if omega_m <= 0.0:
        raise ParameterError(f"omega_m must be positive, got {omega_m}")
    if temperature < 0.0:
        raise ParameterError(f"temperature must be >= 0, got {temperature}")
    if temperature == 0.0:
        return 0.0
    return KB * temperature / (HBAR * omega_m)


def coupling_from_photons(g0: float, n_cav: float) -> float:
    """Linearized optomechanical coupling g = sqrt(n_cav) * g0."""
    if n_cav < 0.0:
        raise ParameterError(f"n_cav must be >= 0, got {n_cav}")
    return np.sqrt(n_cav) * g0


@dataclass(frozen=True)
class OmParams:
    """Optomechanical cavity + mechanical resonator parameters.

    Attributes
    ----------
    omega_m:
        Mechanical angular resonance frequency (rad/s).
    q_m:
        Mechanical quality factor; Gamma_m = omega_m / q_m.
    kappa_c:
        Total optical energy decay rate (rad/s).
    eta_c:
        External coupling fraction kappa_c_ext / kappa_c in [0, 1].
    delta_c:
        Laser-cavity detuning (rad/s), laser minus cavity.
    g0:
        Single-photon coupling rate (rad/s).
    n_cav:
        Intra-cavity photon number of the classical drive.
    temperature:
        Bath temperature (K).
    """

    omega_m: float = TWO_PI * 1e6
    q_m: float = 2e7
    kappa_c: float = TWO_PI * 1e10
    eta_c: float = 0.8
    delta_c: float = 0.0
    g0: float = TWO_PI * 250e3
    n_cav: float = 500.0
    temperature: float = 4.2

    def __post_init__(self):
        if self.omega_m <= 0.0:
            raise ParameterError(f"omega_m must be > 0, got {self.omega_m}")
        if self.q_m <= 0.0:
            raise ParameterError(f"q_m must be > 0, got {self.q_m}")
        if self.kappa_c <= 0.0:
            raise ParameterError(f"kappa_c must be > 0, got {self.kappa_c}")
        if not 0.0 <= self.eta_c <= 1.0:
            raise ParameterError(f"eta_c must lie in [0, 1], got {self.eta_c}")
        if self.n_cav < 0.0:
            raise ParameterError(f"n_cav must be >= 0, got {self.n_cav}")
        if self.temperature < 0.0:
            raise ParameterError(f"temperature must be >= 0, got {self.temperature}")
        if self.g0 < 0.0:
            raise ParameterError(f"g0 must be >= 0, got {self.g0}")

    @property
    def gamma_m(self) -> float:
        return self.omega_m / self.q_m

    @property
    def kappa_c_ext(self) -> float:
        return self.eta_c * self.kappa_c

    @property
    def kappa_c_int(self) -> float:
        return (1.0 - self.eta_c) * self.kappa_c

    @property
    def g(self) -> float:
        """Drive-enhanced coupling sqrt(n_cav) * g0."""
        return coupling_from_photons(self.g0, self.n_cav)

    @property
    def n_th(self) -> float:
        return bath_occupation(self.temperature, self.omega_m)

    def with_photons(self, n_cav: float) -> "OmParams":
        return replace(self, n_cav=n_cav)

    def decoherence_cycles(self) -> float:
        """Mechanical coherence in units of oscillation cycles.

        Q_m * f_m / (k_B T / h): the number of cycles before one thermal
        phonon enters.
        """
        f_m = self.omega_m / TWO_PI
        return self.q_m * f_m * PLANCK_H / (KB * self.temperature)


@dataclass(frozen=True)
class AuxCavityParams:
    """Auxiliary feedback cavity: port 1 faces the loop, port 2 the outside."""

    kappa1: float = TWO_PI * 400e3
    kappa2: float = TWO_PI * 100e3
    delta_a: float = -TWO_PI * 1e6

    def __post_init__(self):
        if self.kappa1 < 0.0 or self.kappa2 < 0.0:
            raise ParameterError(
                f"kappa1 and kappa2 must be >= 0, got {self.kappa1}, {self.kappa2}"
            )
        if self.kappa1 + self.kappa2 <= 0.0:
            raise ParameterError("total auxiliary linewidth must be > 0")

    @property
    def kappa_a(self) -> float:
        return self.kappa1 + self.kappa2


@dataclass(frozen=True)
class AuxMirrorParams:
    """Auxiliary mirror: a memoryless reflector of power reflectivity R_A."""

    reflectivity: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.reflectivity <= 1.0:
            raise ParameterError(
                f"reflectivity must lie in [0, 1], got {self.reflectivity}"
            )


@dataclass(frozen=True)
class PathParams:
    """Optical path between the optomechanical cavity and the auxiliary element.

    ``eta_s``, ``phi_s`` and ``tau_s`` are all single-way quantities; the
    loop accumulates each of them twice per round trip.
    """

    eta_s: float = 0.8
    phi_s: float = 0.0
    tau_s: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.eta_s <= 1.0:
            raise ParameterError(f"eta_s must lie in [0, 1], got {self.eta_s}")
        if self.tau_s < 0.0:
            raise ParameterError(f"tau_s must be >= 0, got {self.tau_s}")
