"""Coherent-feedback optomechanics in the sideband-unresolved regime."""

from .covariance import (
    CovarianceState,
    mechanical_occupation,
    model_steady_state,
    propagate_lyapunov,
    steady_covariance_matrix,
)
from .effective import (
    EffectiveParams,
    LoopCoefficients,
    build_effective_model,
    effective_cooperativity,
    effective_noise_fields,
    effective_params,
    enhancement_threshold,
    loop_coefficients,
    quantum_cooperativity,
)
from .errors import (
    ConfigError,
    DegenerateLoopError,
    InfeasibleError,
    MarginalStabilityError,
    ParameterError,
    ProtocolError,
    QuadratureError,
    UnstableModelError,
)
from .model import (
    LinearDelayModel,
    NoiseChannel,
    build_adiabatic_feedback,
    build_bare_om,
    build_cavity_feedback,
    build_mirror_feedback,
    rotation,
)
from .parameters import (
    AuxCavityParams,
    AuxMirrorParams,
    OmParams,
    PathParams,
    bath_occupation,
    coupling_from_photons,
)
from .spectral import (
    FrequencyResponse,
    phonon_occupation,
    quadrature_psd,
    response_matrix,
    spectrum_table,
    transfer_matrix,
)
from .stability import StabilityReport, stability_check

__version__ = "0.1.0"
