"""Link-level simulator for point-to-point mmWave MIMO links.

Three transceivers are available (single-carrier with time-domain ZF,
single-carrier with cyclic prefix and frequency-domain ZF, MIMO-OFDM), with
fully-digital or hybrid beamforming and an optional Rapp power amplifier
with a Volterra predistorter.  Performance is reported as achievable spectral
efficiency, global energy efficiency and uncoded BER.
"""

__version__ = "0.1.0"

from .channel import (
    ArrayGeometry,
    ChannelParams,
    ChannelRealization,
    CompositeChannel,
    array_response,
    composite_taps,
    effective_channel,
    sample_realization,
)
from .frontend import (
    PAChain,
    PAModel,
    Predistorter,
    PulseShape,
    NoiseModel,
    REFERENCE_SPD,
)
from .beamforming import (Beamformers, FDBeamformers, bcd_sd, fd_ofdm_beamformers, fd_scm_beamformers,
                          fully_digital, hybrid_ofdm, hybrid_scm)
from .transceivers import (Constellation, FrameConfig, SoftEstimates, constellation, make_stage, ofdm_link,
                           scm_fde_link, scm_tde_link)
from .metrics import PowerModel, ase, fit_aux_channel, gee, mi_mismatched, power_consumption

__all__ = [
    "ArrayGeometry",
    "ChannelParams",
    "ChannelRealization",
    "CompositeChannel",
    "array_response",
    "composite_taps",
    "effective_channel",
    "sample_realization",
    "PAChain",
    "PAModel",
    "Predistorter",
    "PulseShape",
    "NoiseModel",
    "REFERENCE_SPD",
    "Beamformers",
    "FDBeamformers",
    "fully_digital",
    "hybrid_ofdm",
    "hybrid_scm",
    "bcd_sd",
    "fd_ofdm_beamformers",
    "fd_scm_beamformers",
    "Constellation",
    "FrameConfig",
    "SoftEstimates",
    "make_stage",
    "constellation",
    "ofdm_link",
    "scm_fde_link",
    "scm_tde_link",
    "PowerModel",
    "ase",
    "fit_aux_channel",
    "gee",
    "mi_mismatched",
    "power_consumption",
]
