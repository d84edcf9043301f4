"""Spectral efficiency, energy efficiency and error-rate metrics."""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np
from scipy.special import logsumexp

from .transceivers import Constellation, SoftEstimates

MIN_FIT_SAMPLES = 1000


@dataclass(frozen=True)
class AuxChannelFit:
    """Per-stream Gaussian auxiliary law s_hat = c s + z, z ~ CN(0, variance)."""

    gain: np.ndarray
    variance: np.ndarray

    @property
    def sinr(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.abs(self.gain) ** 2 / self.variance


def fit_aux_channel(soft: SoftEstimates, min_samples: int = MIN_FIT_SAMPLES) -> AuxChannelFit:
    s = np.atleast_2d(soft.symbols)
    est = np.atleast_2d(soft.estimates)
    if s.shape != est.shape:
        raise ValueError(f"estimate shape {est.shape} differs from symbol shape {s.shape}")
    if s.shape[1] < min_samples:
        raise ValueError(f"need at least {min_samples} symbols per stream, got {s.shape[1]}")
    c = np.mean(est * s.conj(), axis=1) / np.mean(np.abs(s) ** 2, axis=1)
    var = np.mean(np.abs(est - c[:, None] * s) ** 2, axis=1)
    return AuxChannelFit(c, var)


def mi_mismatched(const: Constellation, gain: complex, variance: float, rng: np.random.Generator,
                  mc_samples: int = 20000, z: np.ndarray | None = None) -> float:
    """Mismatched mutual information (bits) of the alphabet over s_hat = c s + z.

    The expectation over the transmitted point is exact (all points are
    enumerated for every noise draw); the noise expectation is Monte Carlo.
    Unit-variance draws ``z`` may be supplied to share randomness.
    """
    bits = np.log2(const.size)
    if variance <= 0:
        return float(bits) if gain != 0 else 0.0
    if z is None:
        z = (rng.standard_normal(mc_samples) + 1j * rng.standard_normal(mc_samples)) / np.sqrt(2)
    z = np.sqrt(variance) * np.asarray(z)
    a = const.points
    # distance between c*s + z and c*s' for every (draw, s, s')
    diff = gain * (a[:, None] - a[None, :])
    expo = (-np.abs(z[:, None, None] + diff[None]) ** 2 + np.abs(z)[:, None, None] ** 2) / variance
    penalty = logsumexp(expo, axis=2) / np.log(2)
    mi = bits - float(np.mean(penalty))
    return float(np.clip(mi, 0.0, bits))


def gaussian_capacity(sinr) -> np.ndarray:
    return np.log2(1.0 + np.asarray(sinr, dtype=float))


def ase(per_stream_mi, symbol_interval: float, bandwidth: float, cp_factor: float = 1.0,
        edge_factor: float = 1.0) -> float:
    """Spectral efficiency in bit/s/Hz from per-stream MI in bits per symbol."""
    for f in (cp_factor, edge_factor):
        if not 0 < f <= 1:
            raise ValueError("penalty factors must lie in (0, 1]")
    return float(np.sum(per_stream_mi)) / (symbol_interval * bandwidth) * cp_factor * edge_factor


@dataclass(frozen=True)
class PowerModel:
    """Circuit power figures in watts and the amplifier inefficiency ``beta``."""

    rf_chain: float = 40e-3
    dac: float = 110e-3
    adc: float = 200e-3
    pa: float = 16e-3
    lna: float = 30e-3
    baseband: float = 243e-3
    fft: float = 153e-3
    ifft: float = 153e-3
    phase_shifter: float = 30e-3
    beta: float = 2.5

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name) > 0:
                raise ValueError(f"power model entry {f.name} must be positive")

    @classmethod
    def preset(cls, name: str) -> "PowerModel":
        if name == "paper-vb":
            return cls()
        raise ValueError(f"unknown power model preset {name!r}")


def power_consumption(scheme: str, arch: str, n_tx: int, n_rx: int, tx_chains: int | None = None,
                      rx_chains: int | None = None, model: PowerModel | None = None) -> tuple[float, float]:
    """Transmitter and receiver circuit power (W)."""
    model = model or PowerModel()
    scheme, arch = scheme.upper(), arch.upper()
    if scheme not in ("TDE", "FDE", "OFDM") or arch not in ("FD", "HY"):
        raise ValueError(f"unknown scheme/architecture {scheme}/{arch}")
    if min(n_tx, n_rx) < 1:
        raise ValueError("antenna counts must be positive")
    m = model
    if arch == "FD":
        tx_chains, rx_chains = n_tx, n_rx
        tx_unit = m.rf_chain + m.dac + m.pa
        rx_unit = m.rf_chain + m.adc + m.lna
    else:
        if tx_chains is None or rx_chains is None or min(tx_chains, rx_chains) < 1:
            raise ValueError("hybrid architecture needs positive RF chain counts")
        tx_unit = m.rf_chain + m.dac + n_tx * m.phase_shifter + m.pa
        rx_unit = m.rf_chain + m.adc + n_rx * m.phase_shifter
    # hybrid receivers keep one LNA per antenna, ahead of the phase network
    lna = n_rx * m.lna if arch == "HY" else 0.0
    if scheme == "OFDM":
        tx_unit += m.ifft
        rx_unit += m.fft
    elif scheme == "FDE":
        rx_unit += m.fft + m.ifft
    return tx_chains * tx_unit + m.baseband, rx_chains * rx_unit + lna + m.baseband


def gee(ase_value: float, bandwidth: float, tx_power: float, beta: float, p_tx_circuit: float,
        p_rx_circuit: float) -> float:
    denom = beta * tx_power + p_tx_circuit + p_rx_circuit
    if not denom > 0:
        raise ValueError("total consumed power must be positive")
    return bandwidth * ase_value / denom


def gee_ordering_sides(tx_power: float, beta: float, circuits_hy: float, circuits_fd: float) -> float:
    """ASE ratio HY/FD above which the hybrid architecture has the higher GEE."""
    return (beta * tx_power + circuits_hy) / (beta * tx_power + circuits_fd)


def uncoded_ber(sent_bits, demapped_bits) -> tuple[float, float]:
    """Bit error fraction and its binomial standard error."""
    a = np.asarray(sent_bits).ravel()
    b = np.asarray(demapped_bits).ravel()
    if a.size != b.size:
        raise ValueError(f"bit streams differ in length ({a.size} vs {b.size})")
    if a.size == 0:
        raise ValueError("empty bit streams")
    p = float(np.mean(a != b))
    return p, float(np.sqrt(p * (1 - p) / a.size))


@dataclass(frozen=True)
class SweepResult:
    """Aggregated metrics at one grid point."""

    scheme: str
    arch: str
    constellation: str
    streams: int
    n_tx: int
    n_rx: int
    tx_chains: int
    rx_chains: int
    tx_power_dbw: float
    distance_m: float
    pa_mode: str
    realizations: int
    ase_mean: float
    ase_stderr: float
    gee_mean: float
    gee_stderr: float
    ber_mean: float
    ber_stderr: float
    failures: int
