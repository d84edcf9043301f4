"""Pulse shaping, transmitter nonlinearity, predistortion and receiver noise.

Continuous-time filtering is approximated on a grid of ``N`` samples per
symbol.  Both the symbol-rate composite channel and the oversampled waveform
chain use the same discretized cascade

    h(t) = (1/N) * sum_q p(t_q) p(t - t_q),

so that, with an ideal amplifier, the two paths agree to rounding error.
Time arguments are in symbol intervals throughout this module.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import LinAlgError, cholesky_banded
from scipy.signal import fftconvolve

from .channel import CompositeChannel, sample_kernel

BOLTZMANN_DBM_HZ = -174.0


def _srrc(t: np.ndarray, rolloff: float) -> np.ndarray:
    """Untruncated, unnormalized square-root raised cosine (unit symbol time)."""
    t = np.asarray(t, dtype=float)
    a = rolloff
    out = np.empty_like(t)
    at_zero = np.isclose(t, 0.0, atol=1e-12)
    if a > 0:
        at_sing = np.isclose(np.abs(4 * a * t), 1.0, atol=1e-9)
    else:
        at_sing = np.zeros_like(t, dtype=bool)
    general = ~(at_zero | at_sing)
    tg = t[general]
    out[general] = (np.sin(np.pi * tg * (1 - a)) + 4 * a * tg * np.cos(np.pi * tg * (1 + a))) / (
        np.pi * tg * (1 - (4 * a * tg) ** 2)
    )
    out[at_zero] = 1 - a + 4 * a / np.pi
    if a > 0:
        out[at_sing] = a / np.sqrt(2) * (
            (1 + 2 / np.pi) * np.sin(np.pi / (4 * a)) + (1 - 2 / np.pi) * np.cos(np.pi / (4 * a))
        )
    return out


def srrc_taps(rolloff: float, span_symbols: int, oversampling: int) -> np.ndarray:
    """Unit-energy SRRC taps on ``[-span, span]`` symbols, length ``2*span*N + 1``."""
    if not 0 <= rolloff <= 1:
        raise ValueError("rolloff must be in [0, 1]")
    if span_symbols < 1 or oversampling < 1:
        raise ValueError("span and oversampling must be >= 1")
    t = np.arange(-span_symbols * oversampling, span_symbols * oversampling + 1) / oversampling
    h = _srrc(t, rolloff)
    return h / np.linalg.norm(h)


@dataclass(frozen=True)
class PulseShape:
    """Transmit/receive pulse, either truncated SRRC or rectangular.

    ``span`` is the SRRC truncation in symbols per side; the rectangular pulse
    lasts one symbol interval.
    """

    kind: str = "srrc"
    rolloff: float = 0.22
    span: int = 4
    oversampling: int = 8

    def __post_init__(self):
        if self.kind not in ("srrc", "rect"):
            raise ValueError(f"unknown pulse kind {self.kind!r}")
        if self.oversampling < 1:
            raise ValueError("oversampling must be >= 1")
        if self.kind == "srrc" and (not 0 <= self.rolloff <= 1 or self.span < 1):
            raise ValueError("invalid SRRC parameters")

    @property
    def half_support(self) -> float:
        return float(self.span) if self.kind == "srrc" else 0.5

    @property
    def filter_span(self) -> int:
        """Number of symbol-spaced taps P_h of one filter."""
        return 2 * self.span + 1 if self.kind == "srrc" else 1

    def grid_times(self) -> np.ndarray:
        n = self.oversampling
        if self.kind == "srrc":
            return np.arange(-self.span * n, self.span * n + 1) / n
        return (np.arange(n) - (n - 1) / 2) / n

    def _base(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.kind == "srrc":
            return np.where(np.abs(t) <= self.span + 1e-12, _srrc(t, self.rolloff), 0.0)
        return np.where(np.abs(t) < 0.5, 1.0, 0.0)

    @property
    def _scale(self) -> float:
        base = self._base(self.grid_times())
        return 1.0 / np.sqrt(np.sum(base**2) / self.oversampling)

    def waveform(self, t) -> np.ndarray:
        """Continuous pulse p(t), normalized so that (1/N) sum_q p(t_q)^2 = 1."""
        return self._scale * self._base(t)

    def taps(self) -> np.ndarray:
        """Unit-energy discrete taps p(t_q) / sqrt(N)."""
        return self.waveform(self.grid_times()) / np.sqrt(self.oversampling)

    def cascade(self, t) -> np.ndarray:
        """Discretized transmit/receive cascade h(t); h(0) = 1."""
        t = np.asarray(t, dtype=float)
        grid = self.grid_times()
        weights = self.waveform(grid) / self.oversampling
        return self.waveform(t[..., None] - grid) @ weights

    def autocorrelation(self, max_lag: int | None = None) -> np.ndarray:
        """Receive-filter correlation at symbol lags 0..max_lag (r(0) = 1)."""
        if max_lag is None:
            max_lag = int(np.ceil(2 * self.half_support))
        return self.cascade(np.arange(max_lag + 1, dtype=float))


# -- power amplifier and predistorter ------------------------------------------------


@dataclass(frozen=True)
class PAModel:
    """Rapp AM/AM with a piecewise-linear AM/PM law.

    Input amplitude is relative to unit mean-square drive.  ``ampm_slope`` is
    in degrees per dB, ``ampm_threshold`` in dB.  ``linear=True`` gives the
    ideal amplifier sqrt(P_T) * x.
    """

    saturation_power: float = 1.0
    smoothness: float = 2.0
    ampm_slope: float = 2.0
    ampm_threshold: float = -1.5
    linear: bool = False

    def __post_init__(self):
        if self.saturation_power <= 0 or self.smoothness <= 0:
            raise ValueError("saturation power and smoothness must be positive")


def rapp_amplitude(zeta, model: PAModel):
    zeta = np.asarray(zeta, dtype=float)
    p = model.smoothness
    return np.sqrt(model.saturation_power) * zeta / (1.0 + zeta ** (2 * p)) ** (1.0 / (2 * p))


def ampm_phase(zeta, model: PAModel):
    """Phase rotation in radians as a function of input amplitude."""
    zeta = np.asarray(zeta, dtype=float)
    with np.errstate(divide="ignore"):
        level_db = 20.0 * np.log10(zeta)
    excess = np.where(level_db > model.ampm_threshold, level_db - model.ampm_threshold, 0.0)
    return np.deg2rad(model.ampm_slope * excess)


def pa_transfer(x, model: PAModel):
    x = np.asarray(x, dtype=complex)
    if model.linear:
        return np.sqrt(model.saturation_power) * x
    zeta = np.abs(x)
    return rapp_amplitude(zeta, model) * np.exp(1j * (np.angle(x) + ampm_phase(zeta, model)))


@dataclass(frozen=True)
class Predistorter:
    """Memoryless odd-order polynomial y = sum_s g_s x |x|^(2s)."""

    coefficients: tuple[complex, ...]

    @property
    def order(self) -> int:
        return len(self.coefficients) - 1


REFERENCE_SPD = Predistorter((0.8275 + 0.0601j, 0.6335 - 0.0921j, 0.0319 - 0.2234j))
PREDISTORTER_PRESETS = {"paper-spd": REFERENCE_SPD}


def volterra_basis(x: np.ndarray, order: int) -> np.ndarray:
    x = np.asarray(x, dtype=complex)
    mag2 = np.abs(x) ** 2
    return np.stack([x * mag2**s for s in range(order + 1)], axis=-1)


def predistort(x, pd: Predistorter):
    return volterra_basis(x, pd.order) @ np.asarray(pd.coefficients, dtype=complex)


def cascade_mse(x: np.ndarray, model: PAModel, pd: Predistorter | None) -> float:
    """Mean-square error between the amplified chain and sqrt(P_T) x."""
    drive = x if pd is None else predistort(x, pd)
    return float(np.mean(np.abs(pa_transfer(drive, model) - np.sqrt(model.saturation_power) * x) ** 2))


def fit_predistorter(model: PAModel, order: int, rng: np.random.Generator,
                     samples: np.ndarray | None = None, n_samples: int = 20000,
                     backoff_db: float = 0.0, max_iter: int = 20, tol: float = 1e-10,
                     ridge: float = 1e-8) -> Predistorter:
    """Least-squares predistorter for ``model`` by Gauss-Newton on the Volterra basis.

    Training samples default to unit-power circular Gaussian drive reduced by
    ``backoff_db``.  Each iteration linearizes the amplifier around the current
    predistorted drive, solves a ridge-regularized least-squares step for the
    coefficient update and halves the step until the cascade MSE decreases.
    """
    if order < 0:
        raise ValueError("order must be >= 0")
    if samples is None:
        scale = 10.0 ** (-backoff_db / 20.0)
        samples = scale * (rng.standard_normal(n_samples) + 1j * rng.standard_normal(n_samples)) / np.sqrt(2)
    x = np.asarray(samples, dtype=complex).ravel()
    n_coef = order + 1
    if x.size < 10 * n_coef:
        raise ValueError(f"need at least {10 * n_coef} training samples, got {x.size}")
    phi = volterra_basis(x, order)
    if np.linalg.matrix_rank(phi) < n_coef:
        raise ValueError("degenerate training set: Volterra basis is rank deficient")

    target = np.sqrt(model.saturation_power) * x
    g = np.zeros(n_coef, dtype=complex)
    g[0] = 1.0

    def mse_of(coef):
        return float(np.mean(np.abs(pa_transfer(phi @ coef, model) - target) ** 2))

    mse = mse_of(g)
    step = 1e-7
    for _ in range(max_iter):
        u = phi @ g
        out = pa_transfer(u, model)
        d_re = (pa_transfer(u + step, model) - out) / step
        d_im = (pa_transfer(u + 1j * step, model) - out) / step
        cols_re = d_re[:, None] * phi.real + d_im[:, None] * phi.imag
        cols_im = -d_re[:, None] * phi.imag + d_im[:, None] * phi.real
        jac = np.concatenate([cols_re, cols_im], axis=1)
        jac = np.concatenate([jac.real, jac.imag], axis=0)
        resid = out - target
        rhs = -np.concatenate([resid.real, resid.imag])
        gram = jac.T @ jac
        lam = ridge * np.trace(gram) / gram.shape[0]
        delta = np.linalg.solve(gram + lam * np.eye(gram.shape[0]), jac.T @ rhs)
        delta = delta[:n_coef] + 1j * delta[n_coef:]

        t = 1.0
        for _ in range(30):
            cand = g + t * delta
            cand_mse = mse_of(cand)
            if cand_mse < mse:
                break
            t *= 0.5
        else:
            break
        change = mse - cand_mse
        g, mse = cand, cand_mse
        if change < tol:
            break
    return Predistorter(tuple(complex(c) for c in g))


@dataclass(frozen=True)
class PAChain:
    """Per-RF-chain amplification stage.

    ``mode`` is ``"ideal"``, ``"rapp"`` or ``"rapp+spd"``.  Each chain is
    normalized to unit mean-square drive, reduced by ``backoff_db``, passed
    through the (predistorter and) amplifier, and rescaled so that the
    small-signal gain equals the ideal chain.
    """

    mode: str = "ideal"
    pa: PAModel = field(default_factory=PAModel)
    predistorter: Predistorter | None = REFERENCE_SPD
    backoff_db: float = 0.0

    def __post_init__(self):
        if self.mode not in ("ideal", "rapp", "rapp+spd"):
            raise ValueError(f"unknown PA mode {self.mode!r}")
        if self.mode == "rapp+spd" and self.predistorter is None:
            raise ValueError("rapp+spd mode requires a predistorter")

    @property
    def is_ideal(self) -> bool:
        return self.mode == "ideal"

    def apply(self, x: np.ndarray, chain_rms: np.ndarray, amplitude: float) -> np.ndarray:
        """Amplify streams ``x`` (chains x samples) with expected per-chain rms ``chain_rms``."""
        if self.is_ideal:
            return amplitude * x
        b = 10.0 ** (-self.backoff_db / 20.0)
        rms = np.asarray(chain_rms, dtype=float)[:, None]
        safe = np.where(rms > 0, rms, 1.0)
        u = b * x / safe
        if self.mode == "rapp+spd":
            u = predistort(u, self.predistorter)
        unit = replace(self.pa, saturation_power=1.0)
        return amplitude * safe / b * pa_transfer(u, unit)


# -- receiver noise -------------------------------------------------------------------


@dataclass(frozen=True)
class NoiseModel:
    """Thermal noise at the matched-filter output.

    ``correlation`` holds r_hRX(l T_s) / r_hRX(0)-style values at symbol lags
    0, 1, ... (``correlation[0]`` is the zero-lag value, normally 1).  The
    per-sample variance is 2 N_0 r(0) / T_s, the 1/T_s converting the noise
    density to power at the symbol rate.
    """

    psd: float
    symbol_interval: float
    correlation: tuple[float, ...] = (1.0,)
    noise_figure_db: float = 3.0

    @classmethod
    def thermal(cls, symbol_interval: float, pulse: PulseShape | None = None,
                noise_figure_db: float = 3.0, kt_dbm_hz: float = BOLTZMANN_DBM_HZ) -> "NoiseModel":
        n0 = 10.0 ** ((kt_dbm_hz + noise_figure_db - 30.0) / 10.0)
        corr = (1.0,) if pulse is None else tuple(float(v) for v in pulse.autocorrelation())
        return cls(n0, symbol_interval, corr, noise_figure_db)

    @property
    def variance(self) -> float:
        return 2.0 * self.psd * self.correlation[0] / self.symbol_interval

    def lag_covariance(self, lag: int) -> float:
        if lag >= len(self.correlation):
            return 0.0
        return 2.0 * self.psd * self.correlation[lag] / self.symbol_interval


def sample_noise(num_antennas: int, num_symbols: int, noise: NoiseModel,
                 rng: np.random.Generator) -> np.ndarray:
    """Noise matrix (antennas x symbols): independent rows, Toeplitz-correlated columns."""
    white = (rng.standard_normal((num_antennas, num_symbols))
             + 1j * rng.standard_normal((num_antennas, num_symbols))) / np.sqrt(2.0)
    corr = np.array([noise.lag_covariance(l) for l in range(len(noise.correlation))])
    bw = min(len(corr) - 1, num_symbols - 1)
    if bw <= 0 or np.all(corr[1:] == 0):
        return np.sqrt(corr[0]) * white
    band = np.zeros((bw + 1, num_symbols))
    for d in range(bw + 1):
        band[d, : num_symbols - d] = corr[d]
    try:
        lower = cholesky_banded(band, lower=True)
    except LinAlgError as exc:
        raise ValueError(
            "receive-filter correlation is not positive definite after truncation; "
            "use a longer pulse span"
        ) from exc
    out = np.zeros_like(white)
    for d in range(bw + 1):
        out[:, d:] += lower[d, : num_symbols - d] * white[:, : num_symbols - d]
    return out


# -- transit through the RF transceiver ----------------------------------------------------


def linear_transit(x_bb: np.ndarray, eff_taps: np.ndarray, amplitude: float) -> np.ndarray:
    """Symbol-rate linear model: y(n) = a * sum_l L(l) x(n - l).

    ``x_bb`` is (N_T^RF, K); the output is (N_R^RF, K + P~ - 1).
    """
    n_taps, n_out_ch, _ = eff_taps.shape
    k = x_bb.shape[1]
    y = np.zeros((n_out_ch, k + n_taps - 1), dtype=complex)
    for ell in range(n_taps):
        y[:, ell:ell + k] += eff_taps[ell] @ x_bb
    return amplitude * y


def waveform_chain(x_bb: np.ndarray, channel: CompositeChannel, q_rf: np.ndarray,
                   d_rf: np.ndarray, pulse: PulseShape, pa_chain: PAChain,
                   amplitude: float, chain_rms: np.ndarray | None = None) -> np.ndarray:
    """Oversampled transmitter -> channel -> matched filter, sampled at symbol rate.

    Each RF-chain stream is shaped at ``pulse.oversampling`` samples per symbol,
    amplified memorylessly, mixed by the analog beamformers and the
    propagation paths, filtered by the receive pulse and decimated.  The
    output is aligned with :func:`linear_transit` (N_R^RF x (K + P~ - 1)).
    """
    n = pulse.oversampling
    n_chains, k = x_bb.shape
    grid = pulse.grid_times()
    p_grid = pulse.waveform(grid)

    up = np.zeros((n_chains, k * n), dtype=complex)
    up[:, ::n] = x_bb
    x_os = fftconvolve(up, p_grid[None, :], axes=1)[:, : (k - 1) * n + grid.size]

    if chain_rms is None:
        chain_rms = np.sqrt(np.mean(np.abs(x_bb) ** 2, axis=1))
    z = pa_chain.apply(x_os, chain_rms, amplitude)

    eff_paths = np.einsum("ia,pij,jb->pab", d_rf.conj(), channel.path_matrices, q_rf)
    s = pulse.half_support
    t0 = grid[0]
    base = channel.offset + t0
    i_min = int(np.floor(n * (base - s))) - 1
    i_max = int(np.ceil(n * (base + channel.path_delays.max() + s))) + 1
    offsets = np.arange(i_min, i_max + 1)
    kern = sample_kernel(eff_paths, channel.path_delays, pulse.waveform,
                         offsets / n - base) / n          # (L, R, T)
    kern = np.moveaxis(kern, 0, -1)                      # (R, T, L)

    full = fftconvolve(kern, z[None, :, :], axes=2).sum(axis=1)   # (R, L + J - 1)
    n_out = k + channel.tap_count - 1
    idx = np.arange(n_out) * n - i_min
    y = np.zeros((full.shape[0], n_out), dtype=complex)
    valid = (idx >= 0) & (idx < full.shape[1])
    y[:, valid] = full[:, idx[valid]]
    return y
