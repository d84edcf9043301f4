"""Symbol pipelines for the three transceiver architectures.

All links share the same transit model: digital pre-coding, an RF stage that
is either the symbol-rate linear model or the oversampled nonlinear chain,
additive receiver noise projected by the analog combiner, and digital
post-coding.  Links receive the transmitted symbols explicitly and return
soft estimates aligned with them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .beamforming import Beamformers
from .channel import CompositeChannel, effective_channel
from .frontend import NoiseModel, PAChain, PulseShape, linear_transit, sample_noise, waveform_chain

_COND_LIMIT = 1e12


class SingularBinError(np.linalg.LinAlgError):
    """Per-bin equalizer matrix is (numerically) singular."""

    def __init__(self, bin_index: int, cond: float):
        super().__init__(f"equalizer matrix at bin {bin_index} is singular (cond={cond:.3g})")
        self.bin_index = bin_index


# -- constellations -----------------------------------------------------------------------


def _gray(n: np.ndarray) -> np.ndarray:
    return n ^ (n >> 1)


@dataclass(frozen=True)
class Constellation:
    """Unit-energy alphabet; ``labels[i]`` is the Gray bit label of ``points[i]``."""

    name: str
    points: np.ndarray
    labels: np.ndarray

    @property
    def size(self) -> int:
        return self.points.size

    @property
    def bits_per_symbol(self) -> int:
        return int(np.log2(self.size))

    def random_symbols(self, shape, rng: np.random.Generator) -> np.ndarray:
        return self.points[rng.integers(self.size, size=shape)]

    def nearest(self, estimates: np.ndarray) -> np.ndarray:
        """Index of the closest point for each estimate."""
        est = np.asarray(estimates)
        dist = np.abs(est[..., None] - self.points)
        return np.argmin(dist, axis=-1)


def _qam(order: int) -> tuple[np.ndarray, np.ndarray]:
    side = int(round(np.sqrt(order)))
    if side * side != order or side & (side - 1):
        raise ValueError(f"QAM order must be an even power of two, got {order}")
    half = int(np.log2(side))
    levels = 2 * np.arange(side) - side + 1
    i_idx, q_idx = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
    points = (levels[i_idx] + 1j * levels[q_idx]).ravel()
    labels = ((_gray(i_idx) << half) | _gray(q_idx)).ravel()
    return points / np.sqrt(np.mean(np.abs(points) ** 2)), labels


def _psk(order: int) -> tuple[np.ndarray, np.ndarray]:
    if order < 2 or order & (order - 1):
        raise ValueError(f"PSK order must be a power of two, got {order}")
    m = np.arange(order)
    return np.exp(2j * np.pi * m / order), _gray(m)


def constellation(name: str) -> Constellation:
    """Build an alphabet from names like ``"4-QAM"``, ``"16-QAM"`` or ``"16-PSK"``."""
    text = name.strip().upper().replace("_", "-")
    if text == "QPSK":
        text = "4-QAM"
    try:
        order_txt, kind = text.split("-")
        order = int(order_txt)
    except ValueError as exc:
        raise ValueError(f"unrecognized constellation {name!r}") from exc
    if kind == "QAM":
        points, labels = _qam(order)
    elif kind == "PSK":
        points, labels = _psk(order)
    else:
        raise ValueError(f"unrecognized constellation {name!r}")
    for a in (points, labels):
        a.setflags(write=False)
    return Constellation(f"{order}-{kind}", points, labels)


def map_bits(bits, const: Constellation) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.int64).ravel()
    b = const.bits_per_symbol
    if bits.size % b:
        raise ValueError(f"{bits.size} bits is not a multiple of {b} bits per symbol")
    words = bits.reshape(-1, b) @ (1 << np.arange(b - 1, -1, -1))
    lookup = np.empty(const.size, dtype=np.int64)
    lookup[const.labels] = np.arange(const.size)
    return const.points[lookup[words]]


def hard_demap(estimates, const: Constellation) -> np.ndarray:
    labels = const.labels[const.nearest(np.asarray(estimates).ravel())]
    b = const.bits_per_symbol
    return ((labels[:, None] >> np.arange(b - 1, -1, -1)) & 1).ravel()


# -- frame and link plumbing ------------------------------------------------------------


@dataclass(frozen=True)
class FrameConfig:
    """Frame layout: ``streams`` M, ``block_length`` k vectors, ``cyclic_prefix`` C vectors."""

    streams: int = 2
    block_length: int = 256
    cyclic_prefix: int = 0
    blocks: int = 1
    constellation: str = "16-QAM"

    def __post_init__(self):
        if self.streams < 1 or self.block_length < 1 or self.blocks < 1 or self.cyclic_prefix < 0:
            raise ValueError("invalid frame dimensions")

    @property
    def symbols_per_stream(self) -> int:
        return self.block_length * self.blocks

    def check_prefix(self, channel_memory: int):
        """The prefix must absorb the P~ - 1 vectors of channel memory."""
        if self.cyclic_prefix < channel_memory - 1:
            raise ValueError(
                f"cyclic prefix of {self.cyclic_prefix} vectors is shorter than the channel "
                f"memory ({channel_memory - 1} vectors)"
            )


@dataclass(frozen=True)
class SoftEstimates:
    """Soft outputs ``estimates`` aligned with the transmitted ``symbols`` (M x K)."""

    symbols: np.ndarray
    estimates: np.ndarray


@dataclass(frozen=True)
class RFStage:
    """Everything between digital pre-coding and digital post-coding."""

    composite: CompositeChannel
    q_rf: np.ndarray
    d_rf: np.ndarray
    tx_power: float
    streams: int
    pa_chain: PAChain | None = None
    pulse: PulseShape | None = None
    noise: NoiseModel | None = None

    @property
    def amplitude(self) -> float:
        return float(np.sqrt(self.tx_power / self.streams))

    @property
    def taps(self) -> np.ndarray:
        """Effective RF-to-RF taps L(n)."""
        return effective_channel(self.composite, self.q_rf, self.d_rf)

    def transit(self, x_bb: np.ndarray, chain_rms: np.ndarray, rng: np.random.Generator | None) -> np.ndarray:
        if self.pa_chain is None or self.pa_chain.is_ideal:
            y = linear_transit(x_bb, self.taps, self.amplitude)
        else:
            if self.pulse is None:
                raise ValueError("the nonlinear front end needs a pulse shape")
            y = waveform_chain(x_bb, self.composite, self.q_rf, self.d_rf, self.pulse,
                               self.pa_chain, self.amplitude, chain_rms)
        if self.noise is not None:
            if rng is None:
                raise ValueError("a random generator is required when noise is enabled")
            w = sample_noise(self.composite.n_rx, y.shape[1], self.noise, rng)
            y = y + self.d_rf.conj().T @ w
        return y


def _check_dims(stage: RFStage, bf: Beamformers, symbols: np.ndarray):
    m = bf.streams
    if symbols.shape[0] != m or stage.streams != m:
        raise ValueError(f"symbols have {symbols.shape[0]} streams, beamformers {m}")
    if bf.q_rf.shape[0] != stage.composite.n_tx or bf.d_rf.shape[0] != stage.composite.n_rx:
        raise ValueError("analog beamformers do not match the array sizes")
    if bf.q_bb.shape[-2] != bf.q_rf.shape[1] or bf.d_bb.shape[-2] != bf.d_rf.shape[1]:
        raise ValueError("digital and analog beamformer dimensions disagree")


def make_stage(composite: CompositeChannel, bf: Beamformers, tx_power: float,
               pa_chain: PAChain | None = None, pulse: PulseShape | None = None,
               noise: NoiseModel | None = None) -> RFStage:
    return RFStage(composite, bf.q_rf, bf.d_rf, tx_power, bf.streams, pa_chain, pulse, noise)


# -- SCM with time-domain ZF ----------------------------------------------------------------


def build_block_model(eff_taps: np.ndarray, d_bb: np.ndarray, q_bb: np.ndarray,
                      amplitude: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Stacked model [r(n+P~-1); ...; r(n)] = A s_stack + B w_stack.

    Row block i holds r(n + P~ - 1 - i) and column block j holds
    s(n + P~ - 1 - j), so block (i, j) is a D_BB^H L(j - i) Q_BB and the
    current symbol s(n) sits in column block P~ - 1.
    """
    n_taps = eff_taps.shape[0]
    m = q_bb.shape[1]
    f = amplitude * np.einsum("ia,nij,jb->nab", d_bb.conj(), eff_taps, q_bb)
    a = np.zeros((m * n_taps, m * (2 * n_taps - 1)), dtype=complex)
    for i in range(n_taps):
        for ell in range(n_taps):
            j = i + ell
            a[i * m:(i + 1) * m, j * m:(j + 1) * m] = f[ell]
    b = np.kron(np.eye(n_taps), d_bb.conj().T)
    return a, b


def zf_tde_equalizer(a: np.ndarray, streams: int, n_taps: int) -> np.ndarray:
    """Unit-norm ZF columns (A A^H)^+ a_l for the current-symbol columns of A."""
    cols = a[:, streams * (n_taps - 1): streams * n_taps]
    e = np.linalg.pinv(a @ a.conj().T, hermitian=True) @ cols
    return e / np.linalg.norm(e, axis=0)


def scm_tde_link(symbols: np.ndarray, stage: RFStage, bf: Beamformers,
                 rng: np.random.Generator | None = None) -> SoftEstimates:
    """Single-carrier link with block time-domain ZF.

    The frame is extended cyclically by P~ - 1 vectors on both sides so every
    estimate sees a full observation window.
    """
    symbols = np.asarray(symbols, dtype=complex)
    _check_dims(stage, bf, symbols)
    m, k = symbols.shape
    n_taps = stage.composite.tap_count
    w = n_taps - 1
    ext = np.concatenate([symbols[:, k - w:] if w else symbols[:, :0],
                          symbols,
                          np.tile(symbols, (1, int(np.ceil(w / k)) + 1))[:, :w]], axis=1)
    if ext.shape[1] != k + 2 * w:
        raise ValueError(f"frame of {k} vectors is too short for {n_taps} channel taps")
    x = bf.q_bb @ ext
    y = stage.transit(x, np.linalg.norm(bf.q_bb, axis=1), rng)
    r = bf.d_bb.conj().T @ y

    a, _ = build_block_model(stage.taps, bf.d_bb, bf.q_bb, stage.amplitude)
    e = zf_tde_equalizer(a, m, n_taps)
    stack = np.concatenate([r[:, w + n_taps - 1 - i: w + n_taps - 1 - i + k] for i in range(n_taps)])
    return SoftEstimates(symbols, e.conj().T @ stack)


# -- SCM with cyclic prefix and frequency-domain ZF ------------------------------------------


def _bin_responses(taps: np.ndarray, k: int) -> np.ndarray:
    if k < taps.shape[0]:
        raise ValueError(f"block length {k} is shorter than the channel memory {taps.shape[0]}")
    return np.fft.fft(taps, n=k, axis=0)


def _check_bin(mat: np.ndarray, n: int):
    cond = np.linalg.cond(mat)
    if not np.isfinite(cond) or cond > _COND_LIMIT:
        raise SingularBinError(n, cond)


def _with_prefix(blocks: list[np.ndarray], c: int) -> np.ndarray:
    return np.concatenate([np.concatenate([b[:, b.shape[1] - c:], b], axis=1) for b in blocks], axis=1)


def fde_bin_matrices(stage: RFStage, bf: Beamformers, k: int) -> np.ndarray:
    """Per-bin equivalent channels a D_BB^H Hcal(n) Q_BB (unnormalized DFT)."""
    freq = _bin_responses(stage.taps, k)
    return stage.amplitude * np.einsum("ia,nij,jb->nab", bf.d_bb.conj(), freq, bf.q_bb)


def scm_fde_link(symbols: np.ndarray, stage: RFStage, bf: Beamformers, frame: FrameConfig,
                 rng: np.random.Generator | None = None, window_shift: int = 0) -> SoftEstimates:
    """Single-carrier link with a cyclic prefix of C vectors and per-bin ZF.

    ``window_shift`` moves the receive window that many vectors earlier into
    the prefix; the resulting cyclic rotation is undone after equalization.
    """
    symbols = np.asarray(symbols, dtype=complex)
    _check_dims(stage, bf, symbols)
    k, c = frame.block_length, frame.cyclic_prefix
    frame.check_prefix(stage.composite.tap_count)
    if not 0 <= window_shift <= c - (stage.composite.tap_count - 1):
        raise ValueError("window shift exceeds the unused part of the cyclic prefix")
    if symbols.shape[1] % k:
        raise ValueError(f"{symbols.shape[1]} vectors do not fill blocks of {k}")
    n_blocks = symbols.shape[1] // k

    h = fde_bin_matrices(stage, bf, k)
    for n in range(k):
        _check_bin(h[n], n)
    inv = np.linalg.inv(h)

    blocks = np.split(symbols, n_blocks, axis=1)
    x = bf.q_bb @ _with_prefix(blocks, c)
    y = stage.transit(x, np.linalg.norm(bf.q_bb, axis=1), rng)
    r = bf.d_bb.conj().T @ y

    out = []
    for b in range(n_blocks):
        start = b * (k + c) + c - window_shift
        rf = np.fft.fft(r[:, start:start + k], axis=1, norm="ortho")
        est = np.fft.ifft(np.einsum("nab,bn->an", inv, rf), axis=1, norm="ortho")
        out.append(np.roll(est, -window_shift, axis=1))
    return SoftEstimates(symbols, np.concatenate(out, axis=1))


# -- MIMO-OFDM ----------------------------------------------------------------------------


def ofdm_bin_matrices(stage: RFStage, bf: Beamformers, k: int) -> np.ndarray:
    """Per-subcarrier a D_BB(n)^H D_RF^H Hbar(n) Q_RF Q_BB(n)."""
    freq = _bin_responses(stage.taps, k)
    return stage.amplitude * np.einsum("nia,nij,njb->nab", bf.d_bb.conj(), freq, bf.q_bb)


def ofdm_chain_rms(q_bb: np.ndarray) -> np.ndarray:
    """Expected rms of each RF-chain time-domain stream (unit-energy symbols)."""
    return np.sqrt(np.mean(np.sum(np.abs(q_bb) ** 2, axis=2), axis=0))


def ofdm_link(symbols: np.ndarray, stage: RFStage, bf: Beamformers, frame: FrameConfig,
              rng: np.random.Generator | None = None) -> SoftEstimates:
    """MIMO-OFDM link; ``symbols`` is M x (blocks * k), bin-major within each block."""
    symbols = np.asarray(symbols, dtype=complex)
    _check_dims(stage, bf, symbols)
    k, c = frame.block_length, frame.cyclic_prefix
    if bf.q_bb.shape[0] != k or bf.d_bb.shape[0] != k:
        raise ValueError(f"beamformers cover {bf.q_bb.shape[0]} bins, frame has {k}")
    frame.check_prefix(stage.composite.tap_count)
    if symbols.shape[1] % k:
        raise ValueError(f"{symbols.shape[1]} vectors do not fill blocks of {k}")
    n_blocks = symbols.shape[1] // k

    h = ofdm_bin_matrices(stage, bf, k)
    for n in range(k):
        _check_bin(h[n], n)
    zf = np.linalg.pinv(h)

    blocks = []
    for s in np.split(symbols, n_blocks, axis=1):
        freq = np.einsum("nab,bn->an", bf.q_bb, s)
        blocks.append(np.fft.ifft(freq, axis=1, norm="ortho"))
    x = _with_prefix(blocks, c)
    y = stage.transit(x, ofdm_chain_rms(bf.q_bb), rng)

    out = []
    for b in range(n_blocks):
        start = b * (k + c) + c
        yf = np.fft.fft(y[:, start:start + k], axis=1, norm="ortho")
        r = np.einsum("nia,in->an", bf.d_bb.conj(), yf)
        out.append(np.einsum("nab,bn->an", zf, r))
    return SoftEstimates(symbols, np.concatenate(out, axis=1))
