"""Clustered mmWave MIMO channel and its discrete-time composite taps."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class ArrayGeometry:
    """Planar array with ``horizontal`` x ``vertical`` elements.

    ``spacing`` is the inter-element distance in wavelengths.
    """

    horizontal: int
    vertical: int = 1
    spacing: float = 0.5

    def __post_init__(self):
        if self.horizontal < 1 or self.vertical < 1:
            raise ValueError("array dimensions must be >= 1")
        if self.spacing <= 0:
            raise ValueError("element spacing must be positive")

    @property
    def size(self) -> int:
        return self.horizontal * self.vertical


def array_response(geometry: ArrayGeometry, azimuth: float, elevation: float) -> np.ndarray:
    """Unit-norm array steering vector.

    ``elevation`` is the polar angle measured from the vertical array axis, so
    ``elevation = pi/2`` is the horizontal plane.  Elements are ordered
    row-major over (horizontal index m, vertical index n).
    """
    m = np.arange(geometry.horizontal)[:, None]
    n = np.arange(geometry.vertical)[None, :]
    kd = 2.0 * np.pi * geometry.spacing
    phase = -kd * (m * np.sin(azimuth) * np.sin(elevation) + n * np.cos(elevation))
    return np.exp(1j * phase).ravel() / np.sqrt(geometry.size)


def _steering_matrix(geometry: ArrayGeometry, azimuth: np.ndarray, elevation: np.ndarray) -> np.ndarray:
    """Stack of steering vectors, one column per angle pair."""
    m = np.repeat(np.arange(geometry.horizontal), geometry.vertical)[:, None]
    n = np.tile(np.arange(geometry.vertical), geometry.horizontal)[:, None]
    kd = 2.0 * np.pi * geometry.spacing
    phase = -kd * (m * np.sin(azimuth) * np.sin(elevation) + n * np.cos(elevation))
    return np.exp(1j * phase) / np.sqrt(geometry.size)


@dataclass(frozen=True)
class ChannelParams:
    """Statistical parameters of the clustered channel.

    Angles are in radians.  Cluster elevations are offsets from the horizon;
    they are converted to polar angles before evaluating array responses.
    """

    n_clusters: int = 5
    rays_per_cluster: int = 10
    azimuth_range: float = np.pi / 3
    elevation_range: float = np.pi / 12
    ray_angle_std: float = np.deg2rad(5.0)
    max_excess_length: float = 0.1
    los_intercept_db: float = 69.8
    los_exponent: float = 2.0
    nlos_intercept_db: float = 82.7
    nlos_exponent: float = 2.69
    los_breakpoint: float = 20.0
    los_decay: float = 39.0
    carrier_frequency: float = 73e9
    los_enabled: bool = True

    def __post_init__(self):
        if self.n_clusters < 1 or self.rays_per_cluster < 1:
            raise ValueError("need at least one cluster with one ray")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency

    @property
    def total_rays(self) -> int:
        return self.n_clusters * self.rays_per_cluster


_REFERENCE_WAVELENGTH = SPEED_OF_LIGHT / 73e9


def los_probability(distance: float, breakpoint: float = 20.0, decay: float = 39.0) -> float:
    if distance <= 0:
        raise ValueError("distance must be positive")
    e = np.exp(-distance / decay)
    return min(breakpoint / distance, 1.0) * (1.0 - e) + e


def los_indicator(distance: float, rng: np.random.Generator, breakpoint: float = 20.0,
                  decay: float = 39.0) -> bool:
    return bool(rng.random() < los_probability(distance, breakpoint, decay))


def path_loss(distance, los: bool, carrier_wavelength: float = _REFERENCE_WAVELENGTH,
              params: ChannelParams | None = None):
    """Linear power gain of the floating-intercept model.

    The intercepts are calibrated at 73 GHz; other wavelengths shift the
    intercept by the free-space frequency dependence.
    """
    params = params or ChannelParams()
    distance = np.asarray(distance, dtype=float)
    if np.any(distance <= 0):
        raise ValueError("distance must be positive")
    if los:
        alpha, beta = params.los_intercept_db, params.los_exponent
    else:
        alpha, beta = params.nlos_intercept_db, params.nlos_exponent
    alpha = alpha + 20.0 * np.log10(_REFERENCE_WAVELENGTH / carrier_wavelength)
    pl_db = alpha + 10.0 * beta * np.log10(distance)
    return 10.0 ** (-pl_db / 10.0)


@dataclass(frozen=True)
class PathComponent:
    gain: complex
    length: float
    delay: float
    attenuation: float
    azimuth_tx: float
    elevation_tx: float
    azimuth_rx: float
    elevation_rx: float


@dataclass(frozen=True)
class LOSComponent:
    phase: float
    delay: float
    attenuation: float
    azimuth_tx: float
    elevation_tx: float
    azimuth_rx: float
    elevation_rx: float


@dataclass(frozen=True)
class ChannelRealization:
    """One drop of the clustered channel.

    Ray quantities are stored as flat arrays (cluster-major) and
    ``rays_per_cluster`` records how they split into clusters.
    """

    distance: float
    gains: np.ndarray
    lengths: np.ndarray
    attenuations: np.ndarray
    azimuth_tx: np.ndarray
    elevation_tx: np.ndarray
    azimuth_rx: np.ndarray
    elevation_rx: np.ndarray
    rays_per_cluster: tuple[int, ...]
    normalization: float
    los: LOSComponent | None = None

    @property
    def delays(self) -> np.ndarray:
        return self.lengths / SPEED_OF_LIGHT

    @property
    def los_present(self) -> bool:
        return self.los is not None

    @property
    def n_rays(self) -> int:
        return int(self.gains.size)

    @property
    def clusters(self) -> list[list[PathComponent]]:
        paths = list(self.paths())
        out, start = [], 0
        for count in self.rays_per_cluster:
            out.append(paths[start:start + count])
            start += count
        return out

    def paths(self) -> Iterator[PathComponent]:
        for i in range(self.n_rays):
            yield PathComponent(
                complex(self.gains[i]), float(self.lengths[i]), float(self.delays[i]),
                float(self.attenuations[i]), float(self.azimuth_tx[i]), float(self.elevation_tx[i]),
                float(self.azimuth_rx[i]), float(self.elevation_rx[i]),
            )

    def scaled(self, factor: complex) -> "ChannelRealization":
        """Copy with every ray gain multiplied by ``factor`` (LOS untouched)."""
        return ChannelRealization(
            self.distance, self.gains * factor, self.lengths, self.attenuations,
            self.azimuth_tx, self.elevation_tx, self.azimuth_rx, self.elevation_rx,
            self.rays_per_cluster, self.normalization, self.los,
        )

    def to_json(self) -> str:
        """Regression-snapshot form; complex numbers are ``[re, im]`` pairs."""
        doc = {
            "distance": self.distance,
            "gains": [[g.real, g.imag] for g in self.gains.tolist()],
            "lengths": self.lengths.tolist(),
            "attenuations": self.attenuations.tolist(),
            "azimuth_tx": self.azimuth_tx.tolist(),
            "elevation_tx": self.elevation_tx.tolist(),
            "azimuth_rx": self.azimuth_rx.tolist(),
            "elevation_rx": self.elevation_rx.tolist(),
            "rays_per_cluster": list(self.rays_per_cluster),
            "normalization": self.normalization,
            "los": None if self.los is None else self.los.__dict__,
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ChannelRealization":
        doc = json.loads(text)
        los = None if doc["los"] is None else LOSComponent(**doc["los"])
        return cls(
            doc["distance"],
            np.array([complex(re, im) for re, im in doc["gains"]]),
            *(np.array(doc[k], dtype=float) for k in
              ("lengths", "attenuations", "azimuth_tx", "elevation_tx", "azimuth_rx", "elevation_rx")),
            rays_per_cluster=tuple(doc["rays_per_cluster"]),
            normalization=doc["normalization"],
            los=los,
        )


def _laplacian(rng: np.random.Generator, std: float, size) -> np.ndarray:
    return rng.laplace(0.0, std / np.sqrt(2.0), size=size)


def sample_realization(params: ChannelParams, distance: float, n_rx: int, n_tx: int,
                       rng: np.random.Generator) -> ChannelRealization:
    """Draw one clustered channel at link length ``distance`` (meters).

    ``n_rx`` and ``n_tx`` only enter through the normalization factor.
    """
    if distance <= 0:
        raise ValueError("distance must be positive")
    ncl, nray = params.n_clusters, params.rays_per_cluster
    total = ncl * nray

    def cluster_angles(spread):
        centers = rng.uniform(-spread, spread, size=ncl)
        return np.repeat(centers, nray) + _laplacian(rng, params.ray_angle_std, total)

    az_t = cluster_angles(params.azimuth_range)
    el_t = np.pi / 2 - cluster_angles(params.elevation_range)
    az_r = cluster_angles(params.azimuth_range)
    el_r = np.pi / 2 - cluster_angles(params.elevation_range)

    lengths = distance * (1.0 + rng.uniform(0.0, params.max_excess_length, size=total))
    gains = (rng.standard_normal(total) + 1j * rng.standard_normal(total)) / np.sqrt(2.0)
    attenuations = path_loss(lengths, False, params.wavelength, params)

    los = None
    if params.los_enabled and los_indicator(distance, rng, params.los_breakpoint, params.los_decay):
        los = LOSComponent(
            phase=float(rng.uniform(0.0, 2.0 * np.pi)),
            delay=distance / SPEED_OF_LIGHT,
            attenuation=float(path_loss(distance, True, params.wavelength, params)),
            azimuth_tx=float(rng.uniform(-params.azimuth_range, params.azimuth_range)),
            elevation_tx=np.pi / 2,
            azimuth_rx=float(rng.uniform(-params.azimuth_range, params.azimuth_range)),
            elevation_rx=np.pi / 2,
        )

    arrays = [gains, lengths, attenuations, az_t, el_t, az_r, el_r]
    for a in arrays:
        a.setflags(write=False)
    return ChannelRealization(
        float(distance), *arrays,
        rays_per_cluster=(nray,) * ncl,
        normalization=float(np.sqrt(n_rx * n_tx / total)),
        los=los,
    )


@dataclass(frozen=True)
class CompositeChannel:
    """Symbol-spaced composite response ``taps[n]`` (N_R x N_T), n = 0..P~-1.

    The individual propagation terms are kept (``path_matrices`` and
    ``path_delays`` in symbol intervals, already aligned to the first arrival)
    so that the oversampled front end can re-filter them.  ``offset`` is the
    tap index at which a zero-delay path peaks.
    """

    taps: np.ndarray
    symbol_interval: float
    path_matrices: np.ndarray
    path_delays: np.ndarray
    offset: int
    multipath_span: int
    filter_span: int

    @property
    def tap_count(self) -> int:
        return self.taps.shape[0]

    @property
    def n_rx(self) -> int:
        return self.taps.shape[1]

    @property
    def n_tx(self) -> int:
        return self.taps.shape[2]

    def frequency_response(self, k: int) -> np.ndarray:
        """Unnormalized k-point DFT of the tap sequence, shape (k, N_R, N_T)."""
        if k < self.tap_count:
            raise ValueError(f"k={k} is shorter than the channel memory P~={self.tap_count}")
        return np.fft.fft(self.taps, n=k, axis=0)


def sample_kernel(path_matrices: np.ndarray, path_delays: np.ndarray,
                  kernel: Callable[[np.ndarray], np.ndarray], times: np.ndarray) -> np.ndarray:
    """Evaluate sum_p G_p * kernel(t - delay_p) for every t in ``times``."""
    weights = kernel(times[:, None] - path_delays[None, :])
    return np.tensordot(weights, path_matrices, axes=(1, 0))


def composite_taps(realization: ChannelRealization, pulse, symbol_interval: float,
                   tx_geometry: ArrayGeometry, rx_geometry: ArrayGeometry,
                   kernel: Callable[[np.ndarray], np.ndarray] | None = None) -> CompositeChannel:
    """Discrete-time composite response including transmit and receive filtering.

    ``pulse`` supplies ``filter_span`` (P_h) and the cascade ``pulse.cascade(t)``
    (time in symbol intervals); ``kernel`` overrides the cascade if given.
    Delays are measured from the earliest arrival.
    """
    if symbol_interval <= 0:
        raise ValueError("symbol interval must be positive")
    if realization.n_rays == 0 and realization.los is None:
        raise ValueError("degenerate channel: no propagation paths")

    a_t = _steering_matrix(tx_geometry, realization.azimuth_tx, realization.elevation_tx)
    a_r = _steering_matrix(rx_geometry, realization.azimuth_rx, realization.elevation_rx)
    amp = realization.normalization * realization.gains * np.sqrt(realization.attenuations)
    matrices = np.einsum("p,ip,jp->pij", amp, a_r, a_t.conj())
    delays = realization.delays

    if realization.los is not None:
        los = realization.los
        n_rx, n_tx = rx_geometry.size, tx_geometry.size
        g = np.sqrt(n_rx * n_tx) * np.exp(1j * los.phase) * np.sqrt(los.attenuation)
        los_mat = g * np.outer(array_response(rx_geometry, los.azimuth_rx, los.elevation_rx),
                               array_response(tx_geometry, los.azimuth_tx, los.elevation_tx).conj())
        matrices = np.concatenate([matrices, los_mat[None]], axis=0)
        delays = np.append(delays, los.delay)

    rel = (delays - delays.min()) / symbol_interval
    return composite_from_paths(matrices, rel, pulse, symbol_interval, kernel)


def composite_from_paths(path_matrices: np.ndarray, path_delays: np.ndarray, pulse,
                         symbol_interval: float,
                         kernel: Callable[[np.ndarray], np.ndarray] | None = None) -> CompositeChannel:
    """Composite taps from explicit propagation terms (delays in symbol intervals, >= 0)."""
    path_matrices = np.asarray(path_matrices, dtype=complex)
    path_delays = np.asarray(path_delays, dtype=float)
    if np.any(path_delays < 0):
        raise ValueError("path delays must be aligned to the first arrival")
    span_p = int(np.floor(path_delays.max())) + 1
    p_h = pulse.filter_span
    n_taps = span_p + 2 * p_h - 1
    offset = p_h - 1
    kernel = kernel or pulse.cascade
    taps = sample_kernel(path_matrices, path_delays, kernel, np.arange(n_taps) - float(offset))
    for a in (taps, path_matrices, path_delays):
        a.setflags(write=False)
    return CompositeChannel(taps, symbol_interval, path_matrices, path_delays, offset, span_p, p_h)


def effective_channel(composite: CompositeChannel | np.ndarray, q_rf: np.ndarray,
                      d_rf: np.ndarray) -> np.ndarray:
    """RF-to-RF taps ``D_RF^H H(n) Q_RF``, shape (P~, N_R^RF, N_T^RF)."""
    taps = composite.taps if isinstance(composite, CompositeChannel) else np.asarray(composite)
    if taps.shape[2] != q_rf.shape[0] or taps.shape[1] != d_rf.shape[0]:
        raise ValueError(
            f"beamformer dimensions {d_rf.shape}/{q_rf.shape} do not match taps {taps.shape[1:]}"
        )
    return np.einsum("ia,nij,jb->nab", d_rf.conj(), taps, q_rf)
