"""SVD beamformers and their constant-modulus hybrid decomposition."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import CompositeChannel

_COND_LIMIT = 1e12


@dataclass(frozen=True)
class FDBeamformers:
    """Fully-digital pre-coder ``q`` (N_T x M) and post-coder ``d`` (N_R x M)."""

    q: np.ndarray
    d: np.ndarray
    singular_values: np.ndarray

    @property
    def streams(self) -> int:
        return self.q.shape[1]


@dataclass(frozen=True)
class Beamformers:
    """Analog/digital beamformer set used by the transceivers.

    ``q_bb`` and ``d_bb`` are 2-D for single-carrier links and 3-D
    (bins x chains x streams) for OFDM.  Fully-digital architectures use
    identity analog stages.
    """

    q_rf: np.ndarray
    q_bb: np.ndarray
    d_rf: np.ndarray
    d_bb: np.ndarray
    residuals: dict = field(default_factory=dict)

    @property
    def streams(self) -> int:
        return self.q_bb.shape[-1]

    @property
    def per_bin(self) -> bool:
        return self.q_bb.ndim == 3

    @property
    def tx_chains(self) -> int:
        return self.q_rf.shape[1]

    @property
    def rx_chains(self) -> int:
        return self.d_rf.shape[1]

    def precoder(self) -> np.ndarray:
        """Overall pre-coder Q_RF Q_BB (per bin for OFDM)."""
        return np.matmul(self.q_rf, self.q_bb)


def dominant_tap(composite: CompositeChannel | np.ndarray) -> int:
    taps = composite.taps if isinstance(composite, CompositeChannel) else np.asarray(composite)
    if taps.shape[0] == 0:
        raise ValueError("channel has no taps")
    norms = np.linalg.norm(taps.reshape(taps.shape[0], -1), axis=1)
    return int(np.argmax(norms))


def _svd_pair(h: np.ndarray, m: int) -> FDBeamformers:
    u, s, vh = np.linalg.svd(h)
    q = vh.conj().T[:, :m]
    d = u[:, :m]
    # Largest-magnitude entry of each pre-coder column made real positive;
    # the post-coder takes the same rotation so that D^H H Q stays positive.
    pivot = q[np.argmax(np.abs(q), axis=0), np.arange(m)]
    rot = np.conj(pivot) / np.abs(pivot)
    return FDBeamformers(q * rot, d * rot, s[:m])


def fd_scm_beamformers(composite: CompositeChannel | np.ndarray, m: int) -> FDBeamformers:
    """Beamformers from the SVD of the strongest tap."""
    taps = composite.taps if isinstance(composite, CompositeChannel) else np.asarray(composite)
    if not 1 <= m <= min(taps.shape[1], taps.shape[2]):
        raise ValueError(f"cannot transmit {m} streams over a {taps.shape[1]}x{taps.shape[2]} channel")
    return _svd_pair(taps[dominant_tap(taps)], m)


def fd_ofdm_beamformers(composite: CompositeChannel, m: int, k: int) -> list[FDBeamformers]:
    """Per-subcarrier SVD beamformers of the k-point channel DFT."""
    if not 1 <= m <= min(composite.n_rx, composite.n_tx):
        raise ValueError(f"cannot transmit {m} streams over a {composite.n_rx}x{composite.n_tx} channel")
    freq = composite.frequency_response(k)
    return [_svd_pair(freq[n], m) for n in range(k)]


def _solve_gram(gram: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """gram^{-1} rhs with a small ridge when gram is badly conditioned."""
    if np.linalg.cond(gram) > _COND_LIMIT:
        dim = gram.shape[0]
        ridge = 1e-10 * np.real(np.trace(gram)) / dim
        if not ridge > 0:
            raise np.linalg.LinAlgError("persistent singularity in BCD-SD Gram matrix")
        gram = gram + ridge * np.eye(dim)
    return np.linalg.solve(gram, rhs)


def _ls_baseband(a_rf: np.ndarray, target: np.ndarray) -> np.ndarray:
    return _solve_gram(a_rf.conj().T @ a_rf, a_rf.conj().T @ target)


def _phase_sweep(target: np.ndarray, a_rf: np.ndarray, a_bb: np.ndarray, modulus: float) -> np.ndarray:
    """One exact element-wise phase update of A_RF with A_BB fixed.

    Each entry is set to the phase minimizing the residual with all others
    held, so the residual cannot increase.
    """
    a_rf = a_rf.copy()
    resid = target - a_rf @ a_bb
    for j in range(a_rf.shape[1]):
        row = a_bb[j]
        energy = np.vdot(row, row).real
        if energy == 0:
            continue
        # residual with column j removed, projected on the j-th baseband row
        partial = resid + np.outer(a_rf[:, j], row)
        corr = partial @ row.conj()
        new_col = modulus * np.exp(1j * np.angle(corr))
        resid = partial - np.outer(new_col, row)
        a_rf[:, j] = new_col
    return a_rf


def bcd_sd(target: np.ndarray, n_rf: int, modulus: float | None = None, max_iter: int = 50,
           tol: float = 1e-6, init: str = "target", rng: np.random.Generator | None = None):
    """Constant-modulus/unconstrained factorization target ~ A_RF A_BB.

    Alternates a least-squares update of A_BB with a phase projection of the
    unconstrained A_RF solution.  If the projected candidate would raise the
    residual, an exact phase-by-phase sweep is used for that iteration
    instead, keeping the residual sequence non-increasing.

    Returns ``(a_rf, a_bb, residuals)``; ``residuals`` holds the Frobenius
    error after each iteration.
    """
    target = np.asarray(target, dtype=complex)
    n, m_total = target.shape
    if n_rf < 1:
        raise ValueError("need at least one RF chain")
    if not np.any(target):
        raise ValueError("target beamformer is zero")
    if modulus is None:
        modulus = 1.0 / np.sqrt(n)

    phases = np.zeros((n, n_rf))
    use = min(n_rf, m_total) if init == "target" else 0
    phases[:, :use] = np.angle(target[:, :use])
    if use < n_rf:
        rng = rng if rng is not None else np.random.default_rng(0)
        phases[:, use:] = rng.uniform(-np.pi, np.pi, size=(n, n_rf - use))
    a_rf = modulus * np.exp(1j * phases)
    a_bb = _ls_baseband(a_rf, target)
    residual = np.linalg.norm(target - a_rf @ a_bb)
    trace: list[float] = []
    ref = np.linalg.norm(target)

    for _ in range(max_iter):
        gram = a_bb @ a_bb.conj().T
        unconstrained = _solve_gram(gram.T, (target @ a_bb.conj().T).T).T
        cand_rf = modulus * np.exp(1j * np.angle(unconstrained))
        cand_bb = _ls_baseband(cand_rf, target)
        cand_res = np.linalg.norm(target - cand_rf @ cand_bb)
        if cand_res > residual:
            cand_rf = _phase_sweep(target, a_rf, a_bb, modulus)
            cand_bb = _ls_baseband(cand_rf, target)
            cand_res = np.linalg.norm(target - cand_rf @ cand_bb)
            if cand_res > residual:
                cand_rf, cand_bb, cand_res = a_rf, a_bb, residual
        change = residual - cand_res
        a_rf, a_bb, residual = cand_rf, cand_bb, cand_res
        trace.append(float(residual))
        if change <= tol * ref:
            break
    return a_rf, a_bb, trace


def _check_chains(n_rf: int, m: int, n_ant: int, side: str):
    if not m <= n_rf <= n_ant:
        raise ValueError(f"{side}: need streams ({m}) <= RF chains ({n_rf}) <= antennas ({n_ant})")


def hybrid_scm(fd: FDBeamformers, tx_chains: int, rx_chains: int, max_iter: int = 50,
               tol: float = 1e-6, init: str = "target",
               rng: np.random.Generator | None = None) -> Beamformers:
    m = fd.streams
    _check_chains(tx_chains, m, fd.q.shape[0], "transmitter")
    _check_chains(rx_chains, m, fd.d.shape[0], "receiver")
    q_rf, q_bb, q_trace = bcd_sd(fd.q, tx_chains, max_iter=max_iter, tol=tol, init=init, rng=rng)
    d_rf, d_bb, d_trace = bcd_sd(fd.d, rx_chains, max_iter=max_iter, tol=tol, init=init, rng=rng)
    q_bb = q_bb * np.sqrt(m) / np.linalg.norm(q_rf @ q_bb)
    return Beamformers(q_rf, q_bb, d_rf, d_bb, {"tx": q_trace, "rx": d_trace})


def hybrid_ofdm(fd_list: list[FDBeamformers], tx_chains: int, rx_chains: int, max_iter: int = 50,
                tol: float = 1e-6, init: str = "target",
                rng: np.random.Generator | None = None) -> Beamformers:
    """Common analog stage for all subcarriers from the stacked per-bin targets."""
    k = len(fd_list)
    m = fd_list[0].streams
    _check_chains(tx_chains, m, fd_list[0].q.shape[0], "transmitter")
    _check_chains(rx_chains, m, fd_list[0].d.shape[0], "receiver")
    q_stack = np.concatenate([fd.q for fd in fd_list], axis=1)
    d_stack = np.concatenate([fd.d for fd in fd_list], axis=1)
    q_rf, q_bb, q_trace = bcd_sd(q_stack, tx_chains, max_iter=max_iter, tol=tol, init=init, rng=rng)
    d_rf, d_bb, d_trace = bcd_sd(d_stack, rx_chains, max_iter=max_iter, tol=tol, init=init, rng=rng)
    q_bb = q_bb * np.sqrt(k * m) / np.linalg.norm(q_rf @ q_bb)
    q_bins = np.stack(np.split(q_bb, k, axis=1))
    d_bins = np.stack(np.split(d_bb, k, axis=1))
    return Beamformers(q_rf, q_bins, d_rf, d_bins, {"tx": q_trace, "rx": d_trace})


def fully_digital(fd: FDBeamformers | list[FDBeamformers]) -> Beamformers:
    """Wrap SVD beamformers with identity analog stages."""
    if isinstance(fd, FDBeamformers):
        return Beamformers(np.eye(fd.q.shape[0], dtype=complex), fd.q,
                           np.eye(fd.d.shape[0], dtype=complex), fd.d)
    q = np.stack([f.q for f in fd])
    d = np.stack([f.d for f in fd])
    return Beamformers(np.eye(q.shape[1], dtype=complex), q, np.eye(d.shape[1], dtype=complex), d)
