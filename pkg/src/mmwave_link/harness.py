"""Scenario sweeps: configuration, seeding, parallel Monte Carlo and output.

A sweep is a list of scenarios.  Each scenario expands into
(distance, realization) tasks; one task draws a channel, designs the
beamformers and runs the link at every transmit power with identical data
and noise draws.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .beamforming import fd_ofdm_beamformers, fd_scm_beamformers, fully_digital, hybrid_ofdm, hybrid_scm
from .channel import SPEED_OF_LIGHT, ArrayGeometry, ChannelParams, composite_taps, sample_realization
from .frontend import REFERENCE_SPD, PREDISTORTER_PRESETS, NoiseModel, PAChain, PAModel, PulseShape, fit_predistorter
from .metrics import (PowerModel, SweepResult, ase, fit_aux_channel, gee, mi_mismatched,
                      power_consumption, uncoded_ber)
from .transceivers import (FrameConfig, SingularBinError, constellation, hard_demap, make_stage,
                           map_bits, ofdm_link, scm_fde_link, scm_tde_link)

WORKERS_ENV = "MMWAVE_LINK_WORKERS"
CSV_COLUMNS = (
    "scheme", "arch", "constellation", "M", "N_T", "N_R", "N_T_rf", "N_R_rf", "P_T_dBW",
    "distance_m", "pa_mode", "realizations", "ase_mean", "ase_stderr", "gee_mean", "gee_stderr",
    "ber_mean", "ber_stderr", "failures",
)
_CHANNEL_STREAM = 0
_LINK_STREAM = 1
_SPD_STREAM = 2


class ConfigError(ValueError):
    """Invalid sweep configuration; ``field`` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class ScenarioConfig:
    """One point set of the sweep grid.

    ``tx_chains``/``rx_chains`` default to ``streams`` for hybrid designs and
    are forced to the antenna counts for fully-digital ones.  A missing
    ``cyclic_prefix`` selects the channel memory bound for the largest
    distance swept.
    """

    name: str = ""
    scheme: str = "TDE"
    arch: str = "HY"
    n_tx: int = 50
    n_rx: int = 10
    tx_chains: int | None = None
    rx_chains: int | None = None
    streams: int = 2
    constellation: str = "16-QAM"
    block_length: int = 256
    cyclic_prefix: int | None = None
    blocks: int = 4
    tx_power_dbw: tuple[float, ...] = (0.0,)
    distances_m: tuple[float, ...] = (30.0,)
    pa_mode: str = "ideal"
    backoff_db: float = 0.0
    predistorter: str = "paper-spd"
    realizations: int = 50
    channel: dict = field(default_factory=dict)
    bandwidth: float = 500e6
    scm_symbol_interval: float = 2.44e-9
    rolloff: float = 0.22
    pulse_span: int = 4
    oversampling: int = 8
    noise_figure_db: float = 3.0
    mi_samples: int = 20000
    bcd_max_iter: int = 50
    bcd_tol: float = 1e-6
    power_model: str = "paper-vb"
    beta: float | None = None

    @property
    def label(self) -> str:
        return self.name or f"{self.scheme}-{self.arch}-{self.constellation}-M{self.streams}"

    @property
    def chains(self) -> tuple[int, int]:
        if self.arch == "FD":
            return self.n_tx, self.n_rx
        return (self.tx_chains or self.streams, self.rx_chains or self.streams)

    @property
    def symbol_interval(self) -> float:
        return 1.0 / self.bandwidth if self.scheme == "OFDM" else self.scm_symbol_interval

    def pulse(self) -> PulseShape:
        if self.scheme == "OFDM":
            return PulseShape("rect", oversampling=self.oversampling)
        return PulseShape("srrc", self.rolloff, self.pulse_span, self.oversampling)

    def channel_params(self) -> ChannelParams:
        return ChannelParams(**self.channel)

    def max_channel_memory(self, distance: float) -> int:
        """Largest P~ a realization at ``distance`` can produce."""
        params = self.channel_params()
        spread = params.max_excess_length * distance / SPEED_OF_LIGHT / self.symbol_interval
        return int(np.floor(spread)) + 1 + 2 * self.pulse().filter_span - 1

    def prefix(self) -> int:
        if self.cyclic_prefix is not None:
            return self.cyclic_prefix
        return max(self.max_channel_memory(d) for d in self.distances_m)

    def power_model_obj(self) -> PowerModel:
        model = PowerModel.preset(self.power_model)
        if self.beta is not None:
            model = dataclasses.replace(model, beta=self.beta)
        return model

    def validate(self):
        if self.scheme not in ("TDE", "FDE", "OFDM"):
            raise ConfigError("scheme", f"unknown scheme {self.scheme!r}")
        if self.arch not in ("FD", "HY"):
            raise ConfigError("arch", f"unknown architecture {self.arch!r}")
        if self.pa_mode not in ("ideal", "rapp", "rapp+spd"):
            raise ConfigError("pa_mode", f"unknown PA mode {self.pa_mode!r}")
        if self.predistorter not in (*PREDISTORTER_PRESETS, "fit"):
            raise ConfigError("predistorter", f"must be 'fit' or one of {sorted(PREDISTORTER_PRESETS)}")
        if not self.tx_power_dbw:
            raise ConfigError("tx_power_dbw", "sweep list is empty")
        if not self.distances_m or min(self.distances_m) <= 0:
            raise ConfigError("distances_m", "need a non-empty list of positive distances")
        if self.realizations < 1:
            raise ConfigError("realizations", "must be >= 1")
        tx_rf, rx_rf = self.chains
        if not self.streams <= tx_rf <= self.n_tx:
            raise ConfigError("tx_chains", "need streams <= RF chains <= antennas")
        if not self.streams <= rx_rf <= self.n_rx:
            raise ConfigError("rx_chains", "need streams <= RF chains <= antennas")
        try:
            constellation(self.constellation)
            self.channel_params()
            self.power_model_obj()
            self.pulse()
        except (ValueError, TypeError) as exc:
            raise ConfigError("scenario", str(exc)) from None
        n_sym = self.block_length * self.blocks
        if n_sym < 1000:
            raise ConfigError("blocks", f"{n_sym} symbols per stream is below the 1000 needed for the fit")
        if self.scheme != "TDE":
            memory = max(self.max_channel_memory(d) for d in self.distances_m)
            if self.block_length < memory:
                raise ConfigError("block_length", f"shorter than the channel memory {memory}")
            if self.prefix() < memory - 1:
                raise ConfigError("cyclic_prefix", f"must cover {memory - 1} vectors of channel memory")
            if self.prefix() >= self.block_length:
                raise ConfigError("cyclic_prefix", "must be shorter than the block")


_SCENARIO_FIELDS = {f.name for f in dataclasses.fields(ScenarioConfig)}


def scenario_from_dict(doc: dict) -> ScenarioConfig:
    unknown = set(doc) - _SCENARIO_FIELDS
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown scenario field")
    doc = dict(doc)
    for key in ("tx_power_dbw", "distances_m"):
        if key in doc:
            value = doc[key]
            doc[key] = tuple(float(v) for v in (value if isinstance(value, (list, tuple)) else [value]))
    for key in ("scheme", "arch"):
        if key in doc:
            doc[key] = str(doc[key]).upper()
    scen = ScenarioConfig(**doc)
    scen.validate()
    return scen


@dataclass(frozen=True)
class SweepConfig:
    seed: int = 0
    workers: int = 1
    scenarios: tuple[ScenarioConfig, ...] = ()

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "workers": self.workers,
            "scenarios": [_scenario_dict(s) for s in self.scenarios],
        }

    @property
    def config_hash(self) -> str:
        """Digest of the parsed configuration (worker count excluded)."""
        doc = self.to_dict()
        doc.pop("workers")
        return hashlib.sha256(json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def _scenario_dict(s: ScenarioConfig) -> dict:
    doc = dataclasses.asdict(s)
    doc["tx_power_dbw"] = list(s.tx_power_dbw)
    doc["distances_m"] = list(s.distances_m)
    return doc


def config_from_dict(doc: dict) -> SweepConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config", "top level must be a mapping")
    unknown = set(doc) - {"seed", "workers", "defaults", "scenarios"}
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown top-level field")
    defaults = doc.get("defaults") or {}
    entries = doc.get("scenarios")
    if entries is None:
        entries = []
    if not isinstance(entries, list):
        raise ConfigError("scenarios", "must be a list")
    scenarios = []
    for i, entry in enumerate(entries):
        try:
            scenarios.append(scenario_from_dict({**defaults, **(entry or {})}))
        except ConfigError as exc:
            raise ConfigError(f"scenarios[{i}].{exc.field}", str(exc).split(": ", 1)[1]) from None
    seed = doc.get("seed", 0)
    workers = doc.get("workers", 1)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed", "must be a non-negative integer")
    if not isinstance(workers, int) or workers < 0:
        raise ConfigError("workers", "must be a non-negative integer")
    return SweepConfig(seed, workers, tuple(scenarios))


def load_config(path: str | Path) -> SweepConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("config", f"malformed YAML: {exc}") from None
    return config_from_dict(doc or {})


# Named reference scenarios at reduced Monte Carlo scale (R = 50).
_FIG_COMMON = {"n_tx": 50, "n_rx": 10, "realizations": 50}
PRESETS: dict[str, dict] = {
    "paper-fig2": {
        "defaults": {**_FIG_COMMON, "streams": 2, "constellation": "16-QAM", "distances_m": [30.0],
                     "tx_power_dbw": [-20.0, -10.0, 0.0, 10.0]},
        "scenarios": [{"scheme": s, "arch": a} for s in ("TDE", "FDE", "OFDM") for a in ("HY", "FD")],
    },
    "paper-fig3": {
        "defaults": {**_FIG_COMMON, "constellation": "4-QAM", "tx_power_dbw": [0.0],
                     "distances_m": [30.0, 60.0, 90.0, 120.0, 150.0]},
        "scenarios": [{"scheme": s, "arch": "HY", "streams": m} for s in ("TDE", "FDE", "OFDM") for m in (1, 2)],
    },
    "paper-fig4": {
        "defaults": {**_FIG_COMMON, "streams": 1, "arch": "HY", "distances_m": [30.0],
                     "tx_power_dbw": [-20.0, -10.0, 0.0, 10.0]},
        "scenarios": [{"scheme": s, "constellation": c, "pa_mode": p}
                      for s in ("TDE", "FDE", "OFDM") for c in ("16-QAM", "16-PSK") for p in ("ideal", "rapp+spd")],
    },
    "paper-fig5": {
        "defaults": {**_FIG_COMMON, "streams": 2, "arch": "HY", "constellation": "16-QAM",
                     "distances_m": [30.0], "tx_power_dbw": [-20.0, -10.0, 0.0, 10.0], "pa_mode": "rapp+spd"},
        "scenarios": [{"scheme": s} for s in ("TDE", "FDE", "OFDM")],
    },
    "paper-fig6": {
        "defaults": {**_FIG_COMMON, "streams": 2, "arch": "HY", "constellation": "16-QAM", "tx_power_dbw": [0.0],
                     "distances_m": [30.0, 60.0, 90.0, 120.0, 150.0], "pa_mode": "rapp+spd"},
        "scenarios": [{"scheme": s} for s in ("TDE", "FDE", "OFDM")],
    },
}


def preset_config(name: str, seed: int = 0) -> SweepConfig:
    if name not in PRESETS:
        raise ConfigError("preset", f"unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}")
    return config_from_dict({"seed": seed, **PRESETS[name]})


# -- seeding ---------------------------------------------------------------------------------


def _generator(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


def channel_rng(seed: int, distance: float, realization: int) -> np.random.Generator:
    """Channel draws depend only on the distance, so scenarios share channels."""
    return _generator(seed, _CHANNEL_STREAM, int(round(distance * 1000)), realization)


def link_rng(seed: int, scenario: int, distance_index: int, realization: int, sub: int) -> np.random.Generator:
    return _generator(seed, _LINK_STREAM, scenario, distance_index, realization, sub)


# -- one Monte Carlo task ------------------------------------------------------------------------


@dataclass(frozen=True)
class TaskOutcome:
    """Metrics per transmit power, or ``failed`` when the channel was unusable."""

    ase: tuple[float, ...] = ()
    gee: tuple[float, ...] = ()
    ber: tuple[float, ...] = ()
    failed: bool = False


def _predistorter(scen: ScenarioConfig, seed: int, index: int):
    if scen.pa_mode != "rapp+spd":
        return REFERENCE_SPD
    if scen.predistorter != "fit":
        return PREDISTORTER_PRESETS[scen.predistorter]
    return fit_predistorter(PAModel(), REFERENCE_SPD.order, _generator(seed, _SPD_STREAM, index),
                            backoff_db=scen.backoff_db)


def run_task(seed: int, index: int, scen: ScenarioConfig, d_index: int, realization: int,
             predistorter=REFERENCE_SPD) -> TaskOutcome:
    distance = scen.distances_m[d_index]
    tx_geom, rx_geom = ArrayGeometry(scen.n_tx), ArrayGeometry(scen.n_rx)
    real = sample_realization(scen.channel_params(), distance, scen.n_rx, scen.n_tx,
                              channel_rng(seed, distance, realization))
    pulse = scen.pulse()
    ts = scen.symbol_interval
    composite = composite_taps(real, pulse, ts, tx_geom, rx_geom)
    m = scen.streams
    tx_rf, rx_rf = scen.chains
    k, c = scen.block_length, scen.prefix()

    bf_rng = link_rng(seed, index, d_index, realization, 0)
    if scen.scheme == "OFDM":
        fd = fd_ofdm_beamformers(composite, m, k)
        bf = fully_digital(fd) if scen.arch == "FD" else hybrid_ofdm(
            fd, tx_rf, rx_rf, scen.bcd_max_iter, scen.bcd_tol, rng=bf_rng)
    else:
        fd = fd_scm_beamformers(composite, m)
        bf = fully_digital(fd) if scen.arch == "FD" else hybrid_scm(
            fd, tx_rf, rx_rf, scen.bcd_max_iter, scen.bcd_tol, rng=bf_rng)

    const = constellation(scen.constellation)
    n_sym = k * scen.blocks
    data_rng = link_rng(seed, index, d_index, realization, 1)
    bits = data_rng.integers(0, 2, size=m * n_sym * const.bits_per_symbol)
    symbols = map_bits(bits, const).reshape(m, n_sym)
    z = data_rng.standard_normal(scen.mi_samples) + 1j * data_rng.standard_normal(scen.mi_samples)
    z /= np.sqrt(2.0)

    noise = NoiseModel.thermal(ts, pulse, scen.noise_figure_db)
    pa_chain = PAChain(scen.pa_mode, PAModel(), predistorter, scen.backoff_db)
    frame = FrameConfig(m, k, c, scen.blocks, scen.constellation)
    model = scen.power_model_obj()
    p_tx_c, p_rx_c = power_consumption(scen.scheme, scen.arch, scen.n_tx, scen.n_rx, tx_rf, rx_rf, model)
    if scen.scheme == "OFDM":
        cp_factor, edge = 1.0 - c / k, 0.9
    elif scen.scheme == "FDE":
        cp_factor, edge = 1.0 - c / k, 1.0
    else:
        cp_factor, edge = 1.0, 1.0

    ases, gees, bers = [], [], []
    for p_dbw in scen.tx_power_dbw:
        p_t = 10.0 ** (p_dbw / 10.0)
        stage = make_stage(composite, bf, p_t, pa_chain, pulse, noise)
        noise_rng = link_rng(seed, index, d_index, realization, 2)
        try:
            if scen.scheme == "TDE":
                soft = scm_tde_link(symbols, stage, bf, noise_rng)
            elif scen.scheme == "FDE":
                soft = scm_fde_link(symbols, stage, bf, frame, noise_rng)
            else:
                soft = ofdm_link(symbols, stage, bf, frame, noise_rng)
        except SingularBinError:
            return TaskOutcome(failed=True)
        fit = fit_aux_channel(soft)
        mi = [mi_mismatched(const, fit.gain[i], fit.variance[i], None, z=z) for i in range(m)]
        value = ase(mi, ts, scen.bandwidth, cp_factor, edge)
        ases.append(value)
        gees.append(gee(value, scen.bandwidth, p_t, model.beta, p_tx_c, p_rx_c))
        gain = np.where(fit.gain == 0, 1.0, fit.gain)
        bers.append(uncoded_ber(bits, hard_demap((soft.estimates / gain[:, None]).ravel(), const))[0])
    return TaskOutcome(tuple(ases), tuple(gees), tuple(bers))


def _run_task_args(args) -> TaskOutcome:
    return run_task(*args)


# -- sweep orchestration ---------------------------------------------------------------------


@dataclass(frozen=True)
class RunManifest:
    config_hash: str
    version: str
    seed: int
    results: tuple[SweepResult, ...]
    failures: dict
    wall_clock_s: float = 0.0

    def to_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "version": self.version,
            "seed": self.seed,
            "results": [dataclasses.asdict(r) for r in self.results],
            "failures": dict(self.failures),
            "wall_clock_s": self.wall_clock_s,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        doc = json.loads(text)
        return cls(doc["config_hash"], doc["version"], doc["seed"],
                   tuple(SweepResult(**r) for r in doc["results"]), doc["failures"], doc["wall_clock_s"])

    def comparable(self) -> dict:
        """Content that must be reproducible; timing is excluded."""
        doc = self.to_dict()
        doc.pop("wall_clock_s")
        return doc


def resolve_workers(requested: int | None, configured: int = 1) -> int:
    """Explicit request, else environment override, else config; 0 means all cores."""
    n = requested
    if n is None:
        env = os.environ.get(WORKERS_ENV)
        n = int(env) if env else configured
    if n < 0:
        raise ConfigError("workers", "must be >= 0")
    return n or (os.cpu_count() or 1)


def _mean_stderr(values: list[float]) -> tuple[float, float]:
    if not values:
        return float("nan"), float("nan")
    arr = np.asarray(values, dtype=float)
    se = float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0
    return float(arr.mean()), se


def run_sweep(config: SweepConfig, workers: int | None = None, progress=None) -> RunManifest:
    """Run every scenario; results are independent of the worker count."""
    start = time.perf_counter()
    n_workers = resolve_workers(workers, config.workers)
    seed = config.seed
    spds = [_predistorter(s, seed, i) for i, s in enumerate(config.scenarios)]
    tasks = [(seed, i, s, d, r, spds[i])
             for i, s in enumerate(config.scenarios)
             for d in range(len(s.distances_m))
             for r in range(s.realizations)]
    if n_workers == 1 or len(tasks) <= 1:
        outcomes = []
        for j, t in enumerate(tasks):
            outcomes.append(_run_task_args(t))
            if progress:
                progress(j + 1, len(tasks))
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            outcomes = []
            for j, out in enumerate(pool.map(_run_task_args, tasks, chunksize=max(1, len(tasks) // (8 * n_workers)))):
                outcomes.append(out)
                if progress:
                    progress(j + 1, len(tasks))

    results, failures, pos = [], {}, 0
    for i, scen in enumerate(config.scenarios):
        tx_rf, rx_rf = scen.chains
        failed_total = 0
        per_distance = []
        for _ in scen.distances_m:
            chunk = outcomes[pos:pos + scen.realizations]
            pos += scen.realizations
            per_distance.append(chunk)
            failed_total += sum(o.failed for o in chunk)
        failures[scen.label] = failed_total
        for p_idx, p_dbw in enumerate(scen.tx_power_dbw):
            for d_idx, dist in enumerate(scen.distances_m):
                good = [o for o in per_distance[d_idx] if not o.failed]
                a = _mean_stderr([o.ase[p_idx] for o in good])
                g = _mean_stderr([o.gee[p_idx] for o in good])
                b = _mean_stderr([o.ber[p_idx] for o in good])
                results.append(SweepResult(
                    scen.scheme, scen.arch, scen.constellation, scen.streams, scen.n_tx, scen.n_rx,
                    tx_rf, rx_rf, p_dbw, dist, scen.pa_mode, len(good), *a, *g, *b,
                    len(per_distance[d_idx]) - len(good)))
    return RunManifest(config.config_hash, __version__, seed, tuple(results), failures,
                       time.perf_counter() - start)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.17e" % value
    return str(value)


def result_row(r: SweepResult) -> list[str]:
    values = (r.scheme, r.arch, r.constellation, r.streams, r.n_tx, r.n_rx, r.tx_chains, r.rx_chains,
              float(r.tx_power_dbw), float(r.distance_m), r.pa_mode, r.realizations, r.ase_mean,
              r.ase_stderr, r.gee_mean, r.gee_stderr, r.ber_mean, r.ber_stderr, r.failures)
    return [_fmt(v) for v in values]


def emit_results(manifest: RunManifest, path: str | Path, fmt: str = "csv") -> Path:
    path = Path(path)
    if fmt not in ("csv", "json"):
        raise ConfigError("format", f"unknown output format {fmt!r}")
    try:
        if fmt == "json":
            path.write_text(manifest.to_json() + "\n")
        else:
            with path.open("w", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(CSV_COLUMNS)
                for r in manifest.results:
                    writer.writerow(result_row(r))
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc.strerror}") from exc
    return path
