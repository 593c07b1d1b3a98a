"""Monte Carlo sweep harness with deterministic per-trial seeding.

Each trial's generator seed derives from (base_seed, axis value index,
trial index) through a splitmix64 mix, so adding trials or changing the
worker count never perturbs any draw. Noise power is fixed at 1; pilot
and data SNRs set the corresponding transmit powers.

Per-trial rows serialize to CSV with the fixed header

    axis,value,trial,seed,pattern,selector,beamformer,nmse,sum_rate_bits,net_rate_bits,wall_time_s,status

and a companion summary CSV carries per-point means and standard errors.
The wall_time_s column is written as 0 by default so reruns of the same
configuration are byte-identical; measured times stay on the in-memory
records.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from typing import Callable, Optional

import numpy as np

from . import beamforming as bf
from . import estimation as est
from . import selection as sel
from .io import format_float
from .scenario import OfdmConfig, build_channel_tensor, build_grid, sample_user_channel

SWEEP_AXES = ("pilot_snr_db", "data_snr_db", "num_users", "num_pilot_positions")
SELECTORS = ("random", "greedy", "exhaustive", "ceo")
BEAMFORMERS = ("zf", "wmmse", "parametric-T-iter", "parametric-refined")
CSI_MODES = ("estimated", "perfect")
SWEEP_KINDS = ("ce", "rate", "net")

CSV_HEADER = ("axis,value,trial,seed,pattern,selector,beamformer,"
              "nmse,sum_rate_bits,net_rate_bits,wall_time_s,status")
SUMMARY_HEADER = ("axis,value,pattern,selector,beamformer,count,"
                  "nmse_mean,nmse_se,sum_rate_mean,sum_rate_se,net_rate_mean,net_rate_se")

_MASK64 = (1 << 64) - 1


class ConfigError(ValueError):
    """Invalid or incomplete experiment configuration."""


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_seed(base_seed: int, value_index: int, trial: int) -> int:
    """64-bit trial seed: chained splitmix64 over the base seed and indices."""
    h = base_seed & _MASK64
    h = _splitmix64(h ^ (value_index & _MASK64))
    h = _splitmix64(h ^ (trial & _MASK64))
    return h


@dataclass(frozen=True)
class NetRateConfig:
    """Coherence-block length in symbol intervals."""

    t_total: int = 200

    def __post_init__(self):
        if self.t_total < 1:
            raise ValueError("t_total must be at least 1")


def net_rate(rate: float, num_pilots: int, cfg: NetRateConfig) -> float:
    """Throughput discounted by pilot overhead: (1 - J/T_total) * rate."""
    if num_pilots < 0 or num_pilots > cfg.t_total:
        raise ValueError(f"need 0 <= J <= T_total={cfg.t_total}, got J={num_pilots}")
    return (1.0 - num_pilots / cfg.t_total) * rate


@dataclass
class TrialRecord:
    """One Monte Carlo trial outcome."""

    axis: str
    value: float
    trial: int
    seed: int
    pattern: str
    selector: str
    beamformer: str
    nmse: float
    sum_rate: float
    net_rate: float
    wall_time: float
    status: str = "ok"
    believed_rate: float = 0.0  # rate the estimated channel predicts; not serialized

    def csv_row(self, deterministic_timing: bool = True) -> str:
        wall = 0.0 if deterministic_timing else self.wall_time
        cells = [
            self.axis,
            format_float(float(self.value)),
            str(self.trial),
            str(self.seed),
            self.pattern,
            self.selector,
            self.beamformer,
            format_float(self.nmse),
            format_float(self.sum_rate),
            format_float(self.net_rate),
            format_float(wall),
            self.status,
        ]
        return ",".join(cells)


@dataclass
class ResultTable:
    """Sorted trial records plus CSV serialization helpers."""

    records: list = field(default_factory=list)

    def write_csv(self, path: str, deterministic_timing: bool = True):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(CSV_HEADER + "\n")
            for rec in self.records:
                fh.write(rec.csv_row(deterministic_timing) + "\n")

    def summary_rows(self) -> list:
        groups: dict = {}
        for rec in self.records:
            if rec.status != "ok":
                continue
            key = (rec.axis, rec.value, rec.pattern, rec.selector, rec.beamformer)
            groups.setdefault(key, []).append(rec)
        rows = []
        for key in sorted(groups, key=lambda k: (k[2], k[3], k[4], k[1])):
            axis, value, pattern, selector, beamformer = key
            recs = groups[key]
            cells = [axis, format_float(float(value)), pattern, selector, beamformer, str(len(recs))]
            for attr in ("nmse", "sum_rate", "net_rate"):
                data = np.array([getattr(r, attr) for r in recs], dtype=float)
                mean = float(data.mean())
                se = float(data.std(ddof=1) / math.sqrt(len(data))) if len(data) > 1 else 0.0
                cells.extend([format_float(mean), format_float(se)])
            rows.append(",".join(cells))
        return rows

    def write_summary_csv(self, path: str):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(SUMMARY_HEADER + "\n")
            for row in self.summary_rows():
                fh.write(row + "\n")


@dataclass
class ExperimentConfig:
    """Full description of one sweep; JSON configs mirror these field names."""

    sweep_axis: str
    sweep_values: tuple
    trials: int
    base_seed: int
    sweep_kind: Optional[str] = None   # default inferred from the axis
    n1: int = 8
    n2: int = 8
    m: int = 4
    k: int = 4
    l: int = 6
    nc: int = 32
    g: int = 32
    j: int = 32
    fc_hz: float = 30e9
    bs_hz: float = 30e6
    spacing_m: Optional[float] = None  # defaults to an eighth of a wavelength
    ce_pattern: tuple = ("upa-subgrid",)
    selector: str = "greedy"
    beamformer: str = "wmmse"
    csi: str = "estimated"
    pilot_snr_db: float = 10.0
    data_snr_db: float = 10.0
    t_total: int = 200
    parametric_iters: int = 2
    refine_budget: int = 200
    ceo_samples: int = 64
    ceo_elite_fraction: float = 0.2
    ceo_smoothing: float = 0.7
    ceo_iterations: int = 20
    enumeration_limit: int = 100_000
    estimator_paths: Optional[int] = None  # sparsity assumed by the estimator

    def __post_init__(self):
        if self.sweep_axis not in SWEEP_AXES:
            raise ConfigError(f"sweep_axis must be one of {SWEEP_AXES}, got {self.sweep_axis!r}")
        values = tuple(self.sweep_values)
        if not values:
            raise ConfigError("sweep_values must be nonempty")
        diffs = [b - a for a, b in zip(values, values[1:])]
        if diffs and not (all(d > 0 for d in diffs) or all(d < 0 for d in diffs)):
            raise ConfigError("sweep_values must be strictly monotone")
        self.sweep_values = values
        if isinstance(self.ce_pattern, str):
            self.ce_pattern = (self.ce_pattern,)
        else:
            self.ce_pattern = tuple(self.ce_pattern)
        for kind in self.ce_pattern:
            if kind not in est.PATTERN_KINDS:
                raise ConfigError(f"unknown ce_pattern {kind!r}")
        if self.sweep_kind is None:
            self.sweep_kind = _default_kind(self.sweep_axis)
        if self.sweep_kind not in SWEEP_KINDS:
            raise ConfigError(f"sweep_kind must be one of {SWEEP_KINDS}")
        if self.selector not in SELECTORS:
            raise ConfigError(f"selector must be one of {SELECTORS}")
        if self.beamformer not in BEAMFORMERS:
            raise ConfigError(f"beamformer must be one of {BEAMFORMERS}")
        if self.csi not in CSI_MODES:
            raise ConfigError(f"csi must be one of {CSI_MODES}")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.k > self.m:
            raise ConfigError("num users k must not exceed num antennas m")
        if self.j > self.n1 * self.n2:
            raise ConfigError("j must not exceed the grid size")
        if self.sweep_axis == "num_users" and any(v > self.m for v in self.sweep_values):
            raise ConfigError("every num_users value must stay <= m")
        if self.sweep_axis == "num_pilot_positions":
            cap = min(self.n1 * self.n2, self.t_total)
            if any(v > cap for v in self.sweep_values):
                raise ConfigError(f"every J value must stay <= min(N, T_total) = {cap}")

    @property
    def num_positions(self) -> int:
        return self.n1 * self.n2

    def ofdm(self) -> OfdmConfig:
        return OfdmConfig(self.fc_hz, self.bs_hz, self.nc)

    def spacing(self) -> float:
        # Lambda/8 keeps strided probing patterns alias-free: probed
        # sub-lattices stay below half-wavelength sampling, so a virtual
        # angle and its period-2 alias never collapse onto identical
        # sensing columns.
        return self.spacing_m if self.spacing_m is not None else self.ofdm().wavelength / 8.0

    def ceo_params(self) -> sel.CeoParams:
        return sel.CeoParams(self.ceo_samples, self.ceo_elite_fraction,
                             self.ceo_smoothing, self.ceo_iterations)


def _default_kind(axis: str) -> str:
    if axis == "pilot_snr_db":
        return "ce"
    if axis == "num_pilot_positions":
        return "net"
    return "rate"


_CONFIG_FIELDS = {f.name for f in fields(ExperimentConfig)}
_REQUIRED_FIELDS = ("sweep_axis", "sweep_values", "trials", "base_seed")


def config_from_dict(doc: dict) -> ExperimentConfig:
    """Validate a JSON-style mapping into an ExperimentConfig."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(doc) - _CONFIG_FIELDS)
    if unknown:
        raise ConfigError(f"unknown config fields: {', '.join(unknown)}")
    missing = [name for name in _REQUIRED_FIELDS if name not in doc]
    if missing:
        raise ConfigError(f"missing required config fields: {', '.join(missing)}")
    try:
        return ExperimentConfig(**doc)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def db_to_linear(snr_db: float) -> float:
    return 10.0 ** (snr_db / 10.0)


def _build_scenario(cfg: ExperimentConfig, rng: np.random.Generator, num_users: int):
    ofdm = cfg.ofdm()
    grid = build_grid(cfg.n1, cfg.n2, cfg.spacing())
    users = [sample_user_channel(rng, cfg.l, cfg.bs_hz) for _ in range(num_users)]
    tensor = build_channel_tensor(users, grid, ofdm)
    return ofdm, grid, tensor


def _estimate(cfg: ExperimentConfig, ofdm, grid, tensor, pattern_kind: str,
              num_pilot_positions: int, pilot_power: float, rng: np.random.Generator):
    pattern = est.build_ce_pattern(grid, num_pilot_positions, pattern_kind, rng)
    pilots = est.synthesize_pilots(tensor, pattern, est.PilotConfig(pilot_power, 1.0), rng)
    dictionary = est.build_dictionary(grid, cfg.g, ofdm.wavelength)
    num_paths = cfg.estimator_paths if cfg.estimator_paths is not None else cfg.l
    estimates = [
        est.estimate_user_csi(pilots.values[k], dictionary, pattern, num_paths)
        for k in range(pilots.values.shape[0])
    ]
    estimate = est.assemble_initial_csi(estimates, pilot_power)
    return estimate, est.nmse(estimate, tensor)


def _select(cfg: ExperimentConfig, tensor, transmit_power: float, rng: np.random.Generator):
    if cfg.selector == "random":
        return sel.random_select(rng, tensor.values.shape[0], cfg.m)
    evaluator = bf.zf_rate_evaluator(tensor, transmit_power, 1.0)
    if cfg.selector == "greedy":
        return sel.greedy_select(tensor, cfg.m, evaluator)
    if cfg.selector == "exhaustive":
        return sel.exhaustive_select(tensor, cfg.m, evaluator, cfg.enumeration_limit)[0]
    return sel.ceo_select(tensor, cfg.m, evaluator, cfg.ceo_params(), rng)


def _beamform(cfg: ExperimentConfig, equiv, transmit_power: float) -> bf.BeamformingSolution:
    bf_cfg = bf.BeamformerConfig(transmit_power, 1.0)
    if cfg.beamformer == "zf":
        return bf.zf(equiv, transmit_power)
    if cfg.beamformer == "wmmse":
        return bf.wmmse(equiv, bf_cfg)[0]
    short = replace(bf_cfg, max_iterations=cfg.parametric_iters, rate_tolerance=1e-300)
    _, state = bf.wmmse(equiv, short)
    params = bf.extract_params(state)
    if cfg.beamformer == "parametric-refined":
        params = bf.refine_params(params, equiv, bf_cfg, cfg.refine_budget)
    return bf.build_parametric_w(params, equiv, transmit_power)


def _ce_trial(cfg: ExperimentConfig, pattern_kind: str, value_index: int, trial: int) -> TrialRecord:
    value = cfg.sweep_values[value_index]
    seed = derive_seed(cfg.base_seed, value_index, trial)
    start = time.perf_counter()
    try:
        rng = np.random.default_rng(seed)
        ofdm, grid, tensor = _build_scenario(cfg, rng, cfg.k)
        _, error = _estimate(cfg, ofdm, grid, tensor, pattern_kind, cfg.j,
                             db_to_linear(value), rng)
        status, nmse_value = "ok", error
    except Exception as exc:  # recorded, never dropped
        status, nmse_value = f"error:{type(exc).__name__}:{exc}", 0.0
    return TrialRecord(
        axis=cfg.sweep_axis, value=value, trial=trial, seed=seed,
        pattern=pattern_kind, selector="-", beamformer="-",
        nmse=nmse_value, sum_rate=0.0, net_rate=0.0,
        wall_time=time.perf_counter() - start, status=status,
    )


def _rate_trial(cfg: ExperimentConfig, pattern_kind: str, value_index: int, trial: int) -> TrialRecord:
    value = cfg.sweep_values[value_index]
    seed = derive_seed(cfg.base_seed, value_index, trial)
    start = time.perf_counter()
    num_users = cfg.k
    pilot_snr_db = cfg.pilot_snr_db
    data_snr_db = cfg.data_snr_db
    num_pilots = cfg.j
    if cfg.sweep_axis == "data_snr_db":
        data_snr_db = value
    elif cfg.sweep_axis == "pilot_snr_db":
        pilot_snr_db = value
    elif cfg.sweep_axis == "num_users":
        num_users = int(value)
    elif cfg.sweep_axis == "num_pilot_positions":
        num_pilots = int(value)
    transmit_power = db_to_linear(data_snr_db)
    nmse_value = 0.0
    rate = believed = net = 0.0
    try:
        rng = np.random.default_rng(seed)
        ofdm, grid, truth = _build_scenario(cfg, rng, num_users)
        if cfg.csi == "estimated":
            believed_tensor, nmse_value = _estimate(
                cfg, ofdm, grid, truth, pattern_kind, num_pilots,
                db_to_linear(pilot_snr_db), rng)
            overhead = num_pilots
        else:
            believed_tensor, overhead = truth, 0
        assignment = _select(cfg, believed_tensor, transmit_power, rng)
        equiv_believed = sel.apply_assignment(believed_tensor, assignment)
        solution = _beamform(cfg, equiv_believed, transmit_power)
        equiv_true = sel.apply_assignment(truth, assignment)
        rate = bf.sum_rate(equiv_true, solution, 1.0)
        believed = bf.sum_rate(equiv_believed, solution, 1.0)
        net = net_rate(rate, overhead, NetRateConfig(cfg.t_total))
        status = "ok"
    except Exception as exc:
        status = f"error:{type(exc).__name__}:{exc}"
    return TrialRecord(
        axis=cfg.sweep_axis, value=value, trial=trial, seed=seed,
        pattern=pattern_kind if cfg.csi == "estimated" else "-",
        selector=cfg.selector, beamformer=cfg.beamformer,
        nmse=nmse_value, sum_rate=rate, net_rate=net,
        wall_time=time.perf_counter() - start, status=status,
        believed_rate=believed,
    )


def _run_task(task) -> TrialRecord:
    cfg, kind, pattern_kind, value_index, trial = task
    if kind == "ce":
        return _ce_trial(cfg, pattern_kind, value_index, trial)
    return _rate_trial(cfg, pattern_kind, value_index, trial)


def _execute(cfg: ExperimentConfig, kind: str, workers: int,
             row_callback: Optional[Callable[[TrialRecord], None]]) -> ResultTable:
    patterns = cfg.ce_pattern if (kind == "ce" or cfg.csi == "estimated") else ("-",)
    tasks = [
        (cfg, kind, pattern, vi, t)
        for pattern in patterns
        for vi in range(len(cfg.sweep_values))
        for t in range(cfg.trials)
    ]
    records = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for rec in pool.map(_run_task, tasks, chunksize=1):
                records.append(rec)
                if row_callback is not None:
                    row_callback(rec)
    else:
        for task in tasks:
            rec = _run_task(task)
            records.append(rec)
            if row_callback is not None:
                row_callback(rec)
    records.sort(key=lambda r: (r.pattern, r.selector, r.beamformer, r.value, r.trial))
    return ResultTable(records=records)


def run_ce_sweep(cfg: ExperimentConfig, workers: int = 1,
                 row_callback: Optional[Callable[[TrialRecord], None]] = None) -> ResultTable:
    """NMSE versus pilot SNR per probing pattern."""
    if cfg.sweep_axis != "pilot_snr_db":
        raise ConfigError("run_ce_sweep needs sweep_axis = pilot_snr_db")
    return _execute(cfg, "ce", workers, row_callback)


def run_rate_sweep(cfg: ExperimentConfig, workers: int = 1,
                   row_callback: Optional[Callable[[TrialRecord], None]] = None) -> ResultTable:
    """Sum rate versus data SNR, user count or pilot SNR.

    Each trial scores the chosen assignment and beamformer on the true
    channel; the rate the estimate itself predicts stays on the record.
    """
    if cfg.sweep_axis not in ("data_snr_db", "num_users", "pilot_snr_db"):
        raise ConfigError("run_rate_sweep needs a data_snr_db, num_users or pilot_snr_db axis")
    return _execute(cfg, "rate", workers, row_callback)


def run_net_rate_sweep(cfg: ExperimentConfig, net: NetRateConfig, workers: int = 1,
                       row_callback: Optional[Callable[[TrialRecord], None]] = None) -> ResultTable:
    """Net sum rate versus the number of probed pilot positions."""
    if cfg.sweep_axis != "num_pilot_positions":
        raise ConfigError("run_net_rate_sweep needs sweep_axis = num_pilot_positions")
    if cfg.csi != "estimated":
        raise ConfigError("the net-rate sweep needs csi = estimated")
    cfg = replace(cfg, t_total=net.t_total)
    return _execute(cfg, "rate", workers, row_callback)


def run_sweep(cfg: ExperimentConfig, workers: int = 1,
              row_callback: Optional[Callable[[TrialRecord], None]] = None) -> ResultTable:
    """Dispatch on the configured sweep kind."""
    if cfg.sweep_kind == "ce":
        return run_ce_sweep(cfg, workers, row_callback)
    if cfg.sweep_kind == "net":
        return run_net_rate_sweep(cfg, NetRateConfig(cfg.t_total), workers, row_callback)
    return run_rate_sweep(cfg, workers, row_callback)
