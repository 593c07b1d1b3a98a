"""Command-line entry point.

Subcommands: gen, estimate, select, beamform, sweep, report. One JSON
config document mirroring the ExperimentConfig field names drives every
subcommand; --seed and --out (or MASIM_SEED / MASIM_OUT) override the
seed and output directory. Exit codes: 0 success, 2 configuration or
validation error, 3 runtime computation error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import beamforming as bf
from . import estimation as est
from . import io as mio
from . import selection as sel
from .experiments import (
    ConfigError,
    ExperimentConfig,
    config_from_dict,
    db_to_linear,
    derive_seed,
    run_sweep,
)
from .scenario import build_channel_tensor, build_grid, sample_user_channel

ENV_SEED = "MASIM_SEED"
ENV_OUT = "MASIM_OUT"


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="masim",
        description="Multiuser wideband movable-antenna simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="JSON config path")
        p.add_argument("--out", default=None, help="output directory (default: cwd)")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--workers", type=int, default=1, help="trial parallelism")
        p.add_argument("--quiet", action="store_true", help="suppress informational output")

    p = sub.add_parser("gen", help="generate a scenario file")
    common(p)

    p = sub.add_parser("estimate", help="estimate CSI from pilots and print the NMSE")
    common(p)
    p.add_argument("--scenario", required=True, help="scenario JSON path")

    p = sub.add_parser("select", help="choose antenna positions")
    common(p)
    p.add_argument("--scenario", required=True, help="scenario JSON path")
    p.add_argument("--csi", default=None, help="estimated CSI tensor to select on (default: true channel)")

    p = sub.add_parser("beamform", help="design beamformers for an assignment")
    common(p)
    p.add_argument("--scenario", required=True, help="scenario JSON path")
    p.add_argument("--assignment", required=True, help="assignment JSON path")
    p.add_argument("--csi", default=None, help="estimated CSI tensor to design on (default: true channel)")

    p = sub.add_parser("sweep", help="run a Monte Carlo sweep and write CSV tables")
    common(p)
    p.add_argument("--timing", action="store_true",
                   help="write measured wall times instead of deterministic zeros")

    p = sub.add_parser("report", help="summarize an existing per-trial CSV")
    common(p, config_required=False)
    p.add_argument("--input", required=True, help="per-trial CSV path")

    return parser


def _out_dir(args) -> str:
    out = args.out or os.environ.get(ENV_OUT) or "."
    os.makedirs(out, exist_ok=True)
    return out


def _load_config(args, partial: bool = False) -> ExperimentConfig:
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {args.config}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if partial:
        # Scenario-level subcommands need no sweep description.
        doc.setdefault("sweep_axis", "data_snr_db")
        doc.setdefault("sweep_values", [10.0])
        doc.setdefault("trials", 1)
        if _seed_override(args) is not None:
            doc.setdefault("base_seed", 0)
        elif "base_seed" not in doc:
            raise ConfigError("missing required config fields: base_seed (or pass --seed)")
    cfg = config_from_dict(doc)
    return cfg


def _seed_override(args):
    if args.seed is not None:
        return args.seed
    env = os.environ.get(ENV_SEED)
    return int(env) if env else None


def _seed_for(args, cfg: ExperimentConfig) -> int:
    override = _seed_override(args)
    return override if override is not None else cfg.base_seed


def _info(args, message: str):
    if not args.quiet:
        print(message, file=sys.stderr)


def _make_scenario(cfg: ExperimentConfig, seed: int):
    rng = np.random.default_rng(seed)
    ofdm = cfg.ofdm()
    grid = build_grid(cfg.n1, cfg.n2, cfg.spacing())
    users = [sample_user_channel(rng, cfg.l, cfg.bs_hz) for _ in range(cfg.k)]
    return ofdm, grid, users, rng


def _cmd_gen(args) -> int:
    cfg = _load_config(args, partial=True)
    seed = _seed_for(args, cfg)
    ofdm, grid, users, _ = _make_scenario(cfg, seed)
    path = mio.unique_path(os.path.join(_out_dir(args), "scenario.json"))
    mio.save_scenario(path, ofdm, grid, users)
    print(path)
    return 0


def _cmd_estimate(args) -> int:
    cfg = _load_config(args, partial=True)
    seed = _seed_for(args, cfg)
    ofdm, grid, users = mio.load_scenario(args.scenario)
    truth = build_channel_tensor(users, grid, ofdm)
    rng = np.random.default_rng(seed)
    pattern = est.build_ce_pattern(grid, cfg.j, cfg.ce_pattern[0], rng)
    pilot_power = db_to_linear(cfg.pilot_snr_db)
    pilots = est.synthesize_pilots(truth, pattern, est.PilotConfig(pilot_power, 1.0), rng)
    dictionary = est.build_dictionary(grid, cfg.g, ofdm.wavelength)
    num_paths = cfg.estimator_paths if cfg.estimator_paths is not None else len(users[0].paths)
    estimates = [
        est.estimate_user_csi(pilots.values[k], dictionary, pattern, num_paths)
        for k in range(len(users))
    ]
    estimate = est.assemble_initial_csi(estimates, pilot_power)
    error = est.nmse(estimate, truth)
    path = mio.unique_path(os.path.join(_out_dir(args), "csi_estimate.bin"))
    mio.save_csi(path, estimate, seed)
    _info(args, f"estimate written to {path}")
    print(f"{error:.17g}")
    return 0


def _tensor_for(args, ofdm, grid, users):
    if args.csi:
        tensor, _ = mio.load_csi(args.csi)
        return tensor
    return build_channel_tensor(users, grid, ofdm)


def _cmd_select(args) -> int:
    cfg = _load_config(args, partial=True)
    seed = _seed_for(args, cfg)
    ofdm, grid, users = mio.load_scenario(args.scenario)
    tensor = _tensor_for(args, ofdm, grid, users)
    rng = np.random.default_rng(seed)
    transmit_power = db_to_linear(cfg.data_snr_db)
    if cfg.selector == "random":
        assignment = sel.random_select(rng, tensor.values.shape[0], cfg.m)
    else:
        evaluator = bf.zf_rate_evaluator(tensor, transmit_power, 1.0)
        if cfg.selector == "greedy":
            assignment = sel.greedy_select(tensor, cfg.m, evaluator)
        elif cfg.selector == "exhaustive":
            assignment = sel.exhaustive_select(tensor, cfg.m, evaluator, cfg.enumeration_limit)[0]
        else:
            assignment = sel.ceo_select(tensor, cfg.m, evaluator, cfg.ceo_params(), rng)
    path = mio.unique_path(os.path.join(_out_dir(args), "assignment.json"))
    mio.save_assignment(path, assignment)
    print(path)
    return 0


def _cmd_beamform(args) -> int:
    cfg = _load_config(args, partial=True)
    ofdm, grid, users = mio.load_scenario(args.scenario)
    tensor = _tensor_for(args, ofdm, grid, users)
    assignment = mio.load_assignment(args.assignment)
    equiv = sel.apply_assignment(tensor, assignment)
    transmit_power = db_to_linear(cfg.data_snr_db)
    bf_cfg = bf.BeamformerConfig(transmit_power, 1.0)
    if cfg.beamformer == "zf":
        solution, iterations = bf.zf(equiv, transmit_power), 0
    elif cfg.beamformer == "wmmse":
        solution, state = bf.wmmse(equiv, bf_cfg)
        iterations = len(state.rate_trace) - 1
    else:
        from dataclasses import replace

        short = replace(bf_cfg, max_iterations=cfg.parametric_iters, rate_tolerance=1e-300)
        _, state = bf.wmmse(equiv, short)
        params = bf.extract_params(state)
        if cfg.beamformer == "parametric-refined":
            params = bf.refine_params(params, equiv, bf_cfg, cfg.refine_budget)
        solution, iterations = bf.build_parametric_w(params, equiv, transmit_power), cfg.parametric_iters
    rate = bf.sum_rate(equiv, solution, 1.0)
    path = mio.unique_path(os.path.join(_out_dir(args), "beamformer.bin"))
    mio.save_solution(path, solution, transmit_power, 1.0, cfg.beamformer, iterations)
    _info(args, f"sum rate on the supplied channel: {rate:.12g} bits")
    print(path)
    return 0


def _cmd_sweep(args) -> int:
    cfg = _load_config(args)
    override = _seed_override(args)
    if override is not None:
        from dataclasses import replace

        cfg = replace(cfg, base_seed=override)
    out = _out_dir(args)
    trials_path = mio.unique_path(os.path.join(out, "trials.csv"))
    from .experiments import CSV_HEADER

    deterministic = not args.timing
    with open(trials_path, "w", encoding="utf-8") as fh:
        fh.write(CSV_HEADER + "\n")
        fh.flush()

        def emit(record):
            fh.write(record.csv_row(deterministic) + "\n")
            fh.flush()

        table = run_sweep(cfg, workers=max(1, args.workers), row_callback=emit)
    # Rewrite in canonical sorted order; identical content for workers = 1.
    table.write_csv(trials_path, deterministic_timing=deterministic)
    summary_path = mio.unique_path(os.path.join(out, "summary.csv"))
    table.write_summary_csv(summary_path)
    _info(args, f"{len(table.records)} trials")
    print(trials_path)
    print(summary_path)
    return 0


def _cmd_report(args) -> int:
    from .experiments import ResultTable, TrialRecord

    with open(args.input, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        expected = ("axis,value,trial,seed,pattern,selector,beamformer,"
                    "nmse,sum_rate_bits,net_rate_bits,wall_time_s,status")
        if header != expected:
            raise ConfigError(f"unexpected CSV header in {args.input}")
        records = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            cells = line.split(",", 11)
            records.append(TrialRecord(
                axis=cells[0], value=float(cells[1]), trial=int(cells[2]),
                seed=int(cells[3]), pattern=cells[4], selector=cells[5],
                beamformer=cells[6], nmse=float(cells[7]), sum_rate=float(cells[8]),
                net_rate=float(cells[9]), wall_time=float(cells[10]), status=cells[11],
            ))
    table = ResultTable(records=records)
    path = mio.unique_path(os.path.join(_out_dir(args), "summary.csv"))
    table.write_summary_csv(path)
    print(path)
    return 0


_COMMANDS = {
    "gen": _cmd_gen,
    "estimate": _cmd_estimate,
    "select": _cmd_select,
    "beamform": _cmd_beamform,
    "sweep": _cmd_sweep,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # computation failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
