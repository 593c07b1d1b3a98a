"""File formats: scenario JSON, binary complex tensors, assignments, CSV tables.

Binary tensors are little-endian float64 with interleaved (re, im) per
element, C-order over the logical axes, plus a JSON sidecar describing the
shape. Position indices are 1-based on disk and 0-based in memory. JSON
files are written with sorted keys and fixed separators so identical
inputs produce byte-identical files.
"""

from __future__ import annotations

import json
import os
from typing import Sequence

import numpy as np

from .scenario import (
    ChannelTensor,
    OfdmConfig,
    PathComponent,
    PositionGrid,
    UserChannel,
    build_grid,
)
from .selection import PositionAssignment
from .beamforming import BeamformingSolution


def dump_json(path: str, payload: dict):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, separators=(",", ": "), indent=1)
        fh.write("\n")


def load_json(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def unique_path(path: str) -> str:
    """Return ``path`` if free, else the first ``stem-k.ext`` that is."""
    if not os.path.exists(path):
        return path
    stem, ext = os.path.splitext(path)
    k = 1
    while os.path.exists(f"{stem}-{k}{ext}"):
        k += 1
    return f"{stem}-{k}{ext}"


def scenario_to_dict(cfg: OfdmConfig, grid: PositionGrid, users: Sequence[UserChannel]) -> dict:
    return {
        "fc_hz": cfg.carrier_frequency,
        "bs_hz": cfg.bandwidth,
        "nc": cfg.num_subcarriers,
        "n1": grid.n1,
        "n2": grid.n2,
        "spacing_m": grid.spacing,
        "users": [
            {
                "paths": [
                    {
                        "theta": p.theta,
                        "phi": p.phi,
                        "delay_s": p.delay,
                        "gain_re": p.gain.real,
                        "gain_im": p.gain.imag,
                    }
                    for p in user.paths
                ]
            }
            for user in users
        ],
    }


def scenario_from_dict(doc: dict):
    cfg = OfdmConfig(
        carrier_frequency=float(doc["fc_hz"]),
        bandwidth=float(doc["bs_hz"]),
        num_subcarriers=int(doc["nc"]),
    )
    grid = build_grid(int(doc["n1"]), int(doc["n2"]), float(doc["spacing_m"]))
    users = [
        UserChannel(paths=[
            PathComponent(
                theta=float(p["theta"]),
                phi=float(p["phi"]),
                delay=float(p["delay_s"]),
                gain=complex(float(p["gain_re"]), float(p["gain_im"])),
            )
            for p in user["paths"]
        ])
        for user in doc["users"]
    ]
    return cfg, grid, users


def save_scenario(path: str, cfg: OfdmConfig, grid: PositionGrid, users: Sequence[UserChannel]):
    dump_json(path, scenario_to_dict(cfg, grid, users))


def load_scenario(path: str):
    return scenario_from_dict(load_json(path))


def _write_complex(path: str, values: np.ndarray):
    interleaved = np.empty(values.shape + (2,), dtype="<f8")
    interleaved[..., 0] = values.real
    interleaved[..., 1] = values.imag
    with open(path, "wb") as fh:
        fh.write(interleaved.tobytes(order="C"))


def _read_complex(path: str, shape) -> np.ndarray:
    raw = np.fromfile(path, dtype="<f8").reshape(tuple(shape) + (2,))
    return raw[..., 0] + 1j * raw[..., 1]


def _sidecar_path(path: str) -> str:
    return os.path.splitext(path)[0] + ".json"


def save_csi(path: str, tensor: ChannelTensor, seed: int):
    """Binary CSI tensor plus {n, k, nc, seed} sidecar."""
    n, k, nc = tensor.values.shape
    _write_complex(path, tensor.values)
    dump_json(_sidecar_path(path), {"n": n, "k": k, "nc": nc, "seed": int(seed)})


def load_csi(path: str):
    meta = load_json(_sidecar_path(path))
    values = _read_complex(path, (meta["n"], meta["k"], meta["nc"]))
    return ChannelTensor(values=values), meta


def save_solution(path: str, solution: BeamformingSolution, transmit_power: float,
                  noise_power: float, scheme: str, iterations: int):
    nc, m, k = solution.matrices.shape
    _write_complex(path, solution.matrices)
    dump_json(_sidecar_path(path), {
        "m": m,
        "k": k,
        "nc": nc,
        "pt": float(transmit_power),
        "sigma2": float(noise_power),
        "scheme": scheme,
        "iterations": int(iterations),
    })


def load_solution(path: str):
    meta = load_json(_sidecar_path(path))
    values = _read_complex(path, (meta["nc"], meta["m"], meta["k"]))
    return BeamformingSolution(matrices=values, metadata=dict(meta)), meta


def save_assignment(path: str, assignment: PositionAssignment):
    """JSON list of 1-based position indices."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([int(i) + 1 for i in assignment.indices], fh, separators=(",", " "))
        fh.write("\n")


def load_assignment(path: str) -> PositionAssignment:
    with open(path, "r", encoding="utf-8") as fh:
        one_based = json.load(fh)
    return PositionAssignment(indices=np.array(one_based, dtype=int) - 1)


def save_pattern(path: str, indices: np.ndarray):
    """JSON list of 1-based probed position indices."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([int(i) + 1 for i in np.asarray(indices)], fh, separators=(",", " "))
        fh.write("\n")


def load_pattern(path: str) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        return np.array(json.load(fh), dtype=int) - 1


def format_float(x: float) -> str:
    """Floats in CSV output carry 12 significant digits."""
    return f"{x:.12g}"
