"""Sparse CSI estimation from pilot sweeps over a subset of candidate positions.

The estimator observes noisy pilots from J probed positions, represents
the channel on a uniform virtual-angle dictionary, recovers one joint
support per user across all subcarriers with simultaneous OMP, refits the
per-subcarrier gains by least squares and scores the result with NMSE.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .scenario import ChannelTensor, PositionGrid

PATTERN_KINDS = ("upa-subgrid", "uniform-random", "row-band", "cross")

# Relative singular-value cutoff for every least-squares solve below.
LS_RCOND = 1e-10


@dataclass
class CePattern:
    """Probing pattern: which candidate positions transmit pilots."""

    kind: str
    indices: np.ndarray  # (J,) 0-based position indices, pairwise distinct

    def __post_init__(self):
        if self.kind not in PATTERN_KINDS:
            raise ValueError(f"unknown pattern kind {self.kind!r}")
        self.indices = np.asarray(self.indices, dtype=int)
        if len(np.unique(self.indices)) != len(self.indices):
            raise ValueError("pattern indices must be pairwise distinct")

    @property
    def num_positions(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class PilotConfig:
    """Pilot transmit power and additive noise power (linear units)."""

    pilot_power: float
    noise_power: float

    def __post_init__(self):
        if self.pilot_power <= 0:
            raise ValueError("pilot_power must be positive")
        if self.noise_power < 0:
            raise ValueError("noise_power must be nonnegative")


@dataclass
class PilotObservations:
    """Received pilots per user, shaped (K, J, Nc)."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.ndim != 3:
            raise ValueError("pilot observations must be shaped (K, J, Nc)")
        if not np.isfinite(self.values).all():
            raise ValueError("pilot observations must be finite")


@dataclass
class Dictionary:
    """Steering dictionary over a uniform virtual-angle grid.

    Column ``g`` (0-based) pairs ``theta_grid[g // grid_size]`` with
    ``phi_grid[g % grid_size]``; both grids run over -1 + 2*i/G for
    i = 1..G.
    """

    grid_size: int
    atoms: np.ndarray       # (N, G^2), unit-modulus entries
    theta_grid: np.ndarray  # (G,)
    phi_grid: np.ndarray    # (G,)

    def index_to_pair(self, g: int):
        return divmod(int(g), self.grid_size)

    def index_to_angles(self, g: int):
        g1, g2 = self.index_to_pair(g)
        return float(self.theta_grid[g1]), float(self.phi_grid[g2])


@dataclass
class SparseEstimate:
    """Per-user sparse recovery result and the CSI rebuilt from it."""

    support: list                    # selected dictionary columns, selection order
    angle_estimates: np.ndarray      # (L, 2) virtual (theta, phi) pairs
    reconstructed_steering: np.ndarray  # (N, L)
    coefficients: np.ndarray         # (L, Nc)
    initial_csi: np.ndarray          # (N, Nc) = steering @ coefficients


def build_ce_pattern(grid: PositionGrid, num_positions: int, kind: str,
                     rng: Optional[np.random.Generator] = None) -> CePattern:
    """Construct a probing pattern of ``num_positions`` distinct positions.

    ``upa-subgrid`` places a uniformly strided sub-lattice, ``uniform-random``
    draws without replacement, ``row-band`` takes the first rows in index
    order and ``cross`` takes the center row and center column, truncated
    or padded with the lowest unused indices.
    """
    n = grid.size
    j = int(num_positions)
    if j < 1 or j > n:
        raise ValueError(f"need 1 <= J <= N={n}, got J={j}")
    if kind == "upa-subgrid":
        indices = _upa_subgrid_indices(grid, j)
    elif kind == "uniform-random":
        if rng is None:
            raise ValueError("uniform-random pattern needs an rng")
        indices = np.sort(rng.choice(n, size=j, replace=False))
    elif kind == "row-band":
        indices = np.arange(j)
    elif kind == "cross":
        indices = _cross_indices(grid, j)
    else:
        raise ValueError(f"unknown pattern kind {kind!r}")
    return CePattern(kind=kind, indices=indices)


def _upa_subgrid_indices(grid: PositionGrid, j: int) -> np.ndarray:
    # Most balanced factor pair that fits the grid, spread with the largest
    # integer strides the aperture allows.
    best = None
    for j1 in range(1, min(grid.n1, j) + 1):
        if j % j1:
            continue
        j2 = j // j1
        if j2 > grid.n2:
            continue
        key = (abs(j1 - j2), -j1)
        if best is None or key < best[0]:
            best = (key, j1, j2)
    if best is None:
        raise ValueError(f"J={j} does not factor into a sub-lattice of a {grid.n1}x{grid.n2} grid")
    _, j1, j2 = best
    s1 = (grid.n1 - 1) // (j1 - 1) if j1 > 1 else 1
    s2 = (grid.n2 - 1) // (j2 - 1) if j2 > 1 else 1
    i1 = np.arange(j1) * s1
    i2 = np.arange(j2) * s2
    return np.sort((i2[:, None] * grid.n1 + i1[None, :]).ravel())


def _cross_indices(grid: PositionGrid, j: int) -> np.ndarray:
    row = (grid.n2 - 1) // 2
    col = (grid.n1 - 1) // 2
    cross = {row * grid.n1 + i1 for i1 in range(grid.n1)}
    cross |= {i2 * grid.n1 + col for i2 in range(grid.n2)}
    ordered = sorted(cross)
    if j <= len(ordered):
        return np.array(ordered[:j], dtype=int)
    pad = [i for i in range(grid.size) if i not in cross]
    return np.array(ordered + pad[: j - len(ordered)], dtype=int)


def synthesize_pilots(tensor: ChannelTensor, pattern: CePattern, cfg: PilotConfig,
                      rng: np.random.Generator) -> PilotObservations:
    """Received pilots sqrt(P) * h + z from the probed positions.

    Noise draws are taken even at zero noise power so the generator
    stream does not depend on the configured power.
    """
    n = tensor.values.shape[0]
    if pattern.indices.min() < 0 or pattern.indices.max() >= n:
        raise ValueError("pattern indices out of range for this tensor")
    selected = tensor.values[pattern.indices, :, :]           # (J, K, Nc)
    noiseless = np.sqrt(cfg.pilot_power) * np.transpose(selected, (1, 0, 2))
    sigma = np.sqrt(cfg.noise_power / 2.0)
    noise = sigma * (rng.standard_normal(noiseless.shape)
                     + 1j * rng.standard_normal(noiseless.shape))
    return PilotObservations(values=noiseless + noise)


def build_dictionary(grid: PositionGrid, grid_size: int, wavelength: float) -> Dictionary:
    """Steering dictionary with G^2 atoms over the uniform virtual-angle grid."""
    g = int(grid_size)
    if g < 1:
        raise ValueError("grid_size must be at least 1")
    angles = -1.0 + 2.0 * np.arange(1, g + 1) / g
    x = grid.coordinates[:, 0]
    y = grid.coordinates[:, 1]
    phase = x[:, None, None] * angles[None, :, None] + y[:, None, None] * angles[None, None, :]
    atoms = np.exp(-2j * np.pi / wavelength * phase).reshape(grid.size, g * g)
    return Dictionary(grid_size=g, atoms=atoms, theta_grid=angles, phi_grid=angles.copy())


def somp(observations: np.ndarray, sensing: np.ndarray, num_paths: int):
    """Simultaneous OMP with one support shared by every subcarrier.

    Each of the ``num_paths`` iterations scores every unused sensing
    column by the l2 norm of its correlations with the residual across
    all subcarriers, adds the best column (ties broken toward the lowest
    index), re-solves the least-squares fit on the accumulated support
    jointly for all subcarriers and updates the residual.

    Returns ``(support, coefficients, residual_trace)``: the selected
    column indices in selection order, the (L, Nc) coefficient matrix of
    the final fit, and the residual Frobenius norm before the first
    selection and after each one.
    """
    y = np.asarray(observations, dtype=complex)
    phi = np.asarray(sensing, dtype=complex)
    if y.ndim != 2 or phi.ndim != 2 or phi.shape[0] != y.shape[0]:
        raise ValueError("observations (J, Nc) and sensing (J, G^2) must share the row count")
    if num_paths < 1:
        raise ValueError("num_paths must be at least 1")
    if num_paths > y.shape[0]:
        raise ValueError("cannot select more atoms than pilot observations")

    support: list[int] = []
    masked = np.zeros(phi.shape[1], dtype=bool)
    residual = y.copy()
    trace = [float(np.linalg.norm(residual))]
    coefficients = np.zeros((0, y.shape[1]), dtype=complex)
    for _ in range(num_paths):
        scores = np.linalg.norm(phi.conj().T @ residual, axis=1)
        scores[masked] = -1.0
        best = int(np.argmax(scores))
        support.append(best)
        masked[best] = True
        basis = phi[:, support]
        coefficients = np.linalg.lstsq(basis, y, rcond=LS_RCOND)[0]
        residual = y - basis @ coefficients
        trace.append(float(np.linalg.norm(residual)))
    return support, coefficients, trace


def ls_refit(support: Sequence[int], dictionary: Dictionary, pattern: CePattern,
             observations: np.ndarray) -> SparseEstimate:
    """Map a recovered support to angles and refit per-subcarrier gains.

    The steering matrix is rebuilt over all candidate positions; the
    least-squares fit only sees its probed rows.
    """
    support = [int(g) for g in support]
    y = np.asarray(observations, dtype=complex)
    angles = np.array([dictionary.index_to_angles(g) for g in support], dtype=float)
    steering = dictionary.atoms[:, support]           # (N, L)
    sensing = steering[pattern.indices, :]            # (J, L)
    coefficients = np.linalg.lstsq(sensing, y, rcond=LS_RCOND)[0]
    initial = steering @ coefficients
    return SparseEstimate(
        support=support,
        angle_estimates=angles,
        reconstructed_steering=steering,
        coefficients=coefficients,
        initial_csi=initial,
    )


def estimate_user_csi(observations: np.ndarray, dictionary: Dictionary, pattern: CePattern,
                      num_paths: int) -> SparseEstimate:
    """Run SOMP plus LS refit for one user's (J, Nc) pilot matrix."""
    sensing = dictionary.atoms[pattern.indices, :]
    support, _, _ = somp(observations, sensing, num_paths)
    return ls_refit(support, dictionary, pattern, observations)


def assemble_initial_csi(estimates: Sequence[SparseEstimate], pilot_power: float) -> ChannelTensor:
    """Stack per-user estimates into an (N, K, Nc) tensor, de-embedding sqrt(P).

    The pilot fit absorbs sqrt(P) into the coefficients; dividing it back
    out makes the assembled tensor comparable to the true channel.
    """
    if not estimates:
        raise ValueError("need at least one user estimate")
    if pilot_power <= 0:
        raise ValueError("pilot_power must be positive")
    shapes = {e.initial_csi.shape for e in estimates}
    if len(shapes) != 1:
        raise ValueError(f"inconsistent estimate shapes: {sorted(shapes)}")
    stacked = np.stack([e.initial_csi for e in estimates], axis=1)
    return ChannelTensor(values=stacked / math.sqrt(pilot_power))


def nmse(estimate: ChannelTensor, truth: ChannelTensor) -> float:
    """Normalized mean square error between estimated and true tensors."""
    t = truth.values
    e = estimate.values
    if t.shape != e.shape:
        raise ValueError(f"shape mismatch: estimate {e.shape} vs truth {t.shape}")
    denom = float(np.sum(np.abs(t) ** 2))
    if denom == 0.0:
        raise ValueError("NMSE is undefined for an identically zero truth tensor")
    return float(np.sum(np.abs(t - e) ** 2) / denom)
