"""Scenario model: OFDM numerology, candidate-position grid and multipath channels.

A scenario is an OFDM configuration, a rectangular lattice of candidate
antenna positions and one multipath profile per user. The ground-truth
channel tensor holds the complex coefficient between every candidate
position, user and subcarrier.

All randomness flows through an explicit ``numpy.random.Generator`` so a
fixed seed reproduces a scenario bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class OfdmConfig:
    """OFDM numerology: carrier frequency (Hz), bandwidth (Hz), subcarrier count."""

    carrier_frequency: float
    bandwidth: float
    num_subcarriers: int

    def __post_init__(self):
        if self.carrier_frequency <= 0:
            raise ValueError("carrier_frequency must be positive")
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        if self.num_subcarriers < 1:
            raise ValueError("num_subcarriers must be at least 1")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency


@dataclass
class PositionGrid:
    """Rectangular lattice of candidate antenna positions in the x-y plane.

    Positions are indexed row-major: index ``n = i2 * n1 + i1`` (0-based)
    sits at ``(i1 * spacing, i2 * spacing)`` meters.
    """

    n1: int
    n2: int
    spacing: float
    coordinates: np.ndarray  # (N, 2) meters

    @property
    def size(self) -> int:
        return self.n1 * self.n2


def build_grid(n1: int, n2: int, spacing: float) -> PositionGrid:
    """Build the row-major candidate lattice."""
    if n1 < 1 or n2 < 1:
        raise ValueError("grid counts must be at least 1")
    if spacing <= 0:
        raise ValueError("grid spacing must be positive")
    xx, yy = np.meshgrid(np.arange(n1) * spacing, np.arange(n2) * spacing)
    coords = np.column_stack([xx.ravel(), yy.ravel()])
    return PositionGrid(n1=n1, n2=n2, spacing=spacing, coordinates=coords)


@dataclass(frozen=True)
class PathComponent:
    """One multipath component.

    ``theta``/``phi`` are the virtual directions sin(elev)*cos(azim) and
    cos(elev). The departure angles are generative metadata; they are None
    on components rebuilt from serialized scenarios, where only the
    virtual directions survive.
    """

    theta: float
    phi: float
    delay: float
    gain: complex
    elevation_aod: Optional[float] = None
    azimuth_aod: Optional[float] = None

    def __post_init__(self):
        if self.delay < 0:
            raise ValueError("path delay must be nonnegative")
        if self.theta ** 2 + self.phi ** 2 > 1.0 + 1e-12:
            raise ValueError("virtual directions must satisfy theta^2 + phi^2 <= 1")

    @classmethod
    def from_aods(cls, elevation: float, azimuth: float, delay: float, gain: complex) -> "PathComponent":
        return cls(
            theta=float(np.sin(elevation) * np.cos(azimuth)),
            phi=float(np.cos(elevation)),
            delay=float(delay),
            gain=complex(gain),
            elevation_aod=float(elevation),
            azimuth_aod=float(azimuth),
        )


@dataclass
class UserChannel:
    """Multipath profile of a single user."""

    paths: list

    def __post_init__(self):
        if not self.paths:
            raise ValueError("a user channel needs at least one path")

    @property
    def num_paths(self) -> int:
        return len(self.paths)

    def path_arrays(self):
        """Per-path (thetas, phis, delays, gains) as flat arrays."""
        thetas = np.array([p.theta for p in self.paths], dtype=float)
        phis = np.array([p.phi for p in self.paths], dtype=float)
        delays = np.array([p.delay for p in self.paths], dtype=float)
        gains = np.array([p.gain for p in self.paths], dtype=complex)
        return thetas, phis, delays, gains


@dataclass
class ChannelTensor:
    """Complex channel coefficients indexed [position, user, subcarrier]."""

    values: np.ndarray  # (N, K, Nc) complex

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.ndim != 3:
            raise ValueError("channel tensor must be 3-dimensional (N, K, Nc)")
        if not np.isfinite(self.values).all():
            raise ValueError("channel tensor entries must be finite")

    @property
    def shape(self):
        return self.values.shape


def sample_user_channel(rng: np.random.Generator, num_paths: int, bandwidth: float) -> UserChannel:
    """Draw one user's multipath profile.

    Elevation and azimuth departure angles are iid uniform on
    (-pi/2, pi/2), complex gains iid circularly-symmetric Gaussian with
    variance 1/num_paths, and delays iid uniform on [0, 8/bandwidth].
    """
    if num_paths < 1:
        raise ValueError("num_paths must be at least 1")
    half_pi = np.pi / 2
    elevations = rng.uniform(-half_pi, half_pi, size=num_paths)
    azimuths = rng.uniform(-half_pi, half_pi, size=num_paths)
    scale = np.sqrt(1.0 / (2.0 * num_paths))
    gains = scale * (rng.standard_normal(num_paths) + 1j * rng.standard_normal(num_paths))
    delays = rng.uniform(0.0, 8.0 / bandwidth, size=num_paths)
    paths = [
        PathComponent.from_aods(e, a, d, g)
        for e, a, d, g in zip(elevations, azimuths, delays, gains)
    ]
    return UserChannel(paths=paths)


def steering_vector(grid: PositionGrid, theta: float, phi: float, wavelength: float) -> np.ndarray:
    """Unit-modulus response of every candidate position to one virtual direction."""
    x = grid.coordinates[:, 0]
    y = grid.coordinates[:, 1]
    return np.exp(-2j * np.pi / wavelength * (x * theta + y * phi))


def channel_coeff(user: UserChannel, position: Sequence[float], subcarrier: int, cfg: OfdmConfig) -> complex:
    """Channel between one candidate position and one user at subcarrier ``q``.

    ``subcarrier`` is the 1-based index q entering the delay phase
    exp(-j 2 pi q B tau / Nc); position is an (x, y) point in meters.
    """
    if not 1 <= subcarrier <= cfg.num_subcarriers:
        raise ValueError(f"subcarrier must lie in 1..{cfg.num_subcarriers}, got {subcarrier}")
    thetas, phis, delays, gains = user.path_arrays()
    x, y = float(position[0]), float(position[1])
    delay_phase = np.exp(-2j * np.pi * subcarrier * cfg.bandwidth * delays / cfg.num_subcarriers)
    position_phase = np.exp(-2j * np.pi / cfg.wavelength * (x * thetas + y * phis))
    return complex(np.sum(gains * delay_phase * position_phase))


def build_channel_tensor(users: Sequence[UserChannel], grid: PositionGrid, cfg: OfdmConfig) -> ChannelTensor:
    """Evaluate the ground-truth channel tensor over all positions, users, subcarriers."""
    if not users:
        raise ValueError("users must be nonempty")
    n = grid.size
    nc = cfg.num_subcarriers
    values = np.empty((n, len(users), nc), dtype=complex)
    q = np.arange(1, nc + 1)
    x = grid.coordinates[:, 0]
    y = grid.coordinates[:, 1]
    for ki, user in enumerate(users):
        thetas, phis, delays, gains = user.path_arrays()
        position_phase = np.exp(
            -2j * np.pi / cfg.wavelength * (np.outer(x, thetas) + np.outer(y, phis))
        )  # (N, L)
        delay_phase = np.exp(
            -2j * np.pi * cfg.bandwidth * np.outer(delays, q) / cfg.num_subcarriers
        )  # (L, Nc)
        values[:, ki, :] = position_phase @ (gains[:, None] * delay_phase)
    return ChannelTensor(values=values)
