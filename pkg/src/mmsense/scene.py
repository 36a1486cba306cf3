"""Scene geometry and per-BS propagation paths.

Geometry is an explicit list of base stations, point scatterers and a
constant-velocity target. Each BS sees the target through its LOS echo and
through one single-bounce path per scatterer (BS -> target -> scatterer -> BS,
merged with its reciprocal).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.constants import speed_of_light as C0

from mmsense.errors import DegenerateGeometryError

Vec3 = np.ndarray

_MIN_SEPARATION = 1e-9


def vec3(value) -> Vec3:
    """Coerce ``value`` into a finite float64 array of shape (3,)."""
    arr = np.asarray(value, dtype=float).reshape(-1)
    if arr.shape != (3,):
        raise ValueError(f"expected 3 components, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"non-finite vector {arr}")
    return arr


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class BsConfig:
    id: int
    position: Vec3
    tx_power: float = 23.0  # dBm
    antenna_gain: float = 0.0  # dBi

    def __post_init__(self):
        object.__setattr__(self, "position", vec3(self.position))
        if not math.isfinite(self.tx_power):
            raise ValueError("tx_power must be finite")


@dataclass(frozen=True)
class TargetState:
    position: Vec3
    velocity: Vec3 = field(default_factory=lambda: np.zeros(3))
    rcs: float = 7.0  # dBsm

    def __post_init__(self):
        object.__setattr__(self, "position", vec3(self.position))
        object.__setattr__(self, "velocity", vec3(self.velocity))


@dataclass(frozen=True)
class Scatterer:
    position: Vec3
    reflection_loss: float = 0.0  # dB, applied to the bounced segment

    def __post_init__(self):
        object.__setattr__(self, "position", vec3(self.position))
        if self.reflection_loss < 0:
            raise ValueError("reflection_loss must be >= 0 dB")


@dataclass(frozen=True)
class PathComponent:
    delay: float  # round-trip seconds
    doppler: float  # Hz, positive for a shrinking path
    gain: complex  # linear amplitude relative to unit transmit amplitude

    def __post_init__(self):
        if self.delay < 0:
            raise ValueError("path delay must be >= 0")


@dataclass(frozen=True)
class Trajectory:
    start: Vec3
    direction: Vec3
    speed: float  # m/s
    step_interval: float  # s
    num_steps: int

    def __post_init__(self):
        object.__setattr__(self, "start", vec3(self.start))
        direction = vec3(self.direction)
        if abs(np.linalg.norm(direction) - 1.0) > 1e-9:
            raise ValueError(f"trajectory direction must be a unit vector, got norm {np.linalg.norm(direction)}")
        object.__setattr__(self, "direction", direction)
        if self.step_interval <= 0:
            raise ValueError("step_interval must be > 0")
        if self.num_steps < 1:
            raise ValueError("num_steps must be >= 1")

    @property
    def velocity(self) -> Vec3:
        return self.direction * self.speed


def step_trajectory(traj: Trajectory, step: int) -> Vec3:
    """Target position after ``step`` intervals of constant-velocity motion."""
    if not 0 <= step < traj.num_steps:
        raise IndexError(f"step {step} outside [0, {traj.num_steps})")
    return traj.start + traj.direction * (traj.speed * traj.step_interval * step)


def target_at(traj: Trajectory, step: int, rcs: float = 7.0) -> TargetState:
    return TargetState(position=step_trajectory(traj, step), velocity=traj.velocity, rcs=rcs)


def _distance(a: Vec3, b: Vec3, what: str) -> float:
    d = float(np.linalg.norm(a - b))
    if d <= _MIN_SEPARATION:
        raise DegenerateGeometryError(f"{what} coincide at {a}")
    return d


def _radar_amplitude(bs: BsConfig, target: TargetState, carrier_freq: float, d_out: float, d_back: float) -> float:
    # Radar equation with the spreading split into outbound and return legs;
    # d_out == d_back gives the monostatic d^-4 law.
    wavelength = C0 / carrier_freq
    gain_lin = db_to_linear(bs.antenna_gain)
    rcs_lin = db_to_linear(target.rcs)
    power_ratio = gain_lin**2 * wavelength**2 * rcs_lin / ((4 * math.pi) ** 3 * d_out**2 * d_back**2)
    return math.sqrt(power_ratio)


def _carrier_phase(delay: float, carrier_freq: float) -> complex:
    return complex(np.exp(-2j * math.pi * ((carrier_freq * delay) % 1.0)))


def los_path(bs: BsConfig, target: TargetState, carrier_freq: float) -> PathComponent:
    """Direct monostatic echo of the target at ``bs``."""
    d = _distance(target.position, bs.position, "BS and target")
    los = (target.position - bs.position) / d
    radial_toward_bs = -float(np.dot(target.velocity, los))
    delay = 2.0 * d / C0
    doppler = 2.0 * radial_toward_bs * carrier_freq / C0
    amplitude = _radar_amplitude(bs, target, carrier_freq, d, d)
    return PathComponent(delay=delay, doppler=doppler, gain=amplitude * _carrier_phase(delay, carrier_freq))


def nlos_paths(
    bs: BsConfig, target: TargetState, scatterers: list[Scatterer], carrier_freq: float
) -> list[PathComponent]:
    """Single-bounce echoes, one per scatterer.

    The route BS -> target -> scatterer -> BS and its reverse have identical
    length, Doppler and gain, so they are merged into one component with twice
    the amplitude.
    """
    paths = []
    d_bt = _distance(target.position, bs.position, "BS and target")
    u_bt = (target.position - bs.position) / d_bt
    for sc in scatterers:
        d_ts = _distance(target.position, sc.position, "target and scatterer")
        d_sb = _distance(sc.position, bs.position, "scatterer and BS")
        u_st = (target.position - sc.position) / d_ts
        length = d_bt + d_ts + d_sb
        # only the two target-attached legs change length
        length_rate = float(np.dot(target.velocity, u_bt) + np.dot(target.velocity, u_st))
        delay = length / C0
        doppler = -length_rate * carrier_freq / C0
        amplitude = _radar_amplitude(bs, target, carrier_freq, d_bt, d_ts + d_sb)
        amplitude *= 2.0 * 10.0 ** (-sc.reflection_loss / 20.0)
        paths.append(PathComponent(delay=delay, doppler=doppler, gain=amplitude * _carrier_phase(delay, carrier_freq)))
    return paths


def propagation_paths(
    bs: BsConfig, target: TargetState, scatterers: list[Scatterer], carrier_freq: float
) -> list[PathComponent]:
    """LOS path followed by the NLOS paths."""
    return [los_path(bs, target, carrier_freq), *nlos_paths(bs, target, scatterers, carrier_freq)]
