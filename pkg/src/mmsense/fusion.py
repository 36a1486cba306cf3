"""Central fusion of per-BS range measurements into a target position.

Three objectives over the candidate position x, with r_k = ||x - x_k||:

* ML:   LL(x)   = sum_k w_k [ln(1/sqrt(2 pi)) - (d_k - r_k)^2 / (2 sigma_k^2)]
* MAP:  LMAP(x) = LL(x) + sum_k w_k ln(1 / (r_k + eps))
* NLLS: Q(x)    = sum_k w_k (d_k - r_k)^2

ML and MAP are maximized, NLLS is minimized. All three are non-convex, so
the solver scores a deterministic lattice over the search box and refines the
best few lattice points with projected steepest descent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import NamedTuple

import numpy as np

from mmsense.errors import ConfigError, DegenerateGeometryError, NoMeasurementError
from mmsense.periodogram import BsMeasurement
from mmsense.scene import Vec3, vec3

LOG_NORM = -0.5 * math.log(2.0 * math.pi)
_SINGULAR_R = 1e-12


class Algorithm(str, Enum):
    ML = "ml"
    MAP = "map"
    NLLS = "nlls"

    @property
    def maximizes(self) -> bool:
        return self is not Algorithm.NLLS


@dataclass(frozen=True)
class FusionConfig:
    search_min: Vec3
    search_max: Vec3
    algorithm: Algorithm = Algorithm.NLLS
    epsilon: float = 1e-3
    fixed_z: float | None = None
    grid_starts_per_axis: int = 20
    num_refine_starts: int = 5
    max_iterations: int = 500
    convergence_tol: float = 1e-6

    def __post_init__(self):
        lo, hi = vec3(self.search_min), vec3(self.search_max)
        if np.any(lo > hi):
            raise ConfigError(f"empty search region [{lo}, {hi}]")
        object.__setattr__(self, "search_min", lo)
        object.__setattr__(self, "search_max", hi)
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be > 0")
        if self.grid_starts_per_axis < 2:
            raise ConfigError("grid_starts_per_axis must be >= 2")
        if self.num_refine_starts < 1:
            raise ConfigError("num_refine_starts must be >= 1")

    def with_algorithm(self, algorithm) -> FusionConfig:
        return replace(self, algorithm=Algorithm(algorithm))

    def bounds(self) -> tuple[Vec3, Vec3]:
        """Search box with fixed_z collapsed onto the z axis."""
        lo, hi = self.search_min.copy(), self.search_max.copy()
        if self.fixed_z is not None:
            lo[2] = hi[2] = self.fixed_z
        return lo, hi


@dataclass(frozen=True)
class PositionEstimate:
    position: Vec3
    objective_value: float
    algorithm: Algorithm
    converged: bool
    num_measurements_used: int


class _Stack(NamedTuple):
    positions: np.ndarray  # (K, 3)
    ranges: np.ndarray
    variances: np.ndarray
    weights: np.ndarray


def _stack(measurements: list[BsMeasurement]) -> _Stack:
    return _Stack(
        np.array([m.bs_position for m in measurements], dtype=float).reshape(-1, 3),
        np.array([m.range for m in measurements], dtype=float),
        np.array([m.variance for m in measurements], dtype=float),
        np.array([m.weight for m in measurements], dtype=float),
    )


def normalize_weights(measurements: list[BsMeasurement]) -> list[BsMeasurement]:
    """Drop non-detections and rescale the remaining weights to sum to one."""
    detected = [m for m in measurements if m.detected]
    total = sum(m.weight for m in detected)
    if not detected or not total > 0:
        raise NoMeasurementError("no detected measurement with positive weight")
    return [replace(m, weight=m.weight / total) for m in detected]


def _geometry(x: np.ndarray, positions: np.ndarray, need_grad: bool):
    diff = np.asarray(x, dtype=float)[..., None, :] - positions  # (..., K, 3)
    r = np.sqrt(np.sum(diff * diff, axis=-1))
    if need_grad and np.any(r < _SINGULAR_R):
        raise DegenerateGeometryError("candidate position coincides with a BS; gradient is singular")
    return diff, r


def _evaluate(algorithm: Algorithm, x, st: _Stack, epsilon: float, need_grad: bool):
    diff, r = _geometry(x, st.positions, need_grad)
    residual = st.ranges - r  # d_k - r_k
    if algorithm is Algorithm.NLLS:
        value = np.sum(st.weights * residual**2, axis=-1)
        coef = -2.0 * st.weights * residual  # d/dr_k
    else:
        value = np.sum(st.weights * (LOG_NORM - residual**2 / (2.0 * st.variances)), axis=-1)
        coef = st.weights * residual / st.variances
        if algorithm is Algorithm.MAP:
            value = value - np.sum(st.weights * np.log(r + epsilon), axis=-1)
            coef = coef - st.weights / (r + epsilon)
    if not need_grad:
        return value, None
    grad = np.sum((coef / r)[..., None] * diff, axis=-2)
    return value, grad


def ll_objective(x, measurements: list[BsMeasurement]):
    """Weighted Gaussian log-likelihood and its gradient with respect to x."""
    return _evaluate(Algorithm.ML, x, _stack(measurements), 1.0, True)


def lmap_objective(x, measurements: list[BsMeasurement], epsilon: float = 1e-3):
    """Log-MAP with the inverse-distance prior per BS, and its gradient."""
    return _evaluate(Algorithm.MAP, x, _stack(measurements), epsilon, True)


def nlls_objective(x, measurements: list[BsMeasurement]):
    """Weighted sum of squared range residuals and its gradient."""
    return _evaluate(Algorithm.NLLS, x, _stack(measurements), 1.0, True)


def objective(algorithm, x, measurements: list[BsMeasurement], epsilon: float = 1e-3) -> np.ndarray:
    """Objective value only; accepts a batch of positions with shape (..., 3)."""
    return _evaluate(Algorithm(algorithm), x, _stack(measurements), epsilon, False)[0]


def start_lattice(config: FusionConfig) -> np.ndarray:
    """Lattice of candidate start points, shape (n_x, n_y, n_z, 3); collapsed axes have length 1."""
    lo, hi = config.bounds()
    axes = [
        np.array([lo[i]]) if lo[i] == hi[i] else np.linspace(lo[i], hi[i], config.grid_starts_per_axis)
        for i in range(3)
    ]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def select_starts(cost: np.ndarray, count: int) -> np.ndarray:
    """Flat indices of the ``count`` best lattice points, discrete local minima first.

    Ranking local minima ahead of plain low-cost points spreads the starts
    over distinct basins instead of clustering them in the best one.
    """
    padded = np.pad(cost, 1, mode="constant", constant_values=np.inf)
    is_min = np.ones(cost.shape, dtype=bool)
    for shift in np.ndindex(*(3,) * cost.ndim):
        if all(s == 1 for s in shift):
            continue
        window = tuple(slice(s, s + n) for s, n in zip(shift, cost.shape))
        is_min &= cost <= padded[window]
    flat = cost.ravel()
    order = np.argsort(flat, kind="stable")
    minima = order[is_min.ravel()[order]]
    rest = order[~is_min.ravel()[order]]
    return np.concatenate([minima, rest])[:count]


def _descend(cost, x0, lo, hi, free, max_iterations, tol, initial_step):
    """Projected steepest descent with a Barzilai-Borwein trial step and Armijo backtracking."""
    x = x0.copy()
    f, g = cost(x)
    g = np.where(free, g, 0.0)
    gnorm = float(np.linalg.norm(g))
    if gnorm == 0.0:
        return x, f, True
    t = initial_step / gnorm
    for _ in range(max_iterations):
        trial = t
        while True:
            x_new = np.clip(x - trial * g, lo, hi)
            s = x_new - x
            if not np.any(s):
                # projected gradient vanishes: stationary on the box
                return x, f, True
            f_new, g_new = cost(x_new)
            if f_new <= f + 1e-4 * float(np.dot(g, s)):
                break
            trial *= 0.5
            if trial * gnorm < 1e-15:
                return x, f, True
        g_new = np.where(free, g_new, 0.0)
        y = g_new - g
        x, f, g = x_new, f_new, g_new
        step = float(np.linalg.norm(s))
        if step < tol:
            return x, f, True
        gnorm = float(np.linalg.norm(g))
        if gnorm == 0.0:
            return x, f, True
        sy = float(np.dot(s, y))
        t = float(np.dot(s, s)) / sy if sy > 0 else 2.0 * trial
    return x, f, False


def estimate_position(measurements: list[BsMeasurement], config: FusionConfig) -> PositionEstimate:
    """Fuse BS measurements into one position with the configured objective."""
    used = normalize_weights(measurements)
    st = _stack(used)
    algorithm = config.algorithm
    sign = -1.0 if algorithm.maximizes else 1.0
    lo, hi = config.bounds()
    free = lo < hi

    lattice = start_lattice(config)
    lattice_cost = sign * _evaluate(algorithm, lattice, st, config.epsilon, False)[0]
    starts = lattice.reshape(-1, 3)[select_starts(lattice_cost, config.num_refine_starts)]

    def cost(x):
        value, grad = _evaluate(algorithm, x, st, config.epsilon, True)
        return sign * float(value), sign * grad

    spans = (hi - lo)[free]
    spacing = float(spans.min()) / (config.grid_starts_per_axis - 1) if spans.size else 0.0
    best = None
    for x0 in starts:
        x, f, converged = _descend(
            cost, x0, lo, hi, free, config.max_iterations, config.convergence_tol, spacing
        )
        if best is None or f < best[1]:
            best = (x, f, converged)
    x, f, converged = best
    return PositionEstimate(
        position=x,
        objective_value=sign * f,
        algorithm=algorithm,
        converged=converged,
        num_measurements_used=len(used),
    )
