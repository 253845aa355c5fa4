"""Particle swarm search, coordinate-descent refinement and distance sweeps.

Objectives are maximized. They may return ``-inf`` for points where the
model fails; such points simply never become the best.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Callable, Sequence

import numpy as np

Objective = Callable[[np.ndarray], float]

# per-party layout of a protocol vector: nu, mu, PZ_nu, PZ_mu, PX_nu, PX_mu
PARTY_SIZE = 6
NU, MU = 0, 1
PROBS = slice(2, 6)
_ORDER_GAP = 1e-6


@dataclasses.dataclass(frozen=True)
class SearchSpace:
    """Box bounds plus per-party probability simplex and ``nu < mu`` ordering.

    ``parties`` is the number of consecutive 6-entry party blocks; zero
    means a plain box.
    """

    lower: np.ndarray
    upper: np.ndarray
    parties: int = 0

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("bounds must be vectors of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)) and np.all(lo <= hi)):
            raise ValueError("bounds must be finite with lower <= upper")
        if self.parties and lo.size != self.parties * PARTY_SIZE:
            raise ValueError("party blocks do not match the vector length")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    @classmethod
    def protocol(cls, parties: int, nu=(1e-4, 0.3), mu=(0.01, 0.8)) -> "SearchSpace":
        lo = [nu[0], mu[0], 0.0, 0.0, 0.0, 0.0] * parties
        hi = [nu[1], mu[1], 1.0, 1.0, 1.0, 1.0] * parties
        return cls(np.array(lo), np.array(hi), parties)

    def repair(self, x: np.ndarray) -> np.ndarray:
        """Project onto the feasible set: clip, order intensities, scale probabilities."""
        x = np.clip(np.asarray(x, dtype=float), self.lower, self.upper)
        for p in range(self.parties):
            block = x[p * PARTY_SIZE:(p + 1) * PARTY_SIZE]
            if block[NU] >= block[MU]:
                block[NU] = max(self.lower[p * PARTY_SIZE + NU], block[MU] * (1.0 - _ORDER_GAP))
                if block[NU] >= block[MU]:
                    block[MU] = min(self.upper[p * PARTY_SIZE + MU],
                                    block[NU] * (1.0 + 2 * _ORDER_GAP))
            total = block[PROBS].sum()
            if total > 1.0:
                block[PROBS] = block[PROBS] / total
                # rounding can leave the sum a few ulps above one
                while block[PROBS].sum() > 1.0:
                    block[PROBS] = block[PROBS] * (1.0 - 1e-15)
        return x

    def contains(self, x: np.ndarray) -> bool:
        x = np.asarray(x)
        if np.any(x < self.lower) or np.any(x > self.upper):
            return False
        for p in range(self.parties):
            block = x[p * PARTY_SIZE:(p + 1) * PARTY_SIZE]
            if block[NU] >= block[MU] or block[PROBS].sum() > 1.0:
                return False
        return True


@dataclasses.dataclass(frozen=True)
class SwarmConfig:
    particles: int = 40
    iterations: int = 200
    inertia: float = 0.72
    cognitive: float = 1.49
    social: float = 1.49
    seed: int = 0

    def __post_init__(self):
        if self.particles < 2:
            raise ValueError("a swarm needs at least two particles")
        if self.iterations < 1:
            raise ValueError("at least one iteration is required")
        if not 0.0 <= self.inertia <= 1.0:
            raise ValueError("inertia must lie in [0, 1]")
        if self.cognitive <= 0 or self.social <= 0:
            raise ValueError("acceleration coefficients must be positive")


@dataclasses.dataclass(frozen=True)
class OptimizeResult:
    x: np.ndarray
    value: float
    trace: tuple = ()
    evaluations: int = 0


def _safe(objective: Objective, x: np.ndarray) -> float:
    value = float(objective(x))
    return value if not math.isnan(value) else -math.inf


def _reflect(x: np.ndarray, v: np.ndarray, lo: np.ndarray, hi: np.ndarray):
    over, under = x > hi, x < lo
    x = np.where(over, 2 * hi - x, x)
    x = np.where(under, 2 * lo - x, x)
    v = np.where(over | under, -v, v)
    return np.clip(x, lo, hi), v


def pso_optimize(objective: Objective, space: SearchSpace, cfg: SwarmConfig = SwarmConfig(),
                 seeds: Sequence[np.ndarray] = ()) -> OptimizeResult:
    """Global-best particle swarm with reflecting walls.

    ``seeds`` replace the first random particles, which lets a restart keep a
    known good point in the swarm.
    """
    rng = np.random.default_rng(cfg.seed)
    lo, hi = space.lower, space.upper
    width = hi - lo
    pos = lo + rng.random((cfg.particles, space.dim)) * width
    for i, s in enumerate(list(seeds)[: cfg.particles]):
        pos[i] = s
    pos = np.array([space.repair(p) for p in pos])
    vel = (rng.random((cfg.particles, space.dim)) - 0.5) * width * 0.2
    vals = np.array([_safe(objective, p) for p in pos])
    best_pos, best_vals = pos.copy(), vals.copy()
    g = int(np.argmax(best_vals))
    g_pos, g_val = best_pos[g].copy(), best_vals[g]
    trace = []
    for _ in range(cfg.iterations):
        r1 = rng.random(pos.shape)
        r2 = rng.random(pos.shape)
        vel = (cfg.inertia * vel + cfg.cognitive * r1 * (best_pos - pos)
               + cfg.social * r2 * (g_pos - pos))
        pos, vel = _reflect(pos + vel, vel, lo, hi)
        pos = np.array([space.repair(p) for p in pos])
        vals = np.array([_safe(objective, p) for p in pos])
        better = vals > best_vals
        best_pos[better], best_vals[better] = pos[better], vals[better]
        g = int(np.argmax(best_vals))
        if best_vals[g] > g_val:
            g_pos, g_val = best_pos[g].copy(), best_vals[g]
        trace.append(g_val)
    evals = cfg.particles * (cfg.iterations + 1)
    return OptimizeResult(g_pos, float(g_val), tuple(trace), evals)


@dataclasses.dataclass(frozen=True)
class DescentConfig:
    initial_fraction: float = 0.1
    shrink: float = 0.5
    levels: int = 8
    min_step: float = 1e-5
    max_passes: int = 50


def coordinate_descent(objective: Objective, space: SearchSpace, x0: np.ndarray,
                       cfg: DescentConfig = DescentConfig(), f0: float | None = None,
                       ) -> OptimizeResult:
    """Compass search along the coordinate axes with geometric step shrinkage.

    Only strict improvements are accepted, so the result is never worse
    than the repaired starting point.
    """
    x = space.repair(x0)
    fx = _safe(objective, x) if f0 is None else f0
    evals = 0 if f0 is not None else 1
    steps = cfg.initial_fraction * (space.upper - space.lower)
    trace = [fx]
    for _ in range(cfg.levels):
        for _ in range(cfg.max_passes):
            improved = False
            for i in range(space.dim):
                if steps[i] <= 0:
                    continue
                for sign in (1.0, -1.0):
                    trial = x.copy()
                    trial[i] += sign * steps[i]
                    trial = space.repair(trial)
                    if np.array_equal(trial, x):
                        continue
                    ft = _safe(objective, trial)
                    evals += 1
                    if ft > fx:
                        x, fx, improved = trial, ft, True
                        break
            trace.append(fx)
            if not improved:
                break
        steps = np.maximum(steps * cfg.shrink, cfg.min_step)
    return OptimizeResult(x, float(fx), tuple(trace), evals)


@dataclasses.dataclass(frozen=True)
class SweepPoint:
    index: int
    distance: float
    x: np.ndarray
    value: float
    restarted: bool = False


def continuation_sweep(objective_at: Callable[[float], Objective], distances: Sequence[float],
                       space: SearchSpace, cfg: SwarmConfig = SwarmConfig(),
                       x0: np.ndarray | None = None,
                       restart_cfg: SwarmConfig | None = None,
                       descent: DescentConfig = DescentConfig(),
                       drop_ratio: float = 0.5) -> list[SweepPoint]:
    """Optimize along a loss-ordered grid, each point seeded by the previous optimum.

    The first point gets a full swarm search unless ``x0`` is given. A point
    whose optimum falls below ``drop_ratio`` times the previous one triggers
    a swarm restart (``restart_cfg``, default ``cfg``) that keeps the
    previous optimum as one particle.
    """
    restart_cfg = restart_cfg or cfg
    points: list[SweepPoint] = []
    x_prev, v_prev = None, None
    for i, d in enumerate(distances):
        f = objective_at(float(d))
        if x_prev is None:
            if x0 is None:
                g = pso_optimize(f, space, cfg)
                start = g.x
            else:
                start = x0
            res = coordinate_descent(f, space, start, descent)
        else:
            res = coordinate_descent(f, space, x_prev, descent)
        restarted = False
        if v_prev is not None and v_prev > 0 and res.value < drop_ratio * v_prev:
            g = pso_optimize(f, space, dataclasses.replace(restart_cfg, seed=restart_cfg.seed + i),
                             seeds=[res.x])
            if g.value > res.value:
                res = coordinate_descent(f, space, g.x, descent, f0=g.value)
            restarted = True
        points.append(SweepPoint(i, float(d), res.x, res.value, restarted))
        x_prev, v_prev = res.x, res.value
    return points


def fixed_param_sweep(objective_at: Callable[[float], Objective], x: np.ndarray,
                      distances: Sequence[float]) -> list[tuple[float, float]]:
    """Evaluate frozen parameters along a distance grid."""
    return [(float(d), _safe(objective_at(float(d)), np.asarray(x))) for d in distances]
