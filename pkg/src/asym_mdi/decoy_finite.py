"""Finite-size decoy-state bounds.

Counts are converted to intervals on their expected values with
Chernoff-type bounds, those intervals feed linear programs over the
photon-number-resolved yields ``Y_mn``, and the resulting expected-value
bounds are turned back into observed-value bounds.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import itertools
import math
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import optimize

from .errors import LPError, LPInfeasibleError, LPUnboundedError, NumericError

DEFAULT_XI = 1e-7
DEFAULT_N_MAX = 6
INTENSITIES = ("mu", "nu", "vac")
BASES = ("Z", "X")

_ROOT_XTOL = 1e-300
_ROOT_RTOL = 4 * np.finfo(float).eps


class NoRootError(NumericError):
    """A Chernoff equation has no root in its admissible interval."""


# ----------------------------------------------------------------------------
# Chernoff bounds
# ----------------------------------------------------------------------------

def _check(value: float, xi: float, name: str) -> None:
    if not value > 0 or not math.isfinite(value):
        raise ValueError(f"{name} must be positive and finite, got {value}")
    if not 0.0 < xi < 1.0:
        raise ValueError(f"failure probability must lie in (0, 1), got {xi}")


def _brentq(f, lo: float, hi: float) -> float:
    try:
        root, info = optimize.brentq(f, lo, hi, xtol=_ROOT_XTOL, rtol=_ROOT_RTOL,
                                     maxiter=1000, full_output=True)
    except (ValueError, RuntimeError) as exc:
        raise NumericError(f"root finding failed: {exc}") from exc
    if not info.converged:
        raise NumericError("root finding did not converge")
    return root


def delta1_residual(d: float, x: float, xi: float) -> float:
    return d - (1.0 + d) * (math.log1p(d) + math.log(xi) / x)


def delta2_residual(d: float, x: float, xi: float) -> float:
    return d + (1.0 - d) * (math.log1p(-d) + math.log(xi) / x)


def delta1p_residual(d: float, y: float, xi: float) -> float:
    return d - (1.0 + d) * math.log1p(d) - math.log(xi) / y


def delta2p_residual(d: float, y: float, xi: float) -> float:
    return d + (1.0 - d) * math.log1p(-d) + math.log(xi) / y


def _log_delta1(x: float, xi: float) -> float:
    """``u = ln(1 + delta1)``.

    Dividing the delta1 equation by ``1 + delta1`` gives
    ``1 + L - exp(-u) - u = 0`` with ``L = -ln(xi)/x``, whose root lies in
    ``(L, L + 1)``. Solving for ``u`` avoids overflow for tiny counts.
    """
    _check(x, xi, "observed count")
    big_l = -math.log(xi) / x
    return _brentq(lambda u: 1.0 + big_l - math.exp(-u) - u, 0.0, big_l + 1.0)


def chernoff_delta1(x: float, xi: float) -> float:
    return math.expm1(_log_delta1(x, xi))


def _log_delta2(x: float, xi: float) -> float:
    """``v = -ln(1 - delta2)``, the root of ``exp(v) - 1 - v - L = 0``.

    The root is unique for every positive count and stays finite where
    ``delta2`` itself rounds to one.
    """
    _check(x, xi, "observed count")
    big_l = -math.log(xi) / x
    f = lambda v: math.expm1(v) - v - big_l  # noqa: E731
    hi = 1.0
    while f(hi) <= 0:
        hi *= 2.0
    return _brentq(f, 0.0, hi)


def chernoff_delta2(x: float, xi: float) -> float:
    return -math.expm1(-_log_delta2(x, xi))


def _log_delta1p(y: float, xi: float) -> float:
    """``u = ln(1 + delta1')``, the root of ``exp(u)(1 - u) - 1 + L = 0``."""
    _check(y, xi, "expected value")
    big_l = -math.log(xi) / y
    f = lambda u: math.exp(u) * (1.0 - u) - 1.0 + big_l  # noqa: E731
    hi = 1.0
    while f(hi) >= 0:
        hi *= 2.0
    return _brentq(f, 0.0, hi)


def chernoff_delta1p(y: float, xi: float) -> float:
    return math.expm1(_log_delta1p(y, xi))


def chernoff_delta2p(y: float, xi: float) -> float:
    _check(y, xi, "expected value")
    if y <= -math.log(xi):
        raise NoRootError(f"no lower observed bound for expected value {y} <= -ln(xi)")
    return _brentq(lambda d: delta2p_residual(d, y, xi), 0.0, 1.0 - 1e-16)


def chernoff_expected_lower(x: float, xi: float = DEFAULT_XI) -> float:
    """Lower bound on the expected value behind an observed count ``x``."""
    return x * math.exp(-_log_delta1(x, xi))


def chernoff_expected_upper(x: float, xi: float = DEFAULT_XI) -> float:
    """Upper bound on the expected value behind an observed count ``x``."""
    return x * math.exp(_log_delta2(x, xi))


def chernoff_observed_bounds(y: float, xi: float = DEFAULT_XI) -> tuple[float, float]:
    """Interval ``(O_L, O_U)`` that an observation of expectation ``y`` falls in."""
    return (1.0 - chernoff_delta2p(y, xi)) * y, y * math.exp(_log_delta1p(y, xi))


def expected_interval(count: float, xi: float) -> tuple[float, float]:
    """Expected-value interval for a count, including a zero count.

    A zero count gives ``[0, -ln xi]``, the limit of the upper bound as the
    count goes to zero.
    """
    if count < 0:
        raise ValueError("counts cannot be negative")
    if count == 0:
        return 0.0, -math.log(xi)
    return chernoff_expected_lower(count, xi), chernoff_expected_upper(count, xi)


def observed_lower(y: float, xi: float) -> float:
    """``O_L(y)`` with zero where the lower equation has no root."""
    if y <= 0:
        return 0.0
    try:
        return chernoff_observed_bounds(y, xi)[0]
    except NoRootError:
        return 0.0


def observed_upper(y: float, xi: float) -> float:
    if y <= 0:
        return 0.0
    return y * math.exp(_log_delta1p(y, xi))


# ----------------------------------------------------------------------------
# observations
# ----------------------------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class Observation:
    basis: str
    intensity_a: str
    intensity_b: str
    pulses: float
    clicks: float
    errors: float

    def __post_init__(self):
        if self.basis not in BASES:
            raise ValueError(f"unknown basis {self.basis!r}")
        for label in (self.intensity_a, self.intensity_b):
            if label not in INTENSITIES:
                raise ValueError(f"unknown intensity label {label!r}")
        if self.pulses < 0 or self.clicks < 0 or self.errors < 0:
            raise ValueError("counts must be non-negative")
        if self.errors > self.clicks * (1 + 1e-12) + 1e-12:
            raise ValueError("more errors than clicks")

    @property
    def gain(self) -> float:
        return self.clicks / self.pulses if self.pulses > 0 else 0.0

    @property
    def qber(self) -> float:
        return self.errors / self.clicks if self.clicks > 0 else 0.0


_CSV_FIELDS = ("basis", "intensity_A", "intensity_B", "pulses", "clicks", "errors")


@dataclasses.dataclass(frozen=True)
class DecoyObservations:
    records: tuple

    def __post_init__(self):
        seen = set()
        for r in self.records:
            key = (r.basis, r.intensity_a, r.intensity_b)
            if key in seen:
                raise ValueError(f"duplicate observation for {key}")
            seen.add(key)

    def get(self, basis: str, a: str, b: str) -> Observation | None:
        for r in self.records:
            if (r.basis, r.intensity_a, r.intensity_b) == (basis, a, b):
                return r
        return None

    def basis(self, basis: str) -> list[Observation]:
        return [r for r in self.records if r.basis == basis]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(_CSV_FIELDS)
        for r in self.records:
            w.writerow((r.basis, r.intensity_a, r.intensity_b,
                        repr(float(r.pulses)), repr(float(r.clicks)), repr(float(r.errors))))
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "DecoyObservations":
        rows = csv.DictReader(io.StringIO(text))
        missing = set(_CSV_FIELDS) - set(rows.fieldnames or ())
        if missing:
            raise ValueError(f"observation CSV lacks columns {sorted(missing)}")
        return cls(tuple(
            Observation(r["basis"], r["intensity_A"], r["intensity_B"],
                        float(r["pulses"]), float(r["clicks"]), float(r["errors"]))
            for r in rows))


@dataclasses.dataclass(frozen=True, eq=False)
class PhotonMixture:
    """Photon-number probabilities ``P_a(0..N_max)`` for each intensity label."""

    probs: Mapping[str, np.ndarray]
    mass: Mapping[str, float]

    def __post_init__(self):
        for label, p in self.probs.items():
            if np.any(np.asarray(p) < 0):
                raise ValueError(f"negative photon-number probability for {label}")
            if self.remainder(label) < -1e-12:
                raise ValueError(f"probabilities for {label} exceed their mass")

    def remainder(self, label: str) -> float:
        return float(self.mass[label] - np.sum(self.probs[label]))

    @classmethod
    def from_pnds(cls, pnds: Mapping, n_max: int = DEFAULT_N_MAX) -> "PhotonMixture":
        return cls({k: d.head(n_max) for k, d in pnds.items()},
                   {k: d.mass for k, d in pnds.items()})


@dataclasses.dataclass(frozen=True)
class YieldBounds:
    y11_l: float
    e11y11_u: float
    e11_u: float
    clamped: bool = False
    degenerate: bool = False
    basis: str = "Z"


# ----------------------------------------------------------------------------
# linear programming
# ----------------------------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class LPResult:
    value: float
    x: np.ndarray


def lp_solve(c, a_ub=None, b_ub=None, bounds=(0.0, 1.0), maximize: bool = False,
             tol: float = 1e-10) -> LPResult:
    """Minimize (or maximize) ``c @ x`` subject to ``a_ub @ x <= b_ub`` and box bounds."""
    c = np.asarray(c, dtype=float)
    sign = -1.0 if maximize else 1.0
    res = optimize.linprog(
        sign * c, A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs",
        options={"primal_feasibility_tolerance": tol, "dual_feasibility_tolerance": tol,
                 "presolve": True})
    if res.status == 2:
        raise LPInfeasibleError(res.message)
    if res.status == 3:
        raise LPUnboundedError(res.message)
    if res.status != 0:
        raise LPError(res.message)
    return LPResult(float(sign * res.fun), np.asarray(res.x))


def _yield_index(n_max: int, m: int, n: int) -> int:
    return m * (n_max + 1) + n


def _constraints(rows: Sequence[tuple[np.ndarray, float, float, float]]):
    """Stack ``lo - slack <= row @ y <= hi`` into ``A_ub y <= b_ub`` with per-row scaling."""
    a, b = [], []
    for row, lo, hi, slack in rows:
        scale = float(np.max(np.abs(row))) or 1.0
        a.append(row / scale)
        b.append(hi / scale)
        a.append(-row / scale)
        b.append(-(lo - slack) / scale)
    return np.array(a), np.array(b)


def _basis_rows(obs: DecoyObservations, basis: str, mix_a: PhotonMixture, mix_b: PhotonMixture,
                xi: float | None, n_max: int, errors: bool):
    rows = []
    for r in obs.basis(basis):
        if r.pulses <= 0:
            continue
        pa, pb = mix_a.probs[r.intensity_a][: n_max + 1], mix_b.probs[r.intensity_b][: n_max + 1]
        row = np.outer(pa, pb).ravel()
        slack = mix_a.mass[r.intensity_a] * mix_b.mass[r.intensity_b] - float(row.sum())
        count = r.errors if errors else r.clicks
        if xi is None:
            lo = hi = count / r.pulses
        else:
            lo, hi = (v / r.pulses for v in expected_interval(count, xi))
        rows.append((row, lo, hi, max(slack, 0.0)))
    if not rows:
        raise LPInfeasibleError(f"no usable {basis}-basis observations")
    return rows


def _population(obs: DecoyObservations, basis: str, mix_a: PhotonMixture,
                mix_b: PhotonMixture) -> float:
    """Largest expected number of single-photon pairs among the signal/decoy settings."""
    best = 0.0
    for r in obs.basis(basis):
        if "vac" in (r.intensity_a, r.intensity_b):
            continue
        pa, pb = mix_a.probs[r.intensity_a], mix_b.probs[r.intensity_b]
        best = max(best, r.pulses * pa[1] * pb[1])
    return best


def lp_yield_bounds(obs: DecoyObservations, mix_a: PhotonMixture, mix_b: PhotonMixture,
                    xi: float | None = DEFAULT_XI, n_max: int = DEFAULT_N_MAX,
                    basis: str = "Z", with_errors: bool = True) -> YieldBounds:
    """Bounds on ``Y11`` and ``Y11 e11`` for one basis.

    ``xi=None`` switches to the asymptotic mode: counts are taken as their
    own expectations and no observed-value conversion is applied.
    """
    size = (n_max + 1) ** 2
    target = np.zeros(size)
    target[_yield_index(n_max, 1, 1)] = 1.0

    a_ub, b_ub = _constraints(_basis_rows(obs, basis, mix_a, mix_b, xi, n_max, errors=False))
    y11 = max(lp_solve(target, a_ub, b_ub).value, 0.0)

    ey11 = 1.0
    if with_errors:
        a_e, b_e = _constraints(_basis_rows(obs, basis, mix_a, mix_b, xi, n_max, errors=True))
        # e_mn Y_mn <= Y_mn <= 1, so the same box applies
        ey11 = min(lp_solve(target, a_e, b_e, maximize=True).value, 1.0)

    if xi is not None:
        pop = _population(obs, basis, mix_a, mix_b)
        if pop > 0:
            y11 = observed_lower(y11 * pop, xi) / pop
            if with_errors:
                ey11 = min(observed_upper(ey11 * pop, xi) / pop, 1.0)
        else:
            y11 = 0.0

    if y11 <= 0.0:
        return YieldBounds(0.0, ey11, 1.0, clamped=True, degenerate=True, basis=basis)
    e11 = ey11 / y11
    clamped = e11 > 1.0
    return YieldBounds(y11, ey11, min(e11, 1.0), clamped=clamped, basis=basis)


def planted_observations(yields: np.ndarray, errors: np.ndarray, mix_a: PhotonMixture,
                         mix_b: PhotonMixture, pulses: Mapping[tuple, float],
                         bases: Iterable[str] = BASES) -> DecoyObservations:
    """Expected counts from a planted yield table, with the tail fixed by ``Y = 1``.

    ``pulses`` maps ``(basis, a, b)`` to pulse counts; photon numbers beyond
    the table are assumed to click every time with error ``1/2``.
    """
    n = yields.shape[0] - 1
    records = []
    for basis, a, b in itertools.product(bases, INTENSITIES, INTENSITIES):
        key = (basis, a, b)
        if key not in pulses:
            continue
        pa, pb = mix_a.probs[a][: n + 1], mix_b.probs[b][: n + 1]
        outer = np.outer(pa, pb)
        rest = mix_a.mass[a] * mix_b.mass[b] - float(outer.sum())
        q = float(np.sum(outer * yields)) + rest
        eq = float(np.sum(outer * yields * errors)) + 0.5 * rest
        records.append(Observation(basis, a, b, pulses[key], q * pulses[key], eq * pulses[key]))
    return DecoyObservations(tuple(records))
