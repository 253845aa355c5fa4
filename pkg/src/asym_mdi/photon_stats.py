"""Photon-number statistics of WCP and heralded SPDC sources.

Both sources are described mode by mode: a phase-randomized coherent state
is Poissonian in every temporal mode, a two-mode squeezed vacuum is thermal
in every Schmidt mode. Totals over modes follow from convolution, i.e. from
the product of per-mode generating functions.
"""

from __future__ import annotations

import dataclasses
import enum
from typing import Callable, Sequence

import numpy as np
from scipy import optimize, stats

from .errors import ConsistencyError, TruncationError
from .spectra import OverlapVector

DEFAULT_TAIL_TOL = 1e-10
DEFAULT_K_MAX = 20
_NEG_TOL = 1e-14


class SourceKind(enum.Enum):
    WCP = "wcp"
    SPDC = "spdc"


@dataclasses.dataclass(frozen=True, eq=False)
class ModalIntensities:
    """Per-mode mean photon numbers of one source.

    For WCP sources built by :func:`wcp_modal_intensities` the last entry is
    the orthogonal-complement mode when ``has_complement`` is set.
    """

    mu: np.ndarray
    source_kind: SourceKind
    has_complement: bool = False

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float)).copy()
        if np.any(mu < 0) or not np.all(np.isfinite(mu)):
            raise ValueError("modal intensities must be finite and non-negative")
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)

    @property
    def total(self) -> float:
        return float(self.mu.sum())

    @property
    def overlapping(self) -> np.ndarray:
        """Intensities of the modes shared with the reference basis."""
        return self.mu[:-1] if self.has_complement else self.mu

    def scaled(self, factor: float) -> "ModalIntensities":
        return dataclasses.replace(self, mu=self.mu * factor)


@dataclasses.dataclass(frozen=True, eq=False)
class PhotonNumberDistribution:
    """Truncated distribution ``P(0..n_max)`` with tracked missing mass.

    ``mass`` is the total probability the full distribution carries; it is
    one for ordinary distributions and the herald probability for the
    joint (herald, photon number) distributions of an SPDC source.
    """

    probs: np.ndarray
    tail: float
    mass: float = 1.0

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float).copy()
        if probs.ndim != 1 or probs.size == 0:
            raise ValueError("probabilities must be a non-empty vector")
        if np.any(probs < -_NEG_TOL):
            raise ConsistencyError(f"negative probability {probs.min():.3e}")
        probs = np.clip(probs, 0.0, None)
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @property
    def n_max(self) -> int:
        return self.probs.size - 1

    def __getitem__(self, n: int) -> float:
        return float(self.probs[n]) if 0 <= n <= self.n_max else 0.0

    def head(self, n_max: int) -> np.ndarray:
        """``P(0..n_max)``, zero padded if the distribution is shorter."""
        out = np.zeros(n_max + 1)
        m = min(n_max, self.n_max) + 1
        out[:m] = self.probs[:m]
        return out

    def check_tail(self, tol: float | None = DEFAULT_TAIL_TOL) -> "PhotonNumberDistribution":
        if tol is not None and self.tail > tol:
            raise TruncationError(
                f"tail mass {self.tail:.3e} exceeds tolerance {tol:.1e} at n_max={self.n_max}")
        return self

    def csv_rows(self):
        for n, p in enumerate(self.probs):
            yield (n, p)


@dataclasses.dataclass(frozen=True)
class LocalDetector:
    """Herald detector on the idler arm; ``d_i`` is a per-gate probability."""

    eta_i: float = 0.9
    d_i: float = 1e-6

    def __post_init__(self):
        if not 0.0 <= self.eta_i <= 1.0:
            raise ValueError("eta_I must lie in [0, 1]")
        if not 0.0 <= self.d_i < 1.0:
            raise ValueError("d_I must lie in [0, 1)")


@dataclasses.dataclass(frozen=True)
class RelayDetector:
    eta_s: float = 0.6
    d_s: float = 1e-6

    def __post_init__(self):
        if not 0.0 <= self.eta_s <= 1.0:
            raise ValueError("eta_S must lie in [0, 1]")
        if not 0.0 <= self.d_s < 1.0:
            raise ValueError("d_S must lie in [0, 1)")


# ----------------------------------------------------------------------------
# elementary distributions
# ----------------------------------------------------------------------------

def poisson_pnd(mu: float, n_max: int = DEFAULT_K_MAX) -> PhotonNumberDistribution:
    n = np.arange(n_max + 1)
    probs = stats.poisson.pmf(n, mu) if mu > 0 else (n == 0).astype(float)
    tail = float(stats.poisson.sf(n_max, mu)) if mu > 0 else 0.0
    return PhotonNumberDistribution(probs, tail)


def thermal_pnd(mu: float, n_max: int = DEFAULT_K_MAX) -> PhotonNumberDistribution:
    """``mu^n / (1 + mu)^(n+1)``."""
    return geometric_pnd(1.0 / (1.0 + mu), mu / (1.0 + mu), n_max)


def geometric_pnd(scale: float, ratio: float, n_max: int) -> PhotonNumberDistribution:
    """Sequence ``scale * ratio^n`` with mass ``scale / (1 - ratio)``."""
    if not 0.0 <= ratio < 1.0:
        raise ValueError("geometric ratio must lie in [0, 1)")
    n = np.arange(n_max + 1)
    probs = scale * ratio ** n
    mass = scale / (1.0 - ratio)
    tail = mass * ratio ** (n_max + 1)
    return PhotonNumberDistribution(probs, tail, mass)


def pnd_convolve(per_mode: Sequence[PhotonNumberDistribution],
                 tail_tol: float | None = DEFAULT_TAIL_TOL) -> PhotonNumberDistribution:
    """Distribution of the summed photon number over independent modes.

    The output is truncated at the smallest input ``n_max``. Its tail is the
    exact missing mass ``prod(mass) - sum(probs)``, never reported below the
    largest input tail.
    """
    if not per_mode:
        return PhotonNumberDistribution(np.array([1.0]), 0.0)
    n_max = min(d.n_max for d in per_mode)
    acc = np.zeros(n_max + 1)
    acc[0] = 1.0
    mass = 1.0
    for d in per_mode:
        acc = np.convolve(acc, d.probs[: n_max + 1])[: n_max + 1]
        mass *= d.mass
    tail = max(mass - float(acc.sum()), max(d.tail for d in per_mode), 0.0)
    return PhotonNumberDistribution(acc, tail, mass).check_tail(tail_tol)


def _auto_truncation(build: Callable[[int], PhotonNumberDistribution],
                     k_max: int | None, tail_tol: float | None) -> PhotonNumberDistribution:
    """Build at ``k_max`` or, when it is ``None``, grow until the tail is small."""
    if k_max is not None:
        return build(k_max).check_tail(tail_tol)
    k = DEFAULT_K_MAX
    tol = DEFAULT_TAIL_TOL if tail_tol is None else tail_tol
    while True:
        pnd = build(k)
        if pnd.tail <= tol or k >= 4096:
            return pnd.check_tail(tail_tol)
        k *= 2


# ----------------------------------------------------------------------------
# modal intensities
# ----------------------------------------------------------------------------

def spdc_mode_intensities(lambdas, target_total: float) -> ModalIntensities:
    """``mu_k = sinh^2(C sqrt(lambda_k))`` with ``C`` fixed by ``sum mu_k = mu``."""
    lam = np.asarray(lambdas, dtype=float)
    if np.any(lam < 0) or lam.sum() <= 0:
        raise ValueError("Schmidt weights must be non-negative and not all zero")
    if target_total < 0:
        raise ValueError("target intensity must be non-negative")
    if target_total == 0:
        return ModalIntensities(np.zeros_like(lam), SourceKind.SPDC)
    root = np.sqrt(lam)

    def excess(c):
        return float(np.sum(np.sinh(c * root) ** 2)) - target_total

    # sum sinh^2 >= sinh^2(C sqrt(l_max)) gives an upper bracket; for a
    # single mode it is the root itself, so widen it past rounding
    hi = np.arcsinh(np.sqrt(target_total)) / root.max() * (1.0 + 1e-9)
    c = optimize.brentq(excess, 0.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    return ModalIntensities(np.sinh(c * root) ** 2, SourceKind.SPDC)


def wcp_modal_intensities(alpha: complex, overlaps: OverlapVector) -> ModalIntensities:
    """``mu_i = |alpha c_i|^2`` plus an orthogonal-complement mode."""
    weights = overlaps.weights
    total_weight = float(weights.sum())
    if total_weight > 1.0 + 1e-9:
        raise ValueError(f"overlap weights sum to {total_weight} > 1")
    intensity = abs(alpha) ** 2
    complement = intensity * max(0.0, 1.0 - total_weight)
    mu = np.append(intensity * weights, complement)
    return ModalIntensities(mu, SourceKind.WCP, has_complement=True)


# ----------------------------------------------------------------------------
# distributions before and after the channel
# ----------------------------------------------------------------------------

def spdc_total_pnd(modal: ModalIntensities, n_max: int | None = None,
                   tail_tol: float | None = DEFAULT_TAIL_TOL) -> PhotonNumberDistribution:
    """Total photon number of a multimode SPDC source (no heralding)."""
    if modal.source_kind is not SourceKind.SPDC:
        raise ValueError("spdc_total_pnd needs an SPDC source")
    return _auto_truncation(
        lambda k: pnd_convolve([thermal_pnd(m, k) for m in modal.mu], tail_tol=None),
        n_max, tail_tol)


def wcp_total_pnd(modal: ModalIntensities, n_max: int | None = None,
                  tail_tol: float | None = DEFAULT_TAIL_TOL) -> PhotonNumberDistribution:
    """Total photon number of a decomposed WCP source by modal convolution."""
    return _auto_truncation(
        lambda k: pnd_convolve([poisson_pnd(m, k) for m in modal.mu], tail_tol=None),
        n_max, tail_tol)


@dataclasses.dataclass(frozen=True, eq=False)
class HeraldedPND:
    joint: Callable[[Sequence[int]], float]
    total: PhotonNumberDistribution
    trigger_prob: float


def trigger_probability(modal: ModalIntensities, local: LocalDetector) -> float:
    """``1 - (1 - d_I) prod 1/(1 + eta_I mu_i)``."""
    return float(1.0 - (1.0 - local.d_i) * np.prod(1.0 / (1.0 + local.eta_i * modal.mu)))


def _herald_terms(mu: np.ndarray, local: LocalDetector, eta: float):
    """Per-mode (scale, ratio) of both geometric sequences in the joint PND."""
    eta_i = local.eta_i
    s1 = 1.0 / (1.0 + eta * mu)
    r1 = eta * mu * s1
    s2 = 1.0 / (1.0 + (eta + eta_i - eta * eta_i) * mu)
    r2 = (1.0 - eta_i) * eta * mu * s2
    return s1, r1, s2, r2


def heralded_pnd_after_channel(modal: ModalIntensities, local: LocalDetector, eta: float,
                               k_max: int | None = None,
                               tail_tol: float | None = DEFAULT_TAIL_TOL) -> HeraldedPND:
    """Joint probability that the idler heralds and ``k`` signal photons arrive.

    The joint evaluator takes a per-mode photon-number vector; the total is
    over ``k = sum k_i``. Both are normalized to the herald probability.
    """
    if modal.source_kind is not SourceKind.SPDC:
        raise ValueError("heralded statistics need an SPDC source")
    if not 0.0 <= eta <= 1.0:
        raise ValueError("transmittance must lie in [0, 1]")
    mu = modal.mu
    s1, r1, s2, r2 = _herald_terms(mu, local, eta)
    keep = 1.0 - local.d_i

    def joint(k_vec) -> float:
        k = np.asarray(k_vec, dtype=float)
        if k.shape != mu.shape:
            raise ValueError(f"expected {mu.size} photon numbers, got {k.shape}")
        a = np.prod(s1 * r1 ** k)
        b = np.prod(s2 * r2 ** k)
        value = float(a - keep * b)
        if value < -_NEG_TOL:
            raise ConsistencyError(f"negative joint probability {value:.3e}")
        return max(value, 0.0)

    def build(k: int) -> PhotonNumberDistribution:
        first = pnd_convolve([geometric_pnd(s, r, k) for s, r in zip(s1, r1)], tail_tol=None)
        second = pnd_convolve([geometric_pnd(s, r, k) for s, r in zip(s2, r2)], tail_tol=None)
        probs = first.probs - keep * second.probs
        if np.any(probs < -_NEG_TOL):
            raise ConsistencyError(f"negative heralded probability {probs.min():.3e}")
        probs = np.clip(probs, 0.0, None)
        mass = trigger_probability(modal, local)
        # the subtracted sequence is dominated termwise, so the first tail bounds ours
        tail = min(max(mass - float(probs.sum()), 0.0), first.tail) if mass > 0 else 0.0
        return PhotonNumberDistribution(probs, tail, mass)

    total = _auto_truncation(build, k_max, tail_tol)
    return HeraldedPND(joint, total, total.mass)


def wcp_joint_after_channel(modal: ModalIntensities, eta: float) -> Callable[[Sequence[int]], float]:
    """``f(k) = exp(-eta mu) prod (eta mu_i)^k_i / k_i!``."""
    mu = eta * modal.mu

    def joint(k_vec) -> float:
        k = np.asarray(k_vec)
        return float(np.exp(-mu.sum()) * np.prod(stats.poisson.pmf(k, mu) * np.exp(mu)))

    return joint


def wcp_pnd_after_channel(modal: ModalIntensities, eta: float, k_max: int | None = None,
                          tail_tol: float | None = DEFAULT_TAIL_TOL) -> PhotonNumberDistribution:
    """Poisson with mean ``eta * mu`` whatever the modal split."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError("transmittance must lie in [0, 1]")
    mean = eta * modal.total
    return _auto_truncation(lambda k: poisson_pnd(mean, k), k_max, tail_tol)


# ----------------------------------------------------------------------------
# click probability at the relay
# ----------------------------------------------------------------------------

def _vacuum_factors(alpha: complex, overlaps: OverlapVector, mu: np.ndarray,
                    local: LocalDetector, eta: float) -> np.ndarray:
    a = eta * abs(alpha) ** 2 * overlaps.weights / 2.0 / (1.0 + mu)
    return (np.exp(-a) - (1.0 - local.d_i) * np.exp(-(1.0 + local.eta_i * mu) * a)) / (1.0 + mu)


def click_probability_path(alpha: complex, overlaps: OverlapVector, modal_spdc: ModalIntensities,
                           local: LocalDetector, relay: RelayDetector, eta: float) -> float:
    """Click probability of one relay path fed by a heralded SPDC mode set and a WCP.

    Each SPDC mode is heralded independently and the vacuum probabilities
    of the displaced modes multiply. ``modal_spdc`` holds the per-mode
    intensities already referred to the path, and ``eta`` scales the WCP.
    """
    mu = modal_spdc.overlapping
    if mu.size != overlaps.coefficients.size:
        raise ValueError("one overlap coefficient per SPDC mode is required")
    factors = _vacuum_factors(alpha, overlaps, mu, local, eta)
    return float(1.0 - (1.0 - relay.d_s) * np.prod(factors))


def vacuum_maximizer(mu: float, local: LocalDetector) -> float:
    """Argmax over ``x >= 0`` of ``exp(-x) - (1 - d_I) exp(-(1 + eta_I mu) x)``."""
    g = local.eta_i * mu
    if g <= 0:
        return 0.0
    return max(0.0, float(np.log((1.0 - local.d_i) * (1.0 + g)) / g))


def _max_vacuum_factor(mu: float, local: LocalDetector) -> float:
    g = local.eta_i * mu
    x0 = vacuum_maximizer(mu, local)
    if x0 <= 0.0:
        # maximum sits at the boundary x = 0
        return local.d_i / (1.0 + mu)
    return g / ((1.0 + mu) * (1.0 + g)) * (1.0 / ((1.0 - local.d_i) * (1.0 + g))) ** (1.0 / g)


def visibility_lower_bound(modal: ModalIntensities, local: LocalDetector,
                           relay: RelayDetector) -> float:
    """Lower bound on the path click probability valid for every WCP amplitude."""
    mu = modal.overlapping
    best = max(_max_vacuum_factor(float(m), local) for m in mu)
    return float(1.0 - (1.0 - relay.d_s) * best)
