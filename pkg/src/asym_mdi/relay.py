"""Surrogate Bell-state-measurement model for a polarization-encoded relay.

The relay mixes the two inputs on a 50:50 beam splitter followed by a
polarizing beam splitter in each output port, giving four threshold
detectors. A Bell-state announcement requires exactly one click among the
two H detectors and exactly one among the two V detectors.

Inputs are phase-randomized photon-number states with ``k`` photons from
Alice and ``l`` from Bob, already attenuated by channel and detector
efficiency. Every detector has dark-count probability ``d``.

Z basis
    Photons are routed independently with probability 1/2 to either port
    (no interference is needed for which-path events). Bob's photons are
    misaligned with probability ``e_d``. Announcements when both parties
    sent the same bit are errors.

X basis
    Photons are routed uniformly over the four detectors and half of the
    announcements are errors, except for the photon-only part of the
    single-photon-pair events whose error follows the two-photon
    interference visibility ``V``: ``e_d + (1 - 2 e_d)(1 - V)/2``.
"""

from __future__ import annotations

import dataclasses
import functools
import math

import numpy as np
from scipy import stats


def _one_click_pair(j: np.ndarray, d: float) -> np.ndarray:
    """Probability that exactly one of two same-polarization detectors clicks.

    ``j`` photons of that polarization are split 50:50 between them.
    """
    j = np.asarray(j)
    with np.errstate(over="ignore"):
        photons = 2.0 ** (1.0 - j.astype(float)) * (1.0 - d)
    return np.where(j == 0, 2.0 * d * (1.0 - d), photons)


def _four_detector(t: np.ndarray, d: float) -> np.ndarray:
    """Announcement probability for ``t`` photons spread over four detectors."""
    t = np.asarray(t, dtype=float)
    half, quarter = 0.5 ** t, 0.25 ** t
    zero = (t == 0).astype(float)
    return 4.0 * (1.0 - d) ** 2 * (half - 2.0 * quarter + zero
                                   + 2.0 * d * (quarter - zero) + d * d * zero)


def single_pair_error(e_d: float, visibility: float) -> float:
    return e_d + (1.0 - 2.0 * e_d) * (1.0 - visibility) / 2.0


@functools.lru_cache(maxsize=64)
def _tables(d: float, e_d: float, visibility: float, k_max: int):
    k = np.arange(k_max + 1)
    kk, ll = np.meshgrid(k, k, indexing="ij")
    s_opp = np.zeros((k_max + 1, k_max + 1))
    s_same = np.zeros_like(s_opp)
    for l in range(k_max + 1):
        j = np.arange(l + 1)
        flip = np.array([math.comb(l, i) * e_d ** i * (1.0 - e_d) ** (l - i) for i in j])
        for kv in range(k_max + 1):
            s_opp[kv, l] = np.sum(flip * _one_click_pair(kv + j, d) * _one_click_pair(l - j, d))
            s_same[kv, l] = np.sum(flip * _one_click_pair(kv + l - j, d) * _one_click_pair(j, d))
    gain_z = 0.5 * (s_opp + s_same)
    err_z = 0.5 * s_same

    gain_x = _four_detector(kk + ll, d)
    err_x = 0.5 * gain_x
    if k_max >= 1:
        photon_only = 0.5 * (1.0 - d) ** 2
        err_x[1, 1] += photon_only * (single_pair_error(e_d, visibility) - 0.5)
    for arr in (gain_z, err_z, gain_x, err_x):
        arr.setflags(write=False)
    return gain_z, err_z, gain_x, err_x


@dataclasses.dataclass(frozen=True)
class PolarizationBSM:
    """Gain and error tables ``D[k, l]`` and ``(De)[k, l]`` for both bases."""

    dark_count: float
    misalignment: float
    visibility: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.dark_count < 1.0:
            raise ValueError("dark count probability must lie in [0, 1)")
        if not 0.0 <= self.misalignment <= 0.5:
            raise ValueError("misalignment must lie in [0, 0.5]")
        if not 0.0 <= self.visibility <= 1.0 + 1e-12:
            raise ValueError("visibility must lie in [0, 1]")

    def tables(self, basis: str, k_max: int) -> tuple[np.ndarray, np.ndarray]:
        gz, ez, gx, ex = _tables(float(self.dark_count), float(self.misalignment),
                                 float(min(self.visibility, 1.0)), int(k_max))
        if basis == "Z":
            return gz, ez
        if basis == "X":
            return gx, ex
        raise ValueError(f"unknown basis {basis!r}")


def source_yields(table: np.ndarray, eta_a: float, eta_b: float, n_max: int) -> np.ndarray:
    """Yields per emitted photon numbers ``(m, n)`` by binomial thinning.

    ``table`` is indexed by photons arriving at the relay.
    """
    k_max = table.shape[0] - 1
    k = np.arange(k_max + 1)
    thin_a = np.array([stats.binom.pmf(k, m, eta_a) for m in range(n_max + 1)])
    thin_b = np.array([stats.binom.pmf(k, n, eta_b) for n in range(n_max + 1)])
    return thin_a @ table @ thin_b.T


def modal_visibility(weights_a, weights_b, overlaps=None) -> float:
    """``|sum_i sqrt(w_A,i w_B,i) c_i|^2`` over a shared mode basis.

    Weights are normalized first; ``overlaps`` defaults to one per mode.
    """
    wa = np.asarray(weights_a, dtype=float)
    wb = np.asarray(weights_b, dtype=float)
    if wa.shape != wb.shape:
        raise ValueError("modal weight vectors must share one basis")
    wa, wb = wa / wa.sum(), wb / wb.sum()
    c = np.ones_like(wa) if overlaps is None else np.asarray(overlaps)
    return float(min(abs(np.sum(np.sqrt(wa * wb) * c)) ** 2, 1.0))
