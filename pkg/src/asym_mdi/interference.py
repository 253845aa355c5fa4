"""Two-input 50:50 beam-splitter coincidence probabilities.

Beam-splitter convention: ``a -> (a + b)/sqrt2``, ``b -> (a - b)/sqrt2``.
Detectors are threshold detectors without dark counts; all inputs share
one polarization.
"""

from __future__ import annotations

import dataclasses
from typing import Sequence

import numpy as np

from .errors import GridError
from .spectra import JointSpectralAmplitude, SchmidtDecomposition, SpectralAmplitude

_C_TOL = 1e-12


@dataclasses.dataclass(frozen=True)
class DetectorPair:
    eta1: float = 1.0
    eta2: float = 1.0

    def __post_init__(self):
        for eta in (self.eta1, self.eta2):
            if not 0.0 <= eta <= 1.0:
                raise ValueError(f"detection efficiency {eta} outside [0, 1]")


@dataclasses.dataclass(frozen=True)
class CoincidenceResult:
    probability: float
    breakdown: tuple | None = None

    def __post_init__(self):
        if not -1e-12 <= self.probability <= 1.0 + 1e-12:
            raise ValueError(f"coincidence probability {self.probability} outside [0, 1]")


IDEAL = DetectorPair()


def _check_overlap(c: complex) -> float:
    mag2 = abs(c) ** 2
    if abs(c) > 1.0 + _C_TOL:
        raise ValueError(f"|c| = {abs(c):.15g} exceeds 1")
    return min(mag2, 1.0)


def coincidence_single_photon(c: complex, det: DetectorPair = IDEAL) -> CoincidenceResult:
    """One photon per input with mode overlap ``c``: ``eta1 eta2 (1 - |c|^2) / 2``."""
    mag2 = _check_overlap(c)
    return CoincidenceResult(det.eta1 * det.eta2 * (1.0 - mag2) / 2.0)


def coincidence_coherent(alpha: complex, beta: complex, c: complex,
                         det: DetectorPair = IDEAL) -> CoincidenceResult:
    """Coherent states ``|alpha>`` and ``|beta>`` whose modes overlap by ``c``.

    The ``beta`` mode splits into a part parallel to the ``alpha`` mode and an
    orthogonal remainder; each output port then holds independent coherent
    states with total mean photon numbers ``mu_a`` and ``mu_b``.
    """
    mag2 = _check_overlap(c)
    perp = abs(beta) ** 2 * (1.0 - mag2) / 2.0
    mu_a = abs(alpha + beta * c) ** 2 / 2.0 + perp
    mu_b = abs(alpha - beta * c) ** 2 / 2.0 + perp
    p_a = -np.expm1(-det.eta1 * mu_a)
    p_b = -np.expm1(-det.eta2 * mu_b)
    return CoincidenceResult(float(p_a * p_b), breakdown=(mu_a, mu_b))


def _require_square(jsa: JointSpectralAmplitude) -> None:
    if not jsa.signal_grid.matches(jsa.idler_grid):
        raise GridError("exchange symmetry needs identical signal and idler grids")


def coincidence_spdc_pair(jsa: JointSpectralAmplitude) -> CoincidenceResult:
    """Photon pair ``f(w1, w2)`` entering both ports, ideal detectors.

    ``P = 1/2 - 1/2 * iint conj(f(w2, w1)) f(w1, w2)`` by grid quadrature.
    """
    _require_square(jsa)
    f = jsa.values
    overlap = np.sum(np.conj(f.T) * f) * jsa.weight
    return CoincidenceResult(float(0.5 - 0.5 * overlap.real), breakdown=(complex(overlap),))


def coincidence_spdc_schmidt(schmidt: SchmidtDecomposition) -> CoincidenceResult:
    """Same probability evaluated in the Schmidt basis.

    ``P = 1/2 - 1/2 sum_mn sqrt(l_m l_n) <phi_m|psi_n> <psi_m|phi_n>``.
    Exact only when the decomposition keeps every mode.
    """
    psi = np.array([m.values for m in schmidt.signal_modes])
    phi = np.array([m.values for m in schmidt.idler_modes])
    if psi.shape != phi.shape or not schmidt.signal_modes[0].grid.matches(
            schmidt.idler_modes[0].grid):
        raise GridError("exchange symmetry needs identical signal and idler grids")
    h = schmidt.signal_modes[0].grid.step
    a = np.conj(psi) @ phi.T * h  # a[m, n] = <psi_m|phi_n>
    s = np.sqrt(schmidt.lambdas)
    # <phi_m|psi_n> = conj(a[n, m])
    overlap = np.einsum("m,n,nm,mn->", s, s, np.conj(a), a)
    return CoincidenceResult(float(0.5 - 0.5 * overlap.real), breakdown=(complex(overlap),))


def delayed_overlap(amp_a: SpectralAmplitude, amp_b: SpectralAmplitude, tau: float) -> complex:
    """``c(tau) = int conj(psi_a) psi_b exp(i w tau) dw`` on a shared grid."""
    grid = amp_a.grid
    if not grid.matches(amp_b.grid):
        raise GridError("HOM scan needs both amplitudes on one grid")
    # carrier phase factored out to keep the oscillating sum well conditioned
    inner = np.sum(np.conj(amp_a.values) * amp_b.values * np.exp(1j * grid.offsets * tau))
    return complex(np.exp(1j * grid.center * tau) * inner * grid.step)


def hom_dip_scan(amp_a: SpectralAmplitude, amp_b: SpectralAmplitude, delays: Sequence[float],
                 det: DetectorPair = IDEAL) -> list[tuple[float, float]]:
    """Single-photon coincidence probability versus relative delay."""
    rows = []
    for tau in delays:
        c = delayed_overlap(amp_a, amp_b, float(tau))
        # quadrature round-off can push |c| a hair above one
        if abs(c) > 1.0:
            c = c / abs(c)
        rows.append((float(tau), coincidence_single_photon(c, det).probability))
    return rows
