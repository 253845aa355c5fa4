"""Spectral wave functions on uniform angular-frequency grids.

Everything here works in rad/s and seconds. Helpers at the top convert the
laboratory units used in configuration files (nm, GHz, ps).

Quadrature is the uniform-weight rule ``sum(f) * step``; for the Gaussian-like
functions in this package the grid ends carry negligible weight, so this is
equivalent to the trapezoid rule.
"""

from __future__ import annotations

import dataclasses
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import DegenerateSpectrumError, GridError, NumericError

SPEED_OF_LIGHT = 299_792_458.0  # m/s

#: Default number of Schmidt modes kept when no cutoff is requested.
DEFAULT_MODE_CUTOFF = 6
#: Cumulative Schmidt weight at which the default cutoff stops early.
DEFAULT_MODE_MASS = 1.0 - 1e-6
DEFAULT_GRID_POINTS = 512


def wavelength_to_omega(wavelength_nm: float) -> float:
    """Angular frequency (rad/s) of light with the given vacuum wavelength."""
    return 2.0 * np.pi * SPEED_OF_LIGHT / (wavelength_nm * 1e-9)


def ghz_to_omega(frequency_ghz: float) -> float:
    """Ordinary frequency in GHz to angular frequency in rad/s."""
    return 2.0 * np.pi * 1e9 * frequency_ghz


def pulse_sigma_to_omega(sigma_ps: float) -> float:
    """Spectral width of a Gaussian amplitude ``exp(-t^2 / 2 sigma_t^2)``.

    The Fourier pair of that pulse is ``exp(-w^2 sigma_t^2 / 2)``, hence
    ``sigma_w = 1 / sigma_t``.
    """
    if sigma_ps <= 0:
        raise ValueError("pulse width must be positive")
    return 1.0 / (sigma_ps * 1e-12)


@dataclasses.dataclass(frozen=True)
class FrequencyGrid:
    """Uniform grid ``center + k * step`` symmetric about ``center``.

    ``span`` is the half-width, so the samples run from ``center - span`` to
    ``center + span`` inclusive.
    """

    center: float
    span: float
    points: int

    def __post_init__(self):
        if int(self.points) != self.points or self.points < 2:
            raise GridError(f"grid needs at least 2 points, got {self.points}")
        if not self.span > 0:
            raise GridError(f"grid span must be positive, got {self.span}")

    @property
    def step(self) -> float:
        return 2.0 * self.span / (self.points - 1)

    @property
    def offsets(self) -> np.ndarray:
        # (k - (n-1)/2) is exactly antisymmetric in floating point
        return (np.arange(self.points) - (self.points - 1) / 2.0) * self.step

    @property
    def omega(self) -> np.ndarray:
        return self.center + self.offsets

    def covers(self, low: float, high: float) -> bool:
        return low >= self.center - self.span and high <= self.center + self.span

    def matches(self, other: "FrequencyGrid") -> bool:
        return (
            self.points == other.points
            and np.isclose(self.center, other.center, rtol=1e-13, atol=0.0)
            and np.isclose(self.span, other.span, rtol=1e-12, atol=0.0)
        )

    @classmethod
    def around(cls, center: float, width: float, points: int = DEFAULT_GRID_POINTS,
               widths: float = 6.0) -> "FrequencyGrid":
        """Grid covering ``center +- widths * width``."""
        return cls(center, widths * width, points)


def _require_same_grid(a: FrequencyGrid, b: FrequencyGrid) -> None:
    if not a.matches(b):
        raise GridError("spectral amplitudes live on different grids")


@dataclasses.dataclass(frozen=True, eq=False)
class SpectralAmplitude:
    """Complex amplitude density sampled on a :class:`FrequencyGrid`."""

    grid: FrequencyGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex)
        if values.shape != (self.grid.points,):
            raise GridError(
                f"expected {self.grid.points} samples, got shape {values.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def norm(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2) * self.grid.step)

    def normalized(self) -> "SpectralAmplitude":
        n = self.norm()
        if n < 1e-15:
            raise DegenerateSpectrumError(f"amplitude norm {n:.3e} too small to normalize")
        return SpectralAmplitude(self.grid, self.values / np.sqrt(n))

    def inner(self, other: "SpectralAmplitude") -> complex:
        """``<self|other> = sum conj(self) * other * step``."""
        _require_same_grid(self.grid, other.grid)
        return complex(np.vdot(self.values, other.values) * self.grid.step)

    def csv_rows(self):
        for w, v in zip(self.grid.omega, self.values):
            yield (w, v.real, v.imag)


@dataclasses.dataclass(frozen=True)
class FilterSpec:
    """Super-Gaussian amplitude filter of integer order.

    ``F_n(w) = exp[-2^(2n-1) ln2 ((w - center)/fwhm)^(2n)]`` so that the power
    transmission ``|F_n|^2`` is one half at ``center +- fwhm/2``.
    """

    order: int
    center: float
    fwhm: float

    def __post_init__(self):
        if int(self.order) != self.order or self.order < 1:
            raise ValueError(f"filter order must be a positive integer, got {self.order}")
        if not self.fwhm > 0:
            raise ValueError("filter FWHM must be positive")

    def __call__(self, omega) -> np.ndarray:
        x = (np.asarray(omega, dtype=float) - self.center) / self.fwhm
        n = int(self.order)
        return np.exp(-(2.0 ** (2 * n - 1)) * np.log(2.0) * x ** (2 * n))

    @property
    def amplitude_width(self) -> float:
        """Gaussian std of the order-1 amplitude profile with the same FWHM."""
        return self.fwhm / (2.0 * np.sqrt(np.log(2.0)))


# ----------------------------------------------------------------------------
# phase matching
# ----------------------------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class Matched:
    """Perfect phase matching, ``Phi = 1``."""

    def __call__(self, ws, wi):
        return np.ones(np.broadcast(ws, wi).shape, dtype=complex)


@dataclasses.dataclass(frozen=True)
class Sinc:
    """``sinc(dk L/2) exp(i dk L/2)`` for a uniformly poled crystal.

    ``mismatch(ws, wi)`` returns the wave-vector mismatch in rad/m.
    """

    crystal_length: float
    mismatch: Callable[[np.ndarray, np.ndarray], np.ndarray]

    def __call__(self, ws, wi):
        x = 0.5 * np.asarray(self.mismatch(ws, wi), dtype=float) * self.crystal_length
        return np.sinc(x / np.pi) * np.exp(1j * x)


MATCHED = Matched()


@dataclasses.dataclass(frozen=True, eq=False)
class JointSpectralAmplitude:
    signal_grid: FrequencyGrid
    idler_grid: FrequencyGrid
    values: np.ndarray
    phase_matching: object = MATCHED

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex)
        if values.shape != (self.signal_grid.points, self.idler_grid.points):
            raise GridError("JSA shape does not match its grids")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def weight(self) -> float:
        return self.signal_grid.step * self.idler_grid.step

    def norm(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2) * self.weight)

    def normalized(self) -> "JointSpectralAmplitude":
        n = self.norm()
        if n < 1e-15:
            raise DegenerateSpectrumError(f"JSA mass {n:.3e} too small to normalize")
        return dataclasses.replace(self, values=self.values / np.sqrt(n))

    @classmethod
    def from_function(cls, signal_grid, idler_grid, func, normalize=True):
        ws, wi = np.meshgrid(signal_grid.omega, idler_grid.omega, indexing="ij")
        jsa = cls(signal_grid, idler_grid, func(ws, wi))
        return jsa.normalized() if normalize else jsa


@dataclasses.dataclass(frozen=True, eq=False)
class SchmidtDecomposition:
    """Truncated Schmidt decomposition ``f = sum sqrt(l_n) psi_n(ws) phi_n(wi)``.

    ``residual`` is the weight of the discarded modes plus whatever the input
    lacked of unit norm, so ``lambdas.sum() + residual == 1``.
    """

    lambdas: np.ndarray
    signal_modes: tuple
    idler_modes: tuple
    cutoff: int
    residual: float

    def reconstruct(self) -> np.ndarray:
        psi = np.array([m.values for m in self.signal_modes])
        phi = np.array([m.values for m in self.idler_modes])
        return np.einsum("n,ns,ni->si", np.sqrt(self.lambdas), psi, phi)


@dataclasses.dataclass(frozen=True, eq=False)
class OverlapVector:
    coefficients: np.ndarray
    residual_norm: float

    @property
    def weights(self) -> np.ndarray:
        return np.abs(self.coefficients) ** 2

    @property
    def proportions(self) -> np.ndarray:
        """Mode proportions ``|c_i|^2 / sum_j |c_j|^2``."""
        w = self.weights
        return w / w.sum()


# ----------------------------------------------------------------------------
# operations
# ----------------------------------------------------------------------------

def gaussian_pump(mean: float, sigma: float, grid: FrequencyGrid) -> SpectralAmplitude:
    """Normalized Gaussian amplitude ``pi^-1/4 sigma^-1/2 exp(-(w-mean)^2 / 2 sigma^2)``."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    if not grid.covers(mean - 5.0 * sigma, mean + 5.0 * sigma):
        raise GridError("grid does not cover mean +- 5 sigma; Gaussian would be truncated")
    x = (grid.omega - mean) / sigma
    values = np.exp(-0.5 * x * x) / (np.pi ** 0.25 * np.sqrt(sigma))
    return SpectralAmplitude(grid, values).normalized()


def apply_filter(amp: SpectralAmplitude, filt: FilterSpec) -> SpectralAmplitude:
    """Pointwise product with the filter amplitude, renormalized."""
    filtered = SpectralAmplitude(amp.grid, amp.values * filt(amp.grid.omega))
    return filtered.normalized()


def pump_grid_for(signal_grid: FrequencyGrid, idler_grid: FrequencyGrid) -> FrequencyGrid:
    """Pump grid on which every ``ws + wi`` of the two marginal grids is a sample."""
    if not np.isclose(signal_grid.step, idler_grid.step, rtol=1e-12, atol=0.0):
        raise GridError("commensurate pump grid needs equal signal/idler steps")
    points = signal_grid.points + idler_grid.points - 1
    return FrequencyGrid(signal_grid.center + idler_grid.center,
                         0.5 * (points - 1) * signal_grid.step, points)


def _pump_on_sum(pump: SpectralAmplitude, signal_grid, idler_grid) -> np.ndarray:
    ws, wi = signal_grid.omega, idler_grid.omega
    lo, hi = ws[0] + wi[0], ws[-1] + wi[-1]
    pg = pump.grid
    if not pg.covers(lo + 1e-12 * abs(lo), hi - 1e-12 * abs(hi)):
        raise GridError("pump grid does not cover the ws + wi range of the JSA grids")
    if (np.isclose(pg.step, signal_grid.step, rtol=1e-12, atol=0.0)
            and np.isclose(pg.step, idler_grid.step, rtol=1e-12, atol=0.0)):
        shift = (lo - pg.omega[0]) / pg.step
        start = int(round(shift))
        if abs(shift - start) < 1e-6:
            idx = start + np.arange(len(ws))[:, None] + np.arange(len(wi))[None, :]
            return pump.values[idx]
    # incommensurate grids: interpolate
    spline_re = CubicSpline(pg.omega, pump.values.real)
    spline_im = CubicSpline(pg.omega, pump.values.imag)
    total = ws[:, None] + wi[None, :]
    return spline_re(total) + 1j * spline_im(total)


def default_marginal_grid(center: float, pump_sigma: float, filt: FilterSpec | None,
                          points: int = DEFAULT_GRID_POINTS) -> FrequencyGrid:
    """Signal or idler grid spanning six times the widest relevant width."""
    width = pump_sigma if filt is None else max(pump_sigma, filt.amplitude_width)
    return FrequencyGrid.around(center, width, points)


def build_jsa(pump: SpectralAmplitude, filter_s: FilterSpec | None, filter_i: FilterSpec | None,
              pm=MATCHED, signal_grid: FrequencyGrid | None = None,
              idler_grid: FrequencyGrid | None = None) -> JointSpectralAmplitude:
    """Filtered joint spectral amplitude ``alpha(ws+wi) Phi(ws,wi) F_s(ws) F_i(wi)``.

    When the marginal grids are omitted they are centered on the filter
    centers (or half the pump frequency) and span six widths.
    """
    if signal_grid is None or idler_grid is None:
        sigma = _rms_amplitude_width(pump)
        half = 0.5 * _centroid(pump)
        if signal_grid is None:
            c = half if filter_s is None else filter_s.center
            signal_grid = default_marginal_grid(c, sigma, filter_s)
        if idler_grid is None:
            c = half if filter_i is None else filter_i.center
            idler_grid = default_marginal_grid(c, sigma, filter_i)
    ws, wi = np.meshgrid(signal_grid.omega, idler_grid.omega, indexing="ij")
    values = _pump_on_sum(pump, signal_grid, idler_grid) * pm(ws, wi)
    if filter_s is not None:
        values = values * filter_s(signal_grid.omega)[:, None]
    if filter_i is not None:
        values = values * filter_i(idler_grid.omega)[None, :]
    return JointSpectralAmplitude(signal_grid, idler_grid, values, pm).normalized()


def _centroid(amp: SpectralAmplitude) -> float:
    p = np.abs(amp.values) ** 2
    return float(np.sum(p * amp.grid.omega) / np.sum(p))


def _rms_amplitude_width(amp: SpectralAmplitude) -> float:
    # for a Gaussian amplitude the intensity variance is sigma^2 / 2
    p = np.abs(amp.values) ** 2
    mean = np.sum(p * amp.grid.omega) / np.sum(p)
    var = np.sum(p * (amp.grid.omega - mean) ** 2) / np.sum(p)
    return float(np.sqrt(2.0 * var))


def schmidt_decompose(jsa: JointSpectralAmplitude, cutoff: int | None = None) -> SchmidtDecomposition:
    """Schmidt decomposition from the SVD of the quadrature-weighted JSA.

    With ``cutoff=None`` keeps up to six modes, stopping earlier once the
    cumulative weight reaches ``1 - 1e-6``.

    Each signal mode is phase-fixed so that its largest-magnitude sample is
    real and positive; the paired idler mode absorbs the conjugate phase.
    """
    ns, ni = jsa.values.shape
    full = min(ns, ni)
    if cutoff is not None and not 1 <= cutoff <= full:
        raise ValueError(f"cutoff must lie in [1, {full}], got {cutoff}")
    hs, hi = jsa.signal_grid.step, jsa.idler_grid.step
    try:
        u, s, vh = np.linalg.svd(jsa.values * np.sqrt(hs * hi), full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"SVD of the JSA failed: {exc}") from exc
    if not np.all(np.isfinite(s)):
        raise NumericError("SVD of the JSA returned non-finite singular values")
    lambdas = s ** 2
    total = float(lambdas.sum())
    if cutoff is None:
        cumulative = np.cumsum(lambdas)
        reached = int(np.searchsorted(cumulative, DEFAULT_MODE_MASS) + 1)
        cutoff = min(DEFAULT_MODE_CUTOFF, reached, full)

    signal, idler = [], []
    for n in range(cutoff):
        psi = u[:, n] / np.sqrt(hs)
        phi = vh[n, :] / np.sqrt(hi)
        k = int(np.argmax(np.abs(psi)))
        phase = psi[k] / abs(psi[k])
        fixed = psi / phase
        fixed[k] = abs(psi[k])  # exactly real, not merely to rounding
        signal.append(SpectralAmplitude(jsa.signal_grid, fixed))
        idler.append(SpectralAmplitude(jsa.idler_grid, phi * phase))
    kept = lambdas[:cutoff].copy()
    residual = 1.0 - float(kept.sum())
    if abs(total - 1.0) > 1e-9:
        # un-normalized input: report the missing mass relative to the input
        residual = total - float(kept.sum())
    kept.setflags(write=False)
    return SchmidtDecomposition(kept, tuple(signal), tuple(idler), cutoff, residual)


def overlap_coefficients(wcp: SpectralAmplitude, modes: Sequence[SpectralAmplitude]) -> OverlapVector:
    """``c_i = int conj(psi_i(w)) alpha(w) dw`` by grid quadrature."""
    for m in modes:
        _require_same_grid(wcp.grid, m.grid)
    coeffs = np.array([m.inner(wcp) for m in modes], dtype=complex)
    residual = wcp.norm() - float(np.sum(np.abs(coeffs) ** 2))
    return OverlapVector(coeffs, residual)


def gaussian_overlap(sigma1: float, sigma2: float, delta_omega: float, tau: float,
                     omega1: float = 0.0) -> complex:
    """Closed-form ``int conj(psi) phi exp(i w tau) dw`` for two Gaussian modes.

    ``psi`` is centered at ``omega1`` with width ``sigma1`` and ``phi`` at
    ``omega1 + delta_omega`` with width ``sigma2`` (amplitude profiles
    ``exp(-(w - w_k)^2 / 2 sigma_k^2)``). The modulus carries the width
    mismatch factor ``sqrt(2 s1 s2 / (s1^2 + s2^2))``, which is exactly one
    for equal widths.
    """
    if not (sigma1 > 0 and sigma2 > 0):
        raise ValueError("Gaussian widths must be positive")
    s1, s2 = sigma1 * sigma1, sigma2 * sigma2
    ssum = s1 + s2
    omega2 = omega1 + delta_omega
    magnitude = np.sqrt(2.0 * sigma1 * sigma2 / ssum) * np.exp(
        -(delta_omega ** 2 + s1 * s2 * tau ** 2) / (2.0 * ssum))
    phase = (s2 * omega1 + s1 * omega2) * tau / ssum
    return complex(magnitude * np.exp(1j * phase))


def purity(lambdas) -> float:
    """Spectral purity ``sum lambda_i^2``."""
    lam = np.asarray(lambdas, dtype=float)
    if np.any(lam < -1e-15) or lam.sum() > 1.0 + 1e-9:
        raise ValueError("Schmidt weights must be non-negative with sum <= 1")
    return float(np.sum(lam ** 2))
