"""Assemble sources, channel and objectives from a configuration."""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from . import spectra as sp
from .config import ScenarioConfig
from .errors import AsymMDIError
from .keyrate import (
    ChannelParams,
    ExperimentScale,
    KeyRateResult,
    ProtocolParams,
    Source,
    rate_at,
)
from .optimizer import SearchSpace, SwarmConfig
from .photon_stats import LocalDetector, RelayDetector

SCENARIOS = ("ww", "ss", "ws")

#: Fixed protocol vectors (nu, mu, PZ_nu, PZ_mu, PX_nu, PX_mu) for the SPDC
#: party (first entry) and the WCP party (second entry).
REFERENCE_FIXED_PARAMS = {
    1: ((0.0066, 0.4225, 0.0358, 0.8754, 0.0788, 0.0091),
        (0.0542, 0.5774, 0.0344, 0.8757, 0.0500, 0.0055)),
    2: ((0.0082, 0.2671, 0.0680, 0.7453, 0.1612, 0.0200),
        (0.0624, 0.4287, 0.0703, 0.7466, 0.1035, 0.0147)),
    3: ((0.0134, 0.1588, 0.1249, 0.5094, 0.3124, 0.0411),
        (0.0812, 0.3583, 0.1177, 0.5144, 0.2014, 0.0412)),
}


def reference_vector(set_id: int) -> np.ndarray:
    """12-entry W-S vector (WCP party A first) for a reference parameter set."""
    spdc, wcp = REFERENCE_FIXED_PARAMS[set_id]
    return np.array(wcp + spdc)


@dataclasses.dataclass(frozen=True, eq=False)
class SpectralSetup:
    jsa: sp.JointSpectralAmplitude
    schmidt: sp.SchmidtDecomposition
    wcp: sp.SpectralAmplitude
    overlaps: sp.OverlapVector

    @property
    def purity(self) -> float:
        return sp.purity(self.schmidt.lambdas)


def _fwhm(section: dict) -> float:
    if section["filter_fwhm_grad_s"] != "":
        return 1e9 * section["filter_fwhm_grad_s"]
    return sp.ghz_to_omega(section["filter_fwhm_ghz"])


def build_spectra(cfg: ScenarioConfig) -> SpectralSetup:
    s, w = cfg["source.spdc"], cfg["source.wcp"]
    omega_p = sp.wavelength_to_omega(s["pump_wavelength_nm"])
    sigma_p = sp.pulse_sigma_to_omega(s["pump_sigma_ps"])
    center = omega_p / 2.0
    filt = sp.FilterSpec(s["filter_order"], center, _fwhm(s))
    grid = sp.default_marginal_grid(center, sigma_p, filt, s["grid_points"])
    pump = sp.gaussian_pump(omega_p, sigma_p, sp.pump_grid_for(grid, grid))
    jsa = sp.build_jsa(pump, filt, filt, signal_grid=grid, idler_grid=grid)
    schmidt = sp.schmidt_decompose(jsa, min(s["schmidt_modes"], grid.points))

    omega_w = sp.wavelength_to_omega(w["center_wavelength_nm"])
    filt_w = sp.FilterSpec(w["filter_order"], omega_w, _fwhm(w))
    sigma_w = sp.pulse_sigma_to_omega(w["pulse_sigma_ps"])
    laser = sp.SpectralAmplitude(
        grid, np.exp(-0.5 * ((grid.omega - omega_w) / sigma_w) ** 2)).normalized()
    wcp = sp.apply_filter(laser, filt_w)
    overlaps = sp.overlap_coefficients(wcp, schmidt.signal_modes)
    return SpectralSetup(jsa, schmidt, wcp, overlaps)


@dataclasses.dataclass(frozen=True, eq=False)
class Scenario:
    """Everything needed to evaluate key rates for the three source pairings."""

    wcp: Source
    spdc: Source
    channel: ChannelParams
    scale: ExperimentScale
    alice_fraction: float = 0.5

    def sources(self, kind: str) -> tuple[Source, Source]:
        """Party A and party B sources; in the mixed pairing A holds the WCP."""
        if kind == "ww":
            return self.wcp, self.wcp
        if kind == "ss":
            return self.spdc, self.spdc
        if kind == "ws":
            return self.wcp, self.spdc
        raise ValueError(f"unknown scenario {kind!r}; expected one of {SCENARIOS}")

    @staticmethod
    def space(kind: str) -> SearchSpace:
        return SearchSpace.protocol(2 if kind == "ws" else 1)

    def channel_at(self, distance: float) -> ChannelParams:
        return self.channel.at_distance(distance, self.alice_fraction)

    def evaluate(self, kind: str, x, distance: float,
                 scale: ExperimentScale | None = None) -> KeyRateResult:
        src_a, src_b = self.sources(kind)
        return rate_at(src_a, src_b, self.channel_at(distance),
                       ProtocolParams.from_vector(x), scale or self.scale)

    def objective_at(self, kind: str, scale: ExperimentScale | None = None):
        """``distance -> (x -> raw rate)``; model failures map to ``-inf``."""
        def at(distance: float):
            def f(x):
                try:
                    return self.evaluate(kind, x, distance, scale).raw_rate
                except (AsymMDIError, ValueError):
                    return -math.inf
            return f
        return at


def swarm_config(cfg: ScenarioConfig, restart: bool = False) -> SwarmConfig:
    o = cfg["optimizer"]
    return SwarmConfig(
        particles=o["restart_particles"] if restart else o["particles"],
        iterations=o["restart_iterations"] if restart else o["iterations"],
        inertia=o["inertia"], cognitive=o["cognitive"], social=o["social"], seed=o["seed"])


_SPECTRA_CACHE: dict[str, SpectralSetup] = {}


def _cached_spectra(cfg: ScenarioConfig) -> SpectralSetup:
    key = "\n".join(l for l in cfg.resolved_lines() if l.startswith("source."))
    if key not in _SPECTRA_CACHE:
        _SPECTRA_CACHE[key] = build_spectra(cfg)
    return _SPECTRA_CACHE[key]


def build_scenario(cfg: ScenarioConfig, spectra: SpectralSetup | None = None) -> Scenario:
    spectra = spectra or _cached_spectra(cfg)
    loc = cfg["local"]
    local = LocalDetector(loc["efficiency"], loc["dark_count_prob"])
    lam = spectra.schmidt.lambdas
    # shared basis: the SPDC signal modes plus the WCP's orthogonal complement
    spdc = Source.spdc(np.append(lam, 0.0), local)
    weights = spectra.overlaps.weights
    wcp = Source.wcp(np.append(weights, max(0.0, 1.0 - weights.sum())))
    ch = cfg["channel"]
    channel = ChannelParams(
        attenuation_db_km=ch["attenuation_db_per_km"],
        relay=RelayDetector(ch["relay_efficiency"], ch["relay_dark_count_prob"]),
        misalignment=ch["misalignment"])
    fin = cfg["finite"]
    scale = ExperimentScale(fin["n_tot"], fin["xi"], fin["n_max"])
    return Scenario(wcp, spdc, channel, scale, ch["alice_fraction"])
