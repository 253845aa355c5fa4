"""Forward simulation of decoy observables and the finite-size GLLP key rate."""

from __future__ import annotations

import dataclasses
import itertools
import math
from typing import Sequence

import numpy as np

from . import decoy_finite as df
from .photon_stats import (
    LocalDetector,
    ModalIntensities,
    PhotonNumberDistribution,
    RelayDetector,
    SourceKind,
    heralded_pnd_after_channel,
    spdc_mode_intensities,
    wcp_pnd_after_channel,
)
from .relay import PolarizationBSM, modal_visibility

EC_INEFFICIENCY = 1.16
_PND_CACHE_SIZE = 4096


@dataclasses.dataclass(frozen=True)
class ChannelParams:
    distance_a: float = 0.0
    distance_b: float = 0.0
    attenuation_db_km: float = 0.2
    relay: RelayDetector = RelayDetector()
    misalignment: float = 0.015

    def __post_init__(self):
        if self.distance_a < 0 or self.distance_b < 0:
            raise ValueError("distances must be non-negative")
        if self.attenuation_db_km < 0:
            raise ValueError("attenuation must be non-negative")
        if not 0.0 <= self.misalignment <= 0.5:
            raise ValueError("misalignment must lie in [0, 0.5]")

    def transmittance(self, distance: float) -> float:
        return 10.0 ** (-self.attenuation_db_km * distance / 10.0)

    @property
    def eta_a(self) -> float:
        """Channel transmittance times relay detector efficiency on Alice's side."""
        return self.transmittance(self.distance_a) * self.relay.eta_s

    @property
    def eta_b(self) -> float:
        return self.transmittance(self.distance_b) * self.relay.eta_s

    def at_distance(self, total_km: float, split: float = 0.5) -> "ChannelParams":
        """Copy with ``total_km`` shared as ``split : 1 - split`` between Alice and Bob."""
        return dataclasses.replace(self, distance_a=split * total_km,
                                   distance_b=(1.0 - split) * total_km)


@dataclasses.dataclass(frozen=True)
class PartyParams:
    nu: float
    mu: float
    pz_mu: float
    pz_nu: float
    px_mu: float
    px_nu: float

    def __post_init__(self):
        probs = (self.pz_mu, self.pz_nu, self.px_mu, self.px_nu)
        if self.nu < 0 or self.mu < 0:
            raise ValueError("intensities must be non-negative")
        if self.nu > self.mu:
            raise ValueError(f"decoy intensity {self.nu} exceeds signal intensity {self.mu}")
        if any(p < 0 or p > 1 for p in probs):
            raise ValueError("selection probabilities must lie in [0, 1]")
        if sum(probs) > 1.0 + 1e-12:
            raise ValueError(f"selection probabilities sum to {sum(probs)} > 1")

    @property
    def p_vac(self) -> float:
        return max(0.0, 1.0 - (self.pz_mu + self.pz_nu + self.px_mu + self.px_nu))

    def intensity(self, label: str) -> float:
        return {"mu": self.mu, "nu": self.nu, "vac": 0.0}[label]

    def selection(self, basis: str, label: str) -> float:
        """Probability of choosing ``label`` in ``basis``; vacuum counts for both bases."""
        if label == "vac":
            return 0.5 * self.p_vac
        return {("Z", "mu"): self.pz_mu, ("Z", "nu"): self.pz_nu,
                ("X", "mu"): self.px_mu, ("X", "nu"): self.px_nu}[(basis, label)]

    def as_tuple(self) -> tuple:
        return (self.nu, self.mu, self.pz_nu, self.pz_mu, self.px_nu, self.px_mu)

    @classmethod
    def from_tuple(cls, values: Sequence[float]) -> "PartyParams":
        """Inverse of :meth:`as_tuple`, ordered ``nu, mu, PZ_nu, PZ_mu, PX_nu, PX_mu``."""
        nu, mu, pz_nu, pz_mu, px_nu, px_mu = (float(v) for v in values)
        return cls(nu=nu, mu=mu, pz_mu=pz_mu, pz_nu=pz_nu, px_mu=px_mu, px_nu=px_nu)


@dataclasses.dataclass(frozen=True)
class ProtocolParams:
    a: PartyParams
    b: PartyParams

    def to_vector(self) -> np.ndarray:
        return np.array(self.a.as_tuple() + self.b.as_tuple())

    @classmethod
    def from_vector(cls, x: Sequence[float]) -> "ProtocolParams":
        x = list(x)
        if len(x) == 6:
            party = PartyParams.from_tuple(x)
            return cls(party, party)
        if len(x) != 12:
            raise ValueError("protocol vectors have 6 (shared) or 12 entries")
        return cls(PartyParams.from_tuple(x[:6]), PartyParams.from_tuple(x[6:]))


@dataclasses.dataclass(frozen=True)
class ExperimentScale:
    """Data size and statistical settings; ``asymptotic`` drops all fluctuation terms."""

    n_tot: float = 1e12
    xi: float = df.DEFAULT_XI
    n_max: int = df.DEFAULT_N_MAX
    asymptotic: bool = False

    def __post_init__(self):
        if not self.n_tot >= 1:
            raise ValueError("N_tot must be at least 1")
        if not 0.0 < self.xi < 1.0:
            raise ValueError("xi must lie in (0, 1)")
        if self.n_max < 1:
            raise ValueError("N_max must be at least 1")


@dataclasses.dataclass(frozen=True, eq=False)
class Source:
    """A photon source described by its modal weights over a shared mode basis.

    For SPDC the weights are Schmidt eigenvalues; for WCP they are the
    overlap weights ``|c_i|^2`` with the complement weight last.
    """

    kind: SourceKind
    weights: np.ndarray
    local: LocalDetector | None = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or np.any(w < 0) or w.sum() <= 0:
            raise ValueError("modal weights must be a non-negative, non-zero vector")
        object.__setattr__(self, "weights", w / w.sum())
        if self.kind is SourceKind.SPDC and self.local is None:
            object.__setattr__(self, "local", LocalDetector())
        object.__setattr__(self, "_cache", {})

    @classmethod
    def wcp(cls, weights=(1.0,)) -> "Source":
        return cls(SourceKind.WCP, np.asarray(weights, dtype=float))

    @classmethod
    def spdc(cls, lambdas, local: LocalDetector | None = None) -> "Source":
        return cls(SourceKind.SPDC, np.asarray(lambdas, dtype=float), local)

    def modal(self, intensity: float) -> ModalIntensities:
        if self.kind is SourceKind.SPDC:
            return spdc_mode_intensities(self.weights, intensity)
        return ModalIntensities(intensity * self.weights, SourceKind.WCP)

    def pnd(self, intensity: float, eta: float = 1.0,
            k_max: int | None = None) -> PhotonNumberDistribution:
        """Photon-number distribution after transmittance ``eta``.

        SPDC distributions are joint with the herald and carry its probability
        as their mass.
        """
        key = (float(intensity), float(eta), k_max)
        cached = self._cache.get(key)
        if cached is not None:
            return cached
        modal = self.modal(intensity)
        if self.kind is SourceKind.SPDC:
            pnd = heralded_pnd_after_channel(modal, self.local, eta, k_max).total
        else:
            pnd = wcp_pnd_after_channel(modal, eta, k_max)
        if len(self._cache) >= _PND_CACHE_SIZE:
            self._cache.clear()
        self._cache[key] = pnd
        return pnd


def visibility_between(src_a: Source, src_b: Source) -> float:
    return modal_visibility(src_a.weights, src_b.weights)


def _padded(pnds, size):
    return {k: d.head(size - 1) for k, d in pnds.items()}


def source_mixture(src: Source, party: PartyParams, n_max: int) -> df.PhotonMixture:
    """Emitted photon-number mixture per intensity label."""
    return df.PhotonMixture.from_pnds(
        {lab: src.pnd(party.intensity(lab)) for lab in df.INTENSITIES}, n_max)


def simulate_observables(src_a: Source, src_b: Source, chan: ChannelParams,
                         params: ProtocolParams, scale: ExperimentScale,
                         planted: tuple[np.ndarray, np.ndarray] | None = None,
                         ) -> df.DecoyObservations:
    """Expected counts for every basis and intensity pair.

    With ``planted = (Y, e)`` the relay model is bypassed and the tables are
    taken as emitted-photon-number yields and error rates; photon numbers
    beyond the table click with error 1/2.
    """
    pulses = {}
    for basis, la, lb in itertools.product(df.BASES, df.INTENSITIES, df.INTENSITIES):
        pulses[(basis, la, lb)] = (scale.n_tot * params.a.selection(basis, la)
                                   * params.b.selection(basis, lb))
    if planted is not None:
        n = planted[0].shape[0] - 1
        return df.planted_observations(planted[0], planted[1],
                                       source_mixture(src_a, params.a, n),
                                       source_mixture(src_b, params.b, n), pulses)

    arr_a = {lab: src_a.pnd(params.a.intensity(lab), chan.eta_a) for lab in df.INTENSITIES}
    arr_b = {lab: src_b.pnd(params.b.intensity(lab), chan.eta_b) for lab in df.INTENSITIES}
    size = max(d.n_max for d in itertools.chain(arr_a.values(), arr_b.values())) + 1
    pa, pb = _padded(arr_a, size), _padded(arr_b, size)
    bsm = PolarizationBSM(chan.relay.d_s, chan.misalignment, visibility_between(src_a, src_b))
    records = []
    for basis in df.BASES:
        gain, err = bsm.tables(basis, size - 1)
        for la, lb in itertools.product(df.INTENSITIES, df.INTENSITIES):
            q = float(pa[la] @ gain @ pb[lb])
            eq = float(pa[la] @ err @ pb[lb])
            n = pulses[(basis, la, lb)]
            records.append(df.Observation(basis, la, lb, n, q * n, min(eq, q) * n))
    return df.DecoyObservations(tuple(records))


def binary_entropy(x: float) -> float:
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"binary entropy argument {x} outside [0, 1]")
    if x in (0.0, 1.0):
        return 0.0
    return float(-x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x))


@dataclasses.dataclass(frozen=True)
class KeyRateResult:
    rate: float
    raw_rate: float
    q_z: float
    e_z: float
    y11_l: float
    e11_u: float
    privacy_entropy: float
    ec_entropy: float
    diagnostic: str = ""


def key_rate(obs: df.DecoyObservations, bounds_z: df.YieldBounds, bounds_x: df.YieldBounds,
             params: ProtocolParams, p1_a: float, p1_b: float,
             f_ec: float = EC_INEFFICIENCY) -> KeyRateResult:
    """GLLP rate per pulse with ``Y11`` from the Z basis and ``e11`` from the X basis."""
    signal = obs.get("Z", "mu", "mu")
    q_z = signal.gain if signal is not None else 0.0
    e_z = min(signal.qber, 1.0) if signal is not None else 0.0
    h_ec = binary_entropy(e_z)
    e11 = bounds_x.e11_u
    diagnostic = ""
    if bounds_z.degenerate or bounds_x.degenerate:
        diagnostic = "degenerate single-photon bounds"
    if e11 > 0.5:
        diagnostic = "e11 above 1/2"
        h_priv = 1.0
    else:
        h_priv = binary_entropy(e11)
    y11 = 0.0 if bounds_x.degenerate else bounds_z.y11_l
    raw = params.a.pz_mu * params.b.pz_mu * (
        p1_a * p1_b * y11 * (1.0 - h_priv) - q_z * f_ec * h_ec)
    rate = raw if raw > 0 and e11 <= 0.5 and not bounds_z.degenerate else 0.0
    return KeyRateResult(rate, raw, q_z, e_z, bounds_z.y11_l, e11, h_priv, h_ec, diagnostic)


def rate_at(src_a: Source, src_b: Source, chan: ChannelParams, params: ProtocolParams,
            scale: ExperimentScale) -> KeyRateResult:
    """Simulate, bound and evaluate the key rate at one operating point."""
    obs = simulate_observables(src_a, src_b, chan, params, scale)
    mix_a = source_mixture(src_a, params.a, scale.n_max)
    mix_b = source_mixture(src_b, params.b, scale.n_max)
    xi = None if scale.asymptotic else scale.xi
    bounds_z = df.lp_yield_bounds(obs, mix_a, mix_b, xi, scale.n_max, "Z", with_errors=False)
    bounds_x = df.lp_yield_bounds(obs, mix_a, mix_b, xi, scale.n_max, "X")
    return key_rate(obs, bounds_z, bounds_x, params,
                    float(mix_a.probs["mu"][1]), float(mix_b.probs["mu"][1]))
