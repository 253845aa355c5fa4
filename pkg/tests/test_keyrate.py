import itertools
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy import stats

from asym_mdi import decoy_finite as df
from asym_mdi import keyrate as kr
from asym_mdi.optimizer import DescentConfig, coordinate_descent
from asym_mdi.photon_stats import LocalDetector, RelayDetector
from asym_mdi.relay import PolarizationBSM, modal_visibility, single_pair_error, source_yields
from asym_mdi.scenario import reference_vector

PARTY = kr.PartyParams(nu=0.1, mu=0.5, pz_mu=0.6, pz_nu=0.1, px_mu=0.05, px_nu=0.15)
PARAMS = kr.ProtocolParams(PARTY, PARTY)


# ---------------------------------------------------------------------------
# surrogate relay
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("basis", df.BASES)
def test_ideal_single_pair_success_is_one_half(basis):
    gain, err = PolarizationBSM(0.0, 0.0).tables(basis, 4)
    assert gain[1, 1] == 0.5
    assert err[1, 1] == 0.0
    # lossless single-photon inputs through the thinning layer
    assert source_yields(gain, 1.0, 1.0, 3)[1, 1] == 0.5


@pytest.mark.parametrize("basis", df.BASES)
@pytest.mark.parametrize("d", [1e-6, 1e-3, 0.2])
def test_vacuum_pair_sees_only_dark_coincidences(basis, d):
    gain, err = PolarizationBSM(d, 0.015).tables(basis, 2)
    assert gain[0, 0] == pytest.approx(4 * d * d * (1 - d) ** 2, rel=1e-14)
    assert err[0, 0] == pytest.approx(0.5 * gain[0, 0], rel=1e-14)


def test_simulated_vacuum_pairs(scenario):
    chan = kr.ChannelParams(10.0, 10.0, relay=RelayDetector(0.6, 1e-4))
    d = 1e-4
    dark = 4 * d * d * (1 - d) ** 2
    wcp = kr.Source.wcp([1.0, 0.0])
    spdc = kr.Source.spdc([0.8, 0.2], LocalDetector(0.9, 1e-6))
    scale = kr.ExperimentScale(1e12)
    for src, herald in ((wcp, 1.0), (spdc, 1e-6)):
        obs = kr.simulate_observables(src, wcp, chan, PARAMS, scale)
        for basis in df.BASES:
            r = obs.get(basis, "vac", "vac")
            assert r.gain == pytest.approx(herald * dark, rel=1e-9)
            assert r.qber == pytest.approx(0.5, rel=1e-12)


def test_single_pair_error_limits():
    assert single_pair_error(0.0, 1.0) == 0.0
    assert single_pair_error(0.015, 1.0) == 0.015
    assert single_pair_error(0.2, 0.0) == 0.5


@given(d=st.floats(0, 0.1), e_d=st.floats(0, 0.5), v=st.floats(0, 1))
@settings(max_examples=30)
def test_tables_are_probabilities(d, e_d, v):
    for basis in df.BASES:
        gain, err = PolarizationBSM(d, e_d, v).tables(basis, 6)
        assert np.all(gain >= -1e-15) and np.all(gain <= 1 + 1e-12)
        assert np.all(err >= -1e-15) and np.all(err <= gain + 1e-15)


def test_source_yields_match_explicit_thinning():
    gain, _ = PolarizationBSM(1e-6, 0.015).tables("Z", 5)
    ys = source_yields(gain, 0.3, 0.7, 5)
    m, n = 3, 2
    expected = sum(stats.binom.pmf(k, m, 0.3) * stats.binom.pmf(l, n, 0.7) * gain[k, l]
                   for k in range(m + 1) for l in range(n + 1))
    assert ys[m, n] == pytest.approx(expected, rel=1e-13)


def test_modal_visibility():
    w = np.array([0.7, 0.2, 0.1])
    assert modal_visibility(w, w) == pytest.approx(1.0, abs=1e-15)
    assert modal_visibility([1, 0], [0, 1]) == 0.0
    assert modal_visibility(w, w, overlaps=[1, 0, 0]) == pytest.approx(0.49, rel=1e-14)
    with pytest.raises(ValueError):
        modal_visibility([1, 0], [1, 0, 0])


def test_relay_validation():
    with pytest.raises(ValueError):
        PolarizationBSM(1.0, 0.0)
    with pytest.raises(ValueError):
        PolarizationBSM(0.0, 0.6)
    with pytest.raises(ValueError):
        PolarizationBSM(0.0, 0.0).tables("Y", 2)


# ---------------------------------------------------------------------------
# forward simulation
# ---------------------------------------------------------------------------

def test_planted_hook_reproduces_double_sums():
    rng = np.random.default_rng(3)
    n = 6
    y, e = rng.random((n + 1, n + 1)), 0.5 * rng.random((n + 1, n + 1))
    src_a = kr.Source.wcp()
    src_b = kr.Source.spdc([0.7, 0.2, 0.1])
    obs = kr.simulate_observables(src_a, src_b, kr.ChannelParams(), PARAMS,
                                  kr.ExperimentScale(1e10), planted=(y, e))
    mix_a = kr.source_mixture(src_a, PARTY, n)
    mix_b = kr.source_mixture(src_b, PARTY, n)
    for basis, la, lb in itertools.product(df.BASES, df.INTENSITIES, df.INTENSITIES):
        outer = np.outer(mix_a.probs[la], mix_b.probs[lb])
        r = obs.get(basis, la, lb)
        q = float(np.sum(outer * y))
        slack = mix_a.mass[la] * mix_b.mass[lb] - outer.sum()
        assert q - 1e-15 <= r.gain <= q + slack + 1e-15
        assert r.pulses == 1e10 * PARTY.selection(basis, la) * PARTY.selection(basis, lb)


def test_relay_route_matches_emitted_yields():
    # dual route: post-channel PNDs against the relay table, and emitted PNDs
    # against binomially thinned yields
    src = kr.Source.wcp()
    chan = kr.ChannelParams(5.0, 15.0, misalignment=0.015)
    obs = kr.simulate_observables(src, src, chan, PARAMS, kr.ExperimentScale(1e12))
    n = 30
    for basis in df.BASES:
        gain, err = PolarizationBSM(chan.relay.d_s, chan.misalignment).tables(basis, n)
        y = source_yields(gain, chan.eta_a, chan.eta_b, n)
        ye = source_yields(err, chan.eta_a, chan.eta_b, n)
        for la, lb in itertools.product(df.INTENSITIES, df.INTENSITIES):
            pa = src.pnd(PARTY.intensity(la), 1.0, n).head(n)
            pb = src.pnd(PARTY.intensity(lb), 1.0, n).head(n)
            r = obs.get(basis, la, lb)
            assert r.gain == pytest.approx(float(pa @ y @ pb), rel=1e-9)
            assert r.errors / r.pulses == pytest.approx(float(pa @ ye @ pb), rel=1e-9)


# ---------------------------------------------------------------------------
# key rate
# ---------------------------------------------------------------------------

def test_binary_entropy():
    assert kr.binary_entropy(0.5) == 1.0
    assert kr.binary_entropy(0.0) == 0.0
    assert kr.binary_entropy(1.0) == 0.0
    direct = -0.11 * math.log(0.11) / math.log(2) - 0.89 * math.log(0.89) / math.log(2)
    assert kr.binary_entropy(0.11) == pytest.approx(direct, rel=1e-15)
    assert kr.binary_entropy(0.11) == pytest.approx(0.4999, abs=1e-3)
    for bad in (-1e-9, 1.0 + 1e-9):
        with pytest.raises(ValueError):
            kr.binary_entropy(bad)


@given(x=st.floats(0, 1))
def test_binary_entropy_symmetry(x):
    assume(1 - (1 - x) == x)  # the complement must be exact in floating point
    assert kr.binary_entropy(x) == pytest.approx(kr.binary_entropy(1 - x), rel=1e-9, abs=1e-15)


def _signal_obs(q, e):
    n = 1e12
    return df.DecoyObservations((df.Observation("Z", "mu", "mu", n, q * n, e * q * n),))


def test_privacy_term_vanishes_at_half_error():
    obs = _signal_obs(1e-3, 0.01)
    bz = df.YieldBounds(0.5, 0.0, 0.0, basis="Z")
    bx = df.YieldBounds(0.5, 0.25, 0.5, basis="X")
    res = kr.key_rate(obs, bz, bx, PARAMS, 0.3, 0.3)
    assert res.privacy_entropy == 1.0
    assert res.raw_rate <= 0 and res.rate == 0.0
    above = kr.key_rate(obs, bz, df.YieldBounds(0.5, 0.3, 0.6, basis="X"), PARAMS, 0.3, 0.3)
    assert above.rate == 0.0 and "1/2" in above.diagnostic


def test_noiseless_limit():
    q, p1 = 2e-3, 0.3
    obs = _signal_obs(q, 0.0)
    bz = df.YieldBounds(q / (p1 * p1), 0.0, 0.0, basis="Z")
    bx = df.YieldBounds(q / (p1 * p1), 0.0, 0.0, basis="X")
    res = kr.key_rate(obs, bz, bx, PARAMS, p1, p1)
    assert res.rate == pytest.approx(PARTY.pz_mu ** 2 * q, rel=1e-14)


def test_degenerate_bounds_give_zero():
    obs = _signal_obs(1e-3, 0.0)
    bz = df.YieldBounds(0.0, 0.0, 1.0, degenerate=True, basis="Z")
    bx = df.YieldBounds(0.4, 0.0, 0.0, basis="X")
    assert kr.key_rate(obs, bz, bx, PARAMS, 0.3, 0.3).rate == 0.0


@given(seed=st.integers(0, 2 ** 32 - 1), distance=st.floats(0, 250))
@settings(max_examples=12, deadline=None)
def test_rate_is_never_negative(scenario, seed, distance):
    rng = np.random.default_rng(seed)
    for kind in ("ww", "ss", "ws"):
        space = scenario.space(kind)
        x = space.repair(space.lower + rng.random(space.dim) * (space.upper - space.lower))
        res = scenario.evaluate(kind, x, distance)
        assert res.rate >= 0.0
        assert res.rate == 0.0 or res.rate == res.raw_rate


@pytest.fixture(scope="module")
def tuned(scenario):
    """Parameters refined at 0 km for each pairing."""
    out = {}
    for kind, x0 in (("ww", reference_vector(1)[:6]), ("ss", reference_vector(1)[6:]),
                     ("ws", reference_vector(1))):
        f = scenario.objective_at(kind)(0.0)
        out[kind] = coordinate_descent(f, scenario.space(kind), x0,
                                       DescentConfig(levels=3, max_passes=5)).x
    return out


@pytest.mark.parametrize("kind", ["ww", "ss", "ws"])
def test_rate_is_monotone_in_loss(scenario, tuned, kind):
    rates = [scenario.evaluate(kind, tuned[kind], d).rate for d in (0, 25, 50, 75, 100)]
    assert rates[0] > 0
    assert all(b <= a + 1e-12 for a, b in zip(rates, rates[1:]))


@pytest.mark.parametrize("kind", ["ww", "ss", "ws"])
def test_finite_size_penalty(scenario, tuned, kind):
    x = tuned[kind]
    r9 = scenario.evaluate(kind, x, 20.0, kr.ExperimentScale(1e9))
    r12 = scenario.evaluate(kind, x, 20.0, kr.ExperimentScale(1e12))
    asym = scenario.evaluate(kind, x, 20.0, kr.ExperimentScale(1e12, asymptotic=True))
    assert r9.raw_rate <= r12.raw_rate <= asym.raw_rate
    assert r9.y11_l <= r12.y11_l <= asym.y11_l + 1e-15


def test_rate_at_is_deterministic(scenario, tuned):
    first = scenario.evaluate("ws", tuned["ws"], 30.0)
    assert scenario.evaluate("ws", tuned["ws"], 30.0) == first


# ---------------------------------------------------------------------------
# parameter types
# ---------------------------------------------------------------------------

def test_channel_split_and_transmittance():
    chan = kr.ChannelParams().at_distance(100.0, 0.3)
    assert (chan.distance_a, chan.distance_b) == (30.0, 70.0)
    assert chan.eta_a == pytest.approx(10 ** (-0.6) * 0.6, rel=1e-14)
    assert kr.ChannelParams().transmittance(0.0) == 1.0
    with pytest.raises(ValueError):
        kr.ChannelParams(distance_a=-1.0)
    with pytest.raises(ValueError):
        kr.ChannelParams(misalignment=0.7)


def test_party_params_invariants():
    with pytest.raises(ValueError):
        kr.PartyParams(0.5, 0.1, 0.2, 0.2, 0.2, 0.2)
    with pytest.raises(ValueError):
        kr.PartyParams(0.1, 0.5, 0.5, 0.3, 0.2, 0.1)
    assert PARTY.p_vac == pytest.approx(0.1)
    assert PARTY.selection("Z", "vac") == PARTY.selection("X", "vac") == pytest.approx(0.05)
    assert kr.PartyParams.from_tuple(PARTY.as_tuple()) == PARTY


def test_protocol_vectors():
    v = reference_vector(2)
    p = kr.ProtocolParams.from_vector(v)
    assert np.array_equal(p.to_vector(), v)
    shared = kr.ProtocolParams.from_vector(v[:6])
    assert shared.a == shared.b
    with pytest.raises(ValueError):
        kr.ProtocolParams.from_vector(v[:5])


def test_experiment_scale_validation():
    with pytest.raises(ValueError):
        kr.ExperimentScale(0.5)
    with pytest.raises(ValueError):
        kr.ExperimentScale(1e12, xi=1.0)
