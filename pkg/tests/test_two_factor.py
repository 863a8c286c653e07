import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cirschemes.errors import DomainError, UsageError
from cirschemes.one_factor import exact_cir_step, simulate_paths
from cirschemes.oracles import two_factor_mean_ode, two_factor_scheme_mean
from cirschemes.params import CirParams, GridSpec, SchemeSpec, TwoFactorParams, validate_two_factor
from cirschemes.two_factor import (
    PairState,
    simulate_pair_paths,
    two_factor_cross_step,
    two_factor_split_step,
    two_factor_squared_step,
)

SPLIT = SchemeSpec("tf-split")
SQUARED = SchemeSpec("tf-squared")
CROSS = SchemeSpec("tf-cross")


def params(**kw):
    args = dict(k=2, l=1, lambda11=1, lambda12=1, lambda21=1, lambda22=1, sigma1=1, sigma2=1, x10=1, x20=1)
    args.update(kw)
    return TwoFactorParams(**args)


class TestSplitStep:
    def test_zero_noise_coupled(self):
        s = two_factor_split_step(params(), 0.1, PairState(0, 1.0, 1.0), np.zeros(8), np.zeros(4))
        assert s.y1 == pytest.approx(1.1 * math.exp(-0.1), rel=1e-13)
        assert s.y1 == pytest.approx(0.99532, abs=5e-6)
        assert s.t_index == 1

    def test_conditional_mean(self):
        # mean of the exact sub-step: v e^{-lambda D} + (k2 / lambda)(1 - e^{-lambda D})
        target = 1.1 * math.exp(-0.1) + 2 * (1 - math.exp(-0.1))
        assert target == pytest.approx(1.18565, abs=5e-6)
        n = 10**6
        rng = np.random.default_rng(4)
        y = np.ones(n)
        s = two_factor_split_step(params(), 0.1, PairState(0, y, y), rng.standard_normal((n, 8)), rng.standard_normal((n, 4)))
        assert abs(s.y1.mean() - target) < 3 * s.y1.std() / math.sqrt(n)

    def test_decoupled_zero_noise(self):
        p = params(sigma1=1.1, lambda11=0.7, lambda12=0, lambda22=0)
        s = two_factor_split_step(p, 0.1, PairState(0, 3.0, 1.0), np.zeros(6), np.zeros(4))
        assert s.y1 == pytest.approx((3.0 + 0.1 * 0.185) * math.exp(-0.07), rel=1e-12)

    def test_delegates_to_exact_step(self):
        p = params()
        rng = np.random.default_rng(0)
        z1, z2 = rng.standard_normal(8), rng.standard_normal(4)
        s = two_factor_split_step(p, 0.2, PairState(0, 0.0, 0.0), z1, z2)
        assert s.y1 == exact_cir_step(2.0, 1.0, 1.0, 0.0, 0.2, z1)
        assert s.y2 == exact_cir_step(1.0, 1.0, 1.0, 0.0, 0.2, z2)
        assert s.y1 > 0 and s.y2 > 0


class TestSquaredStep:
    def test_zero_noise_decoupled(self):
        p = params(lambda12=0, lambda22=0)
        s, ((r1, z1), _) = two_factor_squared_step(p, 0.1, PairState(0, 4.0, 1.0), 0.0, 0.0)
        assert s.y1 == pytest.approx(3.775, rel=1e-13)
        assert r1 == pytest.approx(3.775, rel=1e-13)
        assert z1 > 0

    def test_boundary(self):
        s, _ = two_factor_squared_step(params(), 0.1, PairState(0, 0.0, 0.0), 0.0, 0.0)
        assert s.y1 == pytest.approx(0.1 * (2 - 0.25), rel=1e-13)
        assert s.y2 == pytest.approx(0.1 * (1 - 0.25), rel=1e-13)

    def test_negative_radicand(self):
        with pytest.raises(DomainError):
            two_factor_squared_step(params(sigma1=3), 0.1, PairState(0, 0.0, 0.0), 0.0, 0.0)


class TestCrossStep:
    def test_zero_noise(self):
        s = two_factor_cross_step(params(), 0.1, PairState(0, 1.0, 1.0), 0.0, 0.0)
        assert s.y1 == pytest.approx(1.175, rel=1e-13)

    def test_second_factor_zero(self):
        p = params(lambda12=0.4)
        s = two_factor_cross_step(p, 0.1, PairState(0, 3.0, 0.0), 0.7, -0.2)
        assert s.y1 == pytest.approx(3.0 * 0.9 + 0.1 * 2, rel=1e-13)

    def test_large_second_factor_fails(self):
        p = params(lambda12=0)
        with pytest.raises(DomainError, match="radicand"):
            two_factor_cross_step(p, 0.1, PairState(0, 0.0, 100.0), 0.0, 0.0)

    def test_batch_marks_failures(self):
        p = params(lambda12=0, lambda22=0, x10=0.0, x20=100.0)
        batch = simulate_pair_paths(p, GridSpec(1.0, 10), CROSS, 1, np.arange(4))
        assert batch.failed.all()
        assert (batch.failed_step == 0).all()
        assert np.isnan(batch.values[:, 1:]).all()


def test_parallel_update_is_order_independent():
    p = params(lambda12=0.3, lambda22=0.6, sigma1=1.1)
    rng = np.random.default_rng(2)
    y1, y2 = rng.uniform(0, 3, 50), rng.uniform(0, 3, 50)
    z1, z2 = rng.standard_normal((50, 6)), rng.standard_normal((50, 4))
    ab = two_factor_split_step(p, 0.1, PairState(0, y1, y2), z1, z2)
    # the mirrored problem evaluates coordinate 2 first
    q = params(k=1, l=2, lambda11=1, lambda12=0.6, lambda21=1, lambda22=0.3, sigma1=1, sigma2=1.1)
    ba = two_factor_split_step(q, 0.1, PairState(0, y2, y1), z2, z1)
    assert np.array_equal(ab.y1, ba.y2) and np.array_equal(ab.y2, ba.y1)
    dW1, dW2 = rng.normal(0, 0.3, 50), rng.normal(0, 0.3, 50)
    s1, _ = two_factor_squared_step(p, 0.1, PairState(0, y1, y2), dW1, dW2)
    q2 = params(k=1, l=2, lambda12=0.6, lambda22=0.3, sigma1=1, sigma2=1.1)
    s2, _ = two_factor_squared_step(q2, 0.1, PairState(0, y2, y1), dW2, dW1)
    assert np.array_equal(s1.y1, s2.y2) and np.array_equal(s1.y2, s2.y1)


class TestSimulatePairs:
    def test_one_step_reproduces_step(self):
        p = params()
        batch = simulate_pair_paths(p, GridSpec(0.1, 1), SQUARED, 3, [5])
        from cirschemes.randomness import BrownianPath

        bp = BrownianPath.generate(3, [5], GridSpec(0.1, 1), n_noise=2)
        s, _ = two_factor_squared_step(p, 0.1, PairState(0, 1.0, 1.0), bp.increments[0, 0, 0], bp.increments[1, 0, 0])
        assert batch.terminal[0].tolist() == [s.y1, s.y2]

    def test_decoupled_squared_delegates_to_one_factor(self):
        # coordinate 1 with lambda12 = 0 is the one-factor explicit scheme with (lambda11, k / lambda11)
        p = params(lambda11=1.5, lambda12=0, lambda22=0, x10=2.0)
        g = GridSpec(1.0, 50)
        pair = simulate_pair_paths(p, g, SQUARED, 8, np.arange(20))
        single = simulate_paths(CirParams(1.5, 2 / 1.5, 1.0, 2.0), g, SchemeSpec("sd", 0.0), 8, np.arange(20))
        np.testing.assert_allclose(pair.values[:, :, 0], single.values, rtol=1e-11, atol=1e-14)

    def test_decoupled_split_delegates_to_exact(self):
        p = params(lambda11=1.5, lambda12=0, lambda22=0, x10=2.0)
        g = GridSpec(1.0, 20)
        pair = simulate_pair_paths(p, g, SPLIT, 8, np.arange(20))
        single = simulate_paths(CirParams(1.5, 2 / 1.5, 1.0, 2.0), g, SchemeSpec("exact"), 8, np.arange(20))
        np.testing.assert_allclose(pair.values[:, :, 0], single.values, rtol=1e-12)

    def test_gate_and_kind_checks(self):
        with pytest.raises(DomainError):
            simulate_pair_paths(params(), GridSpec(2.0, 1), SQUARED, 0)
        with pytest.raises(UsageError):
            simulate_pair_paths(params(), GridSpec(1.0, 10), SchemeSpec("exact"), 0)

    def test_mean_matches_ode(self):
        p = params(lambda11=2, lambda12=0.5, lambda21=1, lambda22=0.5, x10=1.5, x20=0.5)
        g = GridSpec(1.0, 100)
        n = 10**5
        term = simulate_pair_paths(p, g, SQUARED, 77, np.arange(n)).terminal
        ode = two_factor_mean_ode(p, 1.0)[-1, 1:]
        scheme = two_factor_scheme_mean(p, g, SQUARED.kind)[-1, 1:]
        se = term.std(axis=0) / math.sqrt(n)
        assert np.all(np.abs(term.mean(axis=0) - scheme) < 3 * se)
        # the deterministic bias at delta = 0.01 is smaller than one standard error
        assert np.all(np.abs(scheme - ode) < se)
        assert np.all(np.abs(term.mean(axis=0) - ode) < 4 * se)

    def test_decoupled_coordinates_uncorrelated(self):
        p = params(lambda12=0, lambda22=0)
        n = 10**5
        term = simulate_pair_paths(p, GridSpec(1.0, 10), SPLIT, 13, np.arange(n)).terminal
        r = np.corrcoef(term[:, 0], term[:, 1])[0, 1]
        assert abs(r) < 3 / math.sqrt(n)


@st.composite
def valid_pairs(draw):
    d1 = draw(st.integers(1, 8))
    d2 = draw(st.integers(1, 8))
    k = draw(st.floats(0.2, 4))
    l = draw(st.floats(0.2, 4))
    frac = draw(st.floats(0.7, 1.0))
    p = TwoFactorParams(
        k=k,
        l=l,
        lambda11=draw(st.floats(0, 4)),
        lambda12=draw(st.floats(0, 2)),
        lambda21=draw(st.floats(0, 4)),
        lambda22=draw(st.floats(0, 2)),
        sigma1=math.sqrt(4 * k / d1) * frac,
        sigma2=math.sqrt(4 * l / d2),
        x10=draw(st.floats(0, 5)),
        x20=draw(st.floats(0, 5)),
    )
    return p, draw(st.integers(4, 40))


@settings(max_examples=40, deadline=None)
@given(cfg=valid_pairs(), seed=st.integers(0, 2**32))
def test_positivity_property(cfg, seed):
    p, n = cfg
    g = GridSpec(1.0, n)
    checked = 0
    for spec in (SPLIT, SQUARED):
        if validate_two_factor(p, g, spec.kind).valid:
            batch = simulate_pair_paths(p, g, spec, seed, np.arange(10))
            assert batch.values.min() >= 0
            checked += 1
    assert checked >= 1
