import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ctzigzag import (
    EventKind,
    ExtendedState,
    Mode,
    SpikeSlabSpec,
    inclusion_probability,
    run_sticky_tempered,
    segment_moments,
)
from ctzigzag.state import StateError
from ctzigzag.sticky import (
    active_coordinate_rate,
    beta_rate_sticky,
    sample_spike_slab,
    sticky_exit_rate,
    unstick_bound,
    unstick_rate,
)


def tempering(x, v, beta, v_beta, stuck=None):
    return ExtendedState(x=x, v=v, beta=beta, v_beta=v_beta, mode=Mode.TEMPERING, stuck=stuck)


def target(x, v, stuck=None):
    return ExtendedState(x=x, v=v, beta=1.0, v_beta=0, mode=Mode.TARGET, stuck=stuck)


def tempered_log_density(spec, x, beta, active):
    return float(np.sum(-((x[active] - spec.m * beta) ** 2) / (2.0 * spec.sigma2)))


class TestActiveRate:
    def test_centred_slab_is_sticky_gaussian(self):
        spec = SpikeSlabSpec(m=0.0, sigma2=0.5)
        bound = active_coordinate_rate(spec, tempering([0.3, 1.0], [-1, 1], 0.4, 1), 1)
        np.testing.assert_allclose(bound.coeffs, [2.0, 2.0])

    def test_slab_mode_in_target(self):
        spec = SpikeSlabSpec(m=3.0, sigma2=0.5)
        bound = active_coordinate_rate(spec, target([3.0, 0.0], [1, 1], stuck=[False, True]), 0)
        assert bound(0.0) == 0.0
        assert bound(1.0) == pytest.approx(2.0)

    def test_grid_against_direct_evaluation(self):
        spec = SpikeSlabSpec(m=4.0, sigma2=0.5)
        state = tempering([1.0, 0.0], [-1, 1], 0.25, 1)
        bound = active_coordinate_rate(spec, state, 0)
        assert bound(0.0) == 0.0
        assert bound.horizon == pytest.approx(0.75)
        for s in np.linspace(0.0, 0.75, 31):
            direct = max(0.0, (-1 / 0.5) * ((1.0 - s) - 4.0 * (0.25 + s)))
            assert bound(s) == pytest.approx(direct, abs=1e-12)

    @given(
        x=st.floats(-5, 5), beta=st.floats(0.01, 0.99), m=st.floats(-4, 4),
        v=st.sampled_from([-1, 1]), vb=st.sampled_from([-1, 1]), s=st.floats(0, 1),
    )
    def test_is_minus_velocity_times_log_gradient(self, x, beta, m, v, vb, s):
        spec = SpikeSlabSpec(d=1, m=m, sigma2=0.7)
        bound = active_coordinate_rate(spec, tempering([x], [v], beta, vb), 0)
        s = min(s, bound.horizon)
        xs, bs = x + s * v, beta + s * vb
        direct = max(0.0, v * (xs - m * bs) / spec.sigma2)
        assert bound(s) == pytest.approx(direct, abs=1e-9)

    def test_stuck_coordinate_raises(self):
        with pytest.raises(StateError):
            active_coordinate_rate(SpikeSlabSpec(), target([0.0, 1.0], [1, 1], stuck=[True, False]), 0)


class TestUnstick:
    def test_flat_slab(self):
        spec = SpikeSlabSpec(w=0.5, m=0.0, sigma2=0.5)
        for beta in (0.0, 0.5, 1.0):
            assert unstick_rate(spec, beta) == pytest.approx(1 / math.sqrt(math.pi), rel=1e-14)
        assert unstick_bound(spec) == pytest.approx(0.5642, abs=1e-4)

    def test_bound_is_attained_at_zero(self):
        spec = SpikeSlabSpec(w=0.3, m=2.5, sigma2=0.8)
        assert unstick_rate(spec, 0.0) == unstick_bound(spec)

    def test_separated_slab_almost_never_reintroduces(self):
        rate = unstick_rate(SpikeSlabSpec(w=0.5, m=4.0, sigma2=0.5), 1.0)
        assert rate == pytest.approx(math.exp(-16) / math.sqrt(math.pi), rel=1e-12)
        assert rate == pytest.approx(6.35e-8, rel=1e-3)

    @given(beta=st.floats(0, 1), m=st.floats(-5, 5), w=st.floats(0.01, 0.99))
    def test_bound_dominates(self, beta, m, w):
        spec = SpikeSlabSpec(w=w, m=m)
        assert 0.0 < unstick_rate(spec, beta) <= unstick_bound(spec)

    def test_beta_range(self):
        with pytest.raises(ValueError):
            unstick_rate(SpikeSlabSpec(), 1.5)


class TestBetaRate:
    def test_all_stuck(self):
        spec = SpikeSlabSpec(m=4.0)
        bound = beta_rate_sticky(spec, tempering([0.0, 0.0], [1, -1], 0.3, 1, stuck=[True, True]))
        np.testing.assert_array_equal(bound.coeffs, 0.0)

    def test_centred_slab(self):
        bound = beta_rate_sticky(SpikeSlabSpec(m=0.0), tempering([1.0, -2.0], [1, -1], 0.3, -1))
        np.testing.assert_array_equal(bound.coeffs, 0.0)

    def test_requires_tempering(self):
        with pytest.raises(StateError):
            beta_rate_sticky(SpikeSlabSpec(m=1.0), target([1.0, 1.0], [1, 1]))

    @given(
        x=st.lists(st.floats(-5, 5), min_size=3, max_size=3),
        stuck=st.lists(st.booleans(), min_size=3, max_size=3),
        v=st.lists(st.sampled_from([-1, 1]), min_size=3, max_size=3),
        beta=st.floats(0.01, 0.99), m=st.floats(-4, 4), vb=st.sampled_from([-1, 1]), s=st.floats(0, 1),
    )
    def test_matches_numerical_beta_derivative(self, x, stuck, v, beta, m, vb, s):
        spec = SpikeSlabSpec(d=3, m=m, sigma2=0.5)
        x = np.where(stuck, 0.0, x)
        stuck = np.array(stuck)
        bound = beta_rate_sticky(spec, tempering(x, v, beta, vb, stuck=stuck))
        s = min(s, bound.horizon)
        xs = x + s * np.where(stuck, 0, v)
        bs = beta + s * vb
        h = 1e-6
        active = ~stuck
        slope = (tempered_log_density(spec, xs, bs + h, active) - tempered_log_density(spec, xs, bs - h, active)) / (2 * h)
        assert bound(s) == pytest.approx(max(0.0, -vb * slope), abs=1e-5 * (1 + abs(slope)))


class TestRun:
    def test_centred_inclusion(self, compiled):
        spec = SpikeSlabSpec(m=0.0)
        sk = run_sticky_tempered(spec, 0.5, path_time=5e4, rng_seed=1)
        np.testing.assert_allclose(inclusion_probability(sk), 0.5, atol=0.03)

    def test_centred_slab_never_flips_beta(self):
        sk = run_sticky_tempered(SpikeSlabSpec(m=0.0), 0.5, n_events=5000, rng_seed=2)
        assert not np.any(sk.kind == EventKind.FLIP_BETA)
        assert np.any(sk.kind == EventKind.REFLECT_BETA_ZERO)

    @given(seed=st.integers(0, 2**32 - 1), m=st.floats(0, 4), alpha=st.floats(0.1, 1.0))
    def test_stick_invariants(self, seed, m, alpha):
        sk = run_sticky_tempered(SpikeSlabSpec(d=3, m=m), alpha, n_events=400, rng_seed=seed)
        h = np.diff(sk.t)
        for k in np.flatnonzero(sk.kind == EventKind.STICK):
            i = sk.index[k]
            assert sk.x[k, i] == 0.0 and sk.stuck[k, i]
            assert abs(sk.x[k - 1, i] + h[k - 1] * sk.v[k - 1, i]) < 1e-12
        # a stuck coordinate sits at exactly zero until it is released
        assert np.all(sk.x[sk.stuck] == 0.0)
        changed = np.argwhere(np.diff(sk.stuck.astype(int), axis=0) != 0)
        for row, i in changed:
            assert sk.kind[row + 1] in (EventKind.STICK, EventKind.UNSTICK)
            assert sk.index[row + 1] == i
        assert np.all(np.abs(sk.v) == 1)

    def test_hold_times_in_target_mode(self, compiled):
        spec = SpikeSlabSpec(d=2, m=1.0)
        sk = run_sticky_tempered(spec, 1.0, path_time=2e4, rng_seed=3)
        holds = []
        for i in range(spec.d):
            sticks = np.flatnonzero((sk.kind == EventKind.STICK) & (sk.index == i))
            unsticks = np.flatnonzero((sk.kind == EventKind.UNSTICK) & (sk.index == i))
            n = min(sticks.size, unsticks.size)
            holds.append(sk.t[unsticks[:n]] - sk.t[sticks[:n]])
        holds = np.concatenate(holds)
        assert holds.size >= 200
        se = holds.std(ddof=1) / math.sqrt(holds.size)
        assert abs(holds.mean() - 1.0 / unstick_rate(spec, 1.0)) < 3 * se

    @pytest.mark.parametrize("m", [0.0, 1.0, 2.0])
    def test_moments_match_exact_draws(self, m, compiled):
        spec = SpikeSlabSpec(d=2, m=m)
        means, seconds, included = [], [], []
        for seed in range(12):
            sk = run_sticky_tempered(spec, 0.5, path_time=1e4, rng_seed=100 + seed)
            means.append(segment_moments(sk, 1, mode=Mode.TARGET))
            seconds.append(segment_moments(sk, 2, mode=Mode.TARGET))
            included.append(inclusion_probability(sk))
        mean, second = spec.exact_moments
        for est, truth in [(means, mean), (seconds, second), (included, np.full(2, spec.w))]:
            est = np.array(est)
            se = est.std(axis=0, ddof=1) / math.sqrt(len(est))
            assert np.all(np.abs(est.mean(axis=0) - truth) < 3 * se)

    def test_refresh_switch(self, compiled):
        spec = SpikeSlabSpec(m=0.0)
        resume = run_sticky_tempered(spec, 0.5, n_events=2000, rng_seed=4)
        fresh = run_sticky_tempered(spec, 0.5, n_events=2000, rng_seed=4, refresh=True)
        assert not np.array_equal(resume.t, fresh.t)
        sk = run_sticky_tempered(spec, 0.5, path_time=5e4, rng_seed=5, refresh=True)
        np.testing.assert_allclose(inclusion_probability(sk), 0.5, atol=0.03)

    def test_resume_keeps_the_velocity(self):
        sk = run_sticky_tempered(SpikeSlabSpec(m=0.0), 0.5, n_events=2000, rng_seed=6)
        for k in np.flatnonzero(sk.kind == EventKind.UNSTICK):
            i = sk.index[k]
            before = np.flatnonzero((sk.kind[:k] == EventKind.STICK) & (sk.index[:k] == i))[-1]
            assert sk.v[k, i] == sk.v[before, i]

    def test_untempered_start_in_target(self):
        sk = run_sticky_tempered(SpikeSlabSpec(m=2.0), 1.0, n_events=100, rng_seed=0)
        assert np.all(sk.mode == Mode.TARGET)

    def test_errors(self):
        with pytest.raises(StateError):
            run_sticky_tempered(SpikeSlabSpec(d=2), 0.5, init=np.zeros(3), n_events=10)
        with pytest.raises(ValueError):
            run_sticky_tempered(SpikeSlabSpec(), 1.5, n_events=10)
        with pytest.raises(StateError):
            run_sticky_tempered(SpikeSlabSpec(), 0.0, init=target([0.0, 0.0], [1, 1]), n_events=10)
        with pytest.raises(StateError):
            run_sticky_tempered(SpikeSlabSpec(), 0.5, init=ExtendedState(x=[0.0, 0.0], v=[1, 1]), n_events=10)
        with pytest.raises(ValueError):
            sticky_exit_rate(0.0)

    @pytest.mark.parametrize("kw", [dict(w=0.0), dict(w=1.0), dict(sigma2=0.0), dict(d=0), dict(m=math.inf)])
    def test_spec_validation(self, kw):
        with pytest.raises(ValueError):
            SpikeSlabSpec(**kw)


def test_exact_sampler_moments():
    spec = SpikeSlabSpec(d=3, w=0.3, m=2.0, sigma2=0.5)
    X = sample_spike_slab(spec, 200_000, np.random.default_rng(0))
    mean, second = spec.exact_moments
    se = X.std(axis=0) / math.sqrt(len(X))
    assert np.all(np.abs(X.mean(axis=0) - mean) < 4 * se)
    np.testing.assert_allclose((X != 0).mean(axis=0), 0.3, atol=0.005)
    np.testing.assert_allclose((X**2).mean(axis=0), second, rtol=0.02)
