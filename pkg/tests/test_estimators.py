import math

import numpy as np
import pytest
from conftest import make_skeleton
from hypothesis import given
from hypothesis import strategies as st

from ctzigzag import (
    GaussianSpec,
    GeometricPath,
    LogKappa,
    Mode,
    TemperingConfig,
    beta_interval_occupancy,
    beta_occupancy,
    discretize,
    gaussian_model,
    inclusion_probability,
    is_estimate,
    is_weight,
    mae_report,
    rmse_report,
    run_tempered_zigzag,
    run_zigzag,
    segment_moment,
    segment_moments,
    target_segment_durations,
)
from ctzigzag.estimators import EstimationError, batch_means_se, burnin_time, filtered_time

T, G, U = int(Mode.TEMPERING), int(Mode.TARGET), int(Mode.UNTEMPERED)


def tempered_skeleton():
    """beta climbs 0 -> 1 over [0, 1], sits at the atom over [1, 3], then falls back to 0.5."""
    return make_skeleton(
        t=[0.0, 1.0, 3.0, 3.5],
        x=[[0.0], [1.0], [3.0], [3.5]],
        v=[[1], [1], [1], [1]],
        kind=[0, 4, 5, 1],
        beta=[0.0, 1.0, 1.0, 0.5],
        v_beta=[1, 0, -1, -1],
        mode=[T, G, T, T],
    )


class TestSegmentMoments:
    def test_constant_segment(self):
        sk = make_skeleton([0.0, 4.0], [[2.5], [2.5]], [[0], [0]], kind=[0, 1])
        assert segment_moment(sk, 0, 1) == 2.5
        assert segment_moment(sk, 0, 2) == 6.25

    def test_unit_ramp(self):
        sk = make_skeleton([0.0, 1.0], [[0.0], [1.0]], [[1], [1]], kind=[0, 1])
        assert segment_moment(sk, 0, 2) == pytest.approx(1.0 / 3.0, rel=1e-14)
        assert segment_moment(sk, 0, 1) == pytest.approx(0.5, rel=1e-14)

    def test_triangle(self):
        sk = make_skeleton([0.0, 1.0, 2.0], [[0.0], [1.0], [0.0]], [[1], [-1], [-1]])
        assert segment_moment(sk, 0, 1) == pytest.approx(0.5, rel=1e-14)
        assert segment_moment(sk, 0, 2) == pytest.approx(1.0 / 3.0, rel=1e-14)

    def test_mode_filter_and_burnin(self):
        sk = tempered_skeleton()
        assert segment_moment(sk, 0, 1, mode=Mode.TARGET) == pytest.approx(2.0)
        assert segment_moment(sk, 0, 1, mode=[Mode.TEMPERING]) == pytest.approx((0.5 + 0.5 * 3.25) / 1.5)
        assert segment_moment(sk, 0, 1, burnin=2.0) == pytest.approx(2.75)
        assert filtered_time(sk, Mode.TARGET, burnin=2.0) == pytest.approx(1.0)

    def test_errors(self):
        sk = tempered_skeleton()
        with pytest.raises(EstimationError):
            segment_moments(sk, 1, burnin=10.0)
        with pytest.raises(EstimationError):
            segment_moments(sk, 1, mode=Mode.UNTEMPERED)
        with pytest.raises(ValueError):
            segment_moments(sk, 3)
        with pytest.raises(ValueError):
            segment_moments(sk, 1, burnin=-1.0)

    @given(
        t=st.lists(st.floats(0.01, 5.0), min_size=1, max_size=20),
        x0=st.floats(-10, 10),
        data=st.data(),
    )
    def test_matches_quadrature(self, t, x0, data):
        v = data.draw(st.lists(st.sampled_from([-1, 1]), min_size=len(t), max_size=len(t)))
        times = np.concatenate([[0.0], np.cumsum(t)])
        xs = x0 + np.concatenate([[0.0], np.cumsum(np.array(t) * v)])
        sk = make_skeleton(times, xs[:, None], np.array(v + [v[-1]])[:, None])
        grid = np.linspace(0.0, times[-1], 20_001)
        path = np.interp(grid, times, xs)
        assert segment_moment(sk, 0, 1) == pytest.approx(np.trapezoid(path, grid) / times[-1], rel=1e-6, abs=1e-6)
        assert segment_moment(sk, 0, 2) == pytest.approx(np.trapezoid(path**2, grid) / times[-1], rel=1e-4, abs=1e-4)

    def test_discretization_error_is_first_order(self, std_normal):
        errors = {0.1: [], 0.01: []}
        for seed in range(40):
            sk = run_zigzag(std_normal, [0.0], n_events=20, rng_seed=seed)
            exact = segment_moment(sk, 0, 1)
            for dt in errors:
                errors[dt].append(abs(discretize(sk, dt).x[:, 0].mean() - exact))
        ratio = np.mean(errors[0.1]) / np.mean(errors[0.01])
        assert 5.0 < ratio < 20.0


class TestOccupancy:
    def test_tempered_skeleton(self):
        sk = tempered_skeleton()
        assert beta_occupancy(sk) == pytest.approx(2.0 / 3.5)
        assert beta_occupancy(sk, burnin=1.0) == pytest.approx(2.0 / 2.5)
        assert beta_interval_occupancy(sk, 0.0, 0.5) == pytest.approx(0.5 / 3.5)
        assert beta_interval_occupancy(sk, 0.5, 1.0) == pytest.approx(1.0 / 3.5)
        assert beta_interval_occupancy(sk, 0.25, 0.5, burnin=0.5) == pytest.approx(0.0)

    def test_no_target_segments(self):
        sk = make_skeleton([0.0, 1.0], [[0.0], [1.0]], [[1], [1]], kind=[0, 1], beta=[0.0, 1.0], v_beta=[1, 1], mode=[T, T])
        assert beta_occupancy(sk) == 0.0

    def test_alpha_one_run(self, std_normal, wide_normal):
        config = TemperingConfig(1.0, LogKappa.constant(), GeometricPath(wide_normal, std_normal))
        sk = run_tempered_zigzag(config, [0.0], n_events=500, rng_seed=0)
        hit = sk.t[np.flatnonzero(sk.kind == 4)[0]]
        assert beta_occupancy(sk, burnin=hit) == 1.0

    def test_durations(self):
        assert target_segment_durations(tempered_skeleton()).tolist() == [2.0]

    def test_inclusion(self):
        sk = make_skeleton(
            t=[0.0, 1.0, 3.0, 4.0],
            x=[[-1.0, 1.0], [0.0, 2.0], [0.0, 4.0], [1.0, 5.0]],
            v=[[1, 1], [1, 1], [1, 1], [1, 1]],
            kind=[0, 8, 9, 1],
            index=[-1, 0, 0, -1],
            beta=[1.0] * 4,
            mode=[G] * 4,
            stuck=[[False, False], [True, False], [False, False], [False, False]],
        )
        np.testing.assert_allclose(inclusion_probability(sk), [0.5, 1.0])
        np.testing.assert_allclose(inclusion_probability(sk, burnin=2.0), [0.5, 1.0])

    def test_burnin_time(self):
        sk = make_skeleton([0.0, 1.0, 2.0, 5.0, 5.0], np.zeros((5, 1)), np.ones((5, 1)))
        assert burnin_time(sk, 0.0) == 0.0
        assert burnin_time(sk, 0.5) == 1.0
        with pytest.raises(ValueError):
            burnin_time(sk, 1.0)


class TestImportanceWeights:
    @pytest.mark.parametrize("delta, w", [(0.0, 1.0), (math.log(2.0), math.log(2.0)), (-50.0, 50.0)])
    def test_examples(self, delta, w):
        assert is_weight(delta) == pytest.approx(w, rel=1e-12)

    @given(mag=st.floats(1e-8, 30), sign=st.sampled_from([-1, 1]))
    def test_identity(self, mag, sign):
        delta = sign * mag
        assert is_weight(delta) * math.expm1(delta) == pytest.approx(delta, rel=1e-12)

    @given(delta=st.floats(-700, 700))
    def test_positive_and_finite(self, delta):
        w = is_weight(delta)
        assert math.isfinite(w) and w >= 0.0
        if delta < 30:
            assert w > 0.0

    def test_vectorized(self):
        out = is_weight(np.array([0.0, 1.0, -1.0]))
        np.testing.assert_allclose(out, [1.0, 1.0 / math.expm1(1.0), -1.0 / math.expm1(-1.0)])

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            is_weight(math.inf)


class TestImportanceEstimate:
    def path(self, std_normal, wide_normal):
        return GeometricPath(wide_normal, std_normal)

    def test_flat_path_is_plain_mean(self, std_normal):
        path = GeometricPath(std_normal, std_normal)
        x = np.random.default_rng(0).normal(size=(100, 1))
        res = is_estimate(x, path, 1.0, lambda s: s[:, 0] ** 2)
        assert res.estimate == pytest.approx(np.mean(x[:, 0] ** 2), rel=1e-13)
        assert res.ess == pytest.approx(100.0)

    def test_constant_function(self, std_normal, wide_normal):
        x = np.random.default_rng(1).normal(0, 2, size=(50, 1))
        res = is_estimate(x, self.path(std_normal, wide_normal), 0.3, lambda s: np.full(len(s), 4.0))
        assert res.estimate == pytest.approx(4.0, rel=1e-14)

    def test_matches_weighted_average(self, std_normal, wide_normal):
        path = self.path(std_normal, wide_normal)
        x = np.random.default_rng(2).normal(0, 2, size=(500, 1))
        delta = path.base.log_density_rows(x) + math.log(0.5) - path.target.log_density_rows(x)
        w = is_weight(delta)
        res = is_estimate(x, path, 0.5, lambda s: s[:, 0] ** 2)
        for scale in (1.0, 1e-3, 7.0):
            assert res.estimate == pytest.approx(np.average(x[:, 0] ** 2, weights=scale * w), rel=1e-12)
        assert res.ess == pytest.approx(w.sum() ** 2 / (w @ w), rel=1e-12)
        assert res.n == 500 and res.standard_error > 0

    def test_errors(self, std_normal, wide_normal):
        path = self.path(std_normal, wide_normal)
        with pytest.raises(EstimationError):
            is_estimate(np.zeros((0, 1)), path, 0.5, lambda s: s[:, 0])
        with pytest.raises(ValueError):
            is_estimate(np.zeros((3, 1)), path, 0.0, lambda s: s[:, 0])


class TestReports:
    def test_rmse(self):
        assert rmse_report([[1.0], [1.0]], [1.0]).tolist() == [0.0]
        assert rmse_report([[3.0]], [1.0]).tolist() == [2.0]
        assert rmse_report([[3.0], [4.0]], [0.0])[0] == pytest.approx(math.sqrt(12.5))

    def test_mae(self):
        np.testing.assert_allclose(mae_report([[3.0, 1.0], [-4.0, 1.0]], [0.0, 0.0]), [3.5, 1.0])

    def test_requires_exact(self):
        with pytest.raises(EstimationError):
            rmse_report([[1.0]], None)

    def test_batch_means(self):
        assert batch_means_se(np.ones(100)) == 0.0
        rng = np.random.default_rng(0)
        se = batch_means_se(rng.normal(size=100_000), 50)
        assert se == pytest.approx(1.0 / math.sqrt(100_000), rel=0.3)
        with pytest.raises(EstimationError):
            batch_means_se([1.0])


def test_tempered_and_untempered_agree(compiled, std_normal, wide_normal):
    path = GeometricPath(wide_normal, std_normal)
    config = TemperingConfig(0.5, LogKappa.constant(), path)
    tempered, plain = [], []
    for seed in range(10):
        sk = run_tempered_zigzag(config, [0.0], path_time=1e4, rng_seed=seed)
        tempered.append(segment_moment(sk, 0, 2, mode=Mode.TARGET))
        plain.append(segment_moment(run_zigzag(std_normal, [0.0], path_time=5e3, rng_seed=seed), 0, 2))
    se = math.sqrt(np.var(tempered, ddof=1) / 10 + np.var(plain, ddof=1) / 10)
    assert abs(np.mean(tempered) - np.mean(plain)) < 3 * se
