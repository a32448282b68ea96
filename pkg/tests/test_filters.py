import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from opmfilter import FilterDegeneracyError, Gaussian, GaussianKernel, PointIndicator, WeightedSampleSet
from opmfilter.filters import (
    FilterConfig,
    GaussianBelief,
    LikelihoodFamily,
    ParticleState,
    SampledLikelihood,
    approximate_opm,
    gaussian_possibility_step,
    initialize_single,
    kalman_step,
    map_multi,
    map_single,
    multi_predict,
    multi_resample,
    multi_update,
    particle_filter_step,
    particle_map,
    resample_single,
    run_possibility_filter,
    single_predict,
    single_update,
    systematic_resample,
)
from opmfilter.filters.common import resample_indices
from opmfilter.possibility import OpmApproximation
from opmfilter.scenarios import StateSpaceModel, make_scenario

UNIT = GaussianKernel(np.eye(1), np.eye(1))
LIN = FilterConfig(complexity="linear")
QUAD = FilterConfig(complexity="quadratic")


def _state(w, x):
    return WeightedSampleSet(np.asarray(w, float), np.asarray(x, float).reshape(len(w), -1))


class TestConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [dict(continuous="local"), dict(discrete="x"), dict(complexity="cubic"), dict(resampling="some"), dict(n=0), dict(likelihood_draws=0)],
    )
    def test_rejects(self, kwargs):
        with pytest.raises(ValueError):
            FilterConfig(**kwargs)


class TestSinglePredict:
    def test_single_sample(self):
        s = _state([1.0], [0.0])
        for cfg in (LIN, QUAD):
            out = single_predict(s, UNIT, cfg, np.random.default_rng(0))
            assert out.weights.tolist() == [1.0]

    def test_linear_on_mean(self):
        out = single_predict(_state([1.0, 0.5], [0.0, 1.0]), UNIT, LIN, proposals=[[0.0], [1.0]])
        assert np.allclose(out.weights, [1.0, 0.5])

    def test_quadratic_example(self):
        out = single_predict(_state([1.0, 0.5], [0.0, 1.0]), UNIT, QUAD, proposals=[[0.0], [1.0]])
        assert np.allclose(out.weights, [1.0, math.exp(-0.5)], atol=1e-15)

    def test_quadratic_brute_force(self):
        rng = np.random.default_rng(0)
        k = GaussianKernel(np.array([[1.0, 0.1], [0.0, 1.0]]), np.diag([0.3, 0.5]))
        w = rng.random(30)
        w /= w.max()
        s = _state(w, rng.standard_normal((30, 2)))
        new = rng.standard_normal((30, 2))
        out = single_predict(s, k, QUAD, proposals=new)
        raw = np.array([max(w[j] * math.exp(k.log_eval(new[i], s.points[j : j + 1])[0]) for j in range(30)) for i in range(30)])
        assert np.allclose(out.weights, raw / raw.max(), atol=1e-12)

    def test_narrow_kernel_linear_equals_quadratic(self):
        rng = np.random.default_rng(1)
        k = GaussianKernel(np.eye(2), 1e-12 * np.eye(2))
        pts = np.stack(np.meshgrid(np.arange(5.0), np.arange(4.0)), -1).reshape(-1, 2) * 1.5
        w = rng.random(len(pts)) + 0.01
        s = _state(w / w.max(), pts)
        a = single_predict(s, k, LIN, np.random.default_rng(2))
        b = single_predict(s, k, QUAD, np.random.default_rng(2))
        assert np.array_equal(a.points, b.points)
        assert np.allclose(a.weights, b.weights, rtol=0, atol=1e-9)

    def test_far_proposal_is_renormalised_not_degenerate(self):
        # weights live in the log domain, so a lone far sample still gets weight one
        k = GaussianKernel(np.eye(1), 1e-6 * np.eye(1))
        out = single_predict(_state([1.0], [0.0]), k, QUAD, proposals=[[1e6]])
        assert out.weights.tolist() == [1.0]

    def test_degenerate(self):
        with pytest.raises(FilterDegeneracyError):
            single_predict(_state([0.0, 0.0], [0.0, 1.0]), UNIT, QUAD, proposals=[[0.0], [1.0]])


class TestSingleUpdate:
    def test_constant_likelihood(self):
        s = _state([1.0, 0.3], [[0.0, 5.0], [0.0, -5.0]])
        lik = GaussianKernel(np.array([[1.0, 0.0]]), np.eye(1))
        out = single_update(s, lik, [2.0])
        assert np.allclose(out.weights, s.weights)

    def test_example(self):
        out = single_update(_state([1.0, math.exp(-0.5)], [0.0, 1.0]), UNIT, [1.0])
        assert np.allclose(out.weights, [1.0, 1.0])
        assert np.array_equal(out.points, [[0.0], [1.0]])

    def test_observation_on_best_sample(self):
        out = single_update(_state([1.0, 0.8], [0.0, 3.0]), UNIT, [0.0])
        assert out.weights[0] == 1.0

    def test_incompatible(self):
        with pytest.raises(FilterDegeneracyError):
            single_update(_state([0.0], [0.0]), UNIT, [1.0])


class TestResample:
    def test_identity_for_one(self):
        s = _state([1.0], [3.0])
        assert resample_single(s, QUAD, np.random.default_rng(0)) is s

    def test_equal_weights(self):
        s = _state(np.ones(6), np.arange(6.0))
        out = resample_single(s, FilterConfig(resampling="all"), np.random.default_rng(0))
        assert np.all(out.weights == 1.0)

    def test_selective_example(self):
        rng = np.random.default_rng(0)
        counts = np.zeros(3)
        for _ in range(2000):
            idx = resample_indices(np.array([1.0, 0.2, 0.2]), 3, QUAD, rng)
            assert idx[0] == 0 and set(idx[1:]) <= {1, 2}
            counts += np.bincount(idx, minlength=3)
        assert counts[1] / counts[1:].sum() == pytest.approx(0.5, abs=0.03)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 100_000), st.sampled_from(["scaled", "global", "local"]), st.sampled_from(["all", "selective"]))
    def test_budget_and_normalisation(self, seed, disc, mode):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 40))
        w = rng.random(n)
        s = _state(w / w.max(), rng.standard_normal((n, 2)))
        out = resample_single(s, FilterConfig(discrete=disc, resampling=mode), rng)
        assert len(out) == n and out.weights.max() == 1.0

    def test_selective_keeps_high_weights(self):
        rng = np.random.default_rng(3)
        w = np.array([1.0, 0.9, 0.05, 0.01, 0.02, 0.03])
        idx = resample_indices(w, 6, QUAD, rng)
        assert {0, 1} <= set(idx.tolist())


class TestMap:
    def test_single(self):
        assert map_single(_state([0.3, 1.0, 0.7], [1.0, 2.0, 3.0])).tolist() == [2.0]
        assert map_single(_state([1.0, 1.0], [5.0, 6.0])).tolist() == [5.0]
        assert map_single(_state([1.0], [9.0])).tolist() == [9.0]

    def test_multi(self):
        one = OpmApproximation([1.0], (_state([0.2, 1.0], [1.0, 2.0]),))
        assert map_multi(one).tolist() == map_single(one.groups[0]).tolist()
        two = OpmApproximation([0.9, 0.1], (_state([1.0, 1.0], [1.0, 2.0]), _state([1.0], [3.0])))
        assert map_multi(two).tolist() == [1.0]
        dom = OpmApproximation([0.5, 0.5], (_state([1.0], [1.0]), _state([0.4, 0.2], [2.0, 3.0])))
        assert map_multi(dom).tolist() == [1.0]


class TestApproximateOpm:
    def test_single_component(self):
        a = approximate_opm([(1.0, Gaussian(0.0, 1.0))], 3, np.random.default_rng(0), QUAD)
        assert a.group_weights.tolist() == [1.0] and len(a.groups[0]) == 3
        x = a.groups[0].points[:, 0]
        f = np.exp(-0.5 * x**2)
        assert np.allclose(a.groups[0].weights, f / f.max())

    def test_point_components(self):
        mix = [(0.5, PointIndicator([1.0])), (0.5, PointIndicator([-1.0]))]
        rng = np.random.default_rng(1)
        a = approximate_opm(mix, 4, rng, QUAD)
        counts = [len(g) for g in a.groups]
        assert np.allclose(a.group_weights, np.array(counts) / 4)
        assert all(np.all(g.weights == 1.0) for g in a.groups)
        assert oracles.entropy(a.group_weights) >= 0 and a.size == 4

    def test_empty(self):
        with pytest.raises(ValueError):
            approximate_opm([], 3, np.random.default_rng(0), QUAD)


class TestMultiPredict:
    def test_single_group_matches_single(self):
        s = _state([1.0, 0.5], [0.0, 1.0])
        a = OpmApproximation([1.0], (s,))
        out = multi_predict(a, UNIT, QUAD, proposals=[[[0.0], [1.0]]])
        ref = single_predict(s, UNIT, QUAD, proposals=[[0.0], [1.0]])
        assert out.group_weights.tolist() == [1.0]
        assert np.allclose(out.groups[0].weights, ref.weights)

    def test_symmetric_groups(self):
        s = _state([1.0, 0.4], [0.0, 1.0])
        a = OpmApproximation([0.3, 0.7], (s, s))
        out = multi_predict(a, UNIT, QUAD, proposals=[[[0.2], [1.1]], [[0.2], [1.1]]])
        assert np.allclose(out.group_weights, [0.3, 0.7])

    def test_example(self):
        a = OpmApproximation([0.5, 0.5], (_state([1.0], [0.0]), _state([1.0], [10.0])))
        out = multi_predict(a, UNIT, QUAD, proposals=[[[0.0]], [[10.0]]])
        assert np.allclose(out.group_weights, [0.5, 0.5])

    def test_group_weights_follow_formula(self):
        rng = np.random.default_rng(5)
        groups = tuple(_state(np.append(rng.random(3), 1.0), rng.standard_normal(4)) for _ in range(3))
        W = np.array([0.2, 0.5, 0.3])
        props = [rng.standard_normal((4, 1)) for _ in range(3)]
        out = multi_predict(OpmApproximation(W, groups), UNIT, QUAD, proposals=props)
        num = []
        for Wi, g, p in zip(W, groups, props):
            vals = [g.weights[j] * math.exp(-0.5 * (p[l, 0] - g.points[j, 0]) ** 2) for j in range(4) for l in range(4)]
            num.append(Wi * max(vals))
        assert np.allclose(out.group_weights, np.array(num) / sum(num), atol=1e-12)


class TestMultiUpdate:
    def _predicted(self):
        rng = np.random.default_rng(7)
        return OpmApproximation(
            [0.4, 0.6], (_state([1.0, 0.5, 0.2], rng.standard_normal(3)), _state([1.0, 0.7], rng.standard_normal(2)))
        )

    def test_single_kernel_matches_single_update(self):
        a = self._predicted()
        out = multi_update(a, UNIT, [0.3])
        num = []
        for Wi, g in zip(a.group_weights, a.groups):
            ref = single_update(g, UNIT, [0.3])
            raw = g.weights * np.exp(UNIT.log_eval([0.3], g.points))
            num.append(Wi * raw.max())
            assert np.allclose(out.groups[len(num) - 1].weights, ref.weights, atol=1e-12)
        assert np.allclose(out.group_weights, np.array(num) / sum(num), atol=1e-12)

    def test_zero_weight_component(self):
        a = self._predicted()
        other = GaussianKernel(np.eye(1), 4 * np.eye(1))
        fam = multi_update(a, LikelihoodFamily([1.0, 0.0], [UNIT, other]), [0.3])
        ref = multi_update(a, UNIT, [0.3])
        assert np.allclose(fam.group_weights, ref.group_weights)

    def test_finite_family_example(self):
        a = OpmApproximation([1.0], (_state([1.0], [0.0]),))
        flat = GaussianKernel(lambda x: np.ones((len(x), 1)), np.eye(1))  # s(1 | x) = 1
        shifted = GaussianKernel(np.eye(1), np.eye(1))  # s(1 | 0) = exp(-1/2)
        out = multi_update(a, LikelihoodFamily([0.5, 0.5], [flat, shifted]), [1.0])
        e = math.exp(-0.5)
        assert np.allclose(out.group_weights, np.array([0.5, 0.5 * e]) / (0.5 + 0.5 * e), atol=1e-12)
        assert np.allclose(out.group_weights, [0.6225, 0.3775], atol=1e-4)

    def test_sampled_family_shares_positions(self):
        a = self._predicted()
        kernels = [GaussianKernel(np.eye(1), s * np.eye(1)) for s in (0.5, 2.0)]
        it = iter(kernels)
        out = multi_update(a, SampledLikelihood(lambda rng: next(it), 2), [0.0], rng=None)
        assert len(out.groups) == 4
        assert out.groups[0].points is out.groups[2].points

    def test_all_vanish(self):
        fam = LikelihoodFamily([0.0], [UNIT])
        with pytest.raises(FilterDegeneracyError):
            multi_update(self._predicted(), fam, [0.0])


class TestMultiResample:
    def test_single_group_budget(self):
        a = OpmApproximation([1.0], (_state([1.0, 0.2, 0.2], [0.0, 1.0, 2.0]),))
        out = multi_resample(a, 3, QUAD, np.random.default_rng(0))
        assert out.size == 3 and len(out.groups) == 1
        assert 0.0 in out.groups[0].points[:, 0]

    def test_zero_group_never_selected(self):
        a = OpmApproximation([1.0, 0.0], (_state([1.0], [0.0]), _state([1.0], [5.0])))
        out = multi_resample(a, 10, QUAD, np.random.default_rng(0))
        assert len(out.groups) == 1 and np.all(out.groups[0].points == 0.0)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 100_000), st.integers(1, 60))
    def test_budget_conserved(self, seed, n):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(1, 5))
        W = rng.random(m) + 0.01
        groups = tuple(_state(np.append(rng.random(k), 1.0), rng.standard_normal(k + 1)) for k in rng.integers(0, 8, m))
        out = multi_resample(OpmApproximation(W / W.sum(), groups), n, QUAD, rng)
        assert out.size == n and abs(out.group_weights.sum() - 1) < 1e-12
        assert all(g.weights.max() == 1.0 for g in out.groups)


class TestParticle:
    def _model(self, obs_cov=1.0):
        return StateSpaceModel(
            transition=GaussianKernel(np.eye(1), np.eye(1)),
            observation=GaussianKernel(np.eye(1), obs_cov * np.eye(1)),
            prior=[(1.0, Gaussian(0.0, 1.0))],
            position_indices=(0,),
        )

    def test_uniform_likelihood(self):
        m = StateSpaceModel(
            transition=GaussianKernel(2 * np.eye(1), 1e-30 * np.eye(1)),
            observation=GaussianKernel(np.zeros((1, 1)), np.eye(1)),
            prior=[(1.0, Gaussian(0.0, 1.0))],
            position_indices=(0,),
        )
        s = ParticleState(np.array([[1.0], [2.0], [3.0]]), np.full(3, 1 / 3))
        out = particle_filter_step(s, m, [0.0], np.random.default_rng(0))
        assert np.allclose(out.updated_weights, 1 / 3)
        assert np.allclose(out.updated_points[:, 0], [2.0, 4.0, 6.0])

    def test_normalised(self):
        rng = np.random.default_rng(1)
        s = ParticleState(rng.standard_normal((50, 1)), np.full(50, 0.02))
        out = particle_filter_step(s, self._model(), [0.5], rng, systematic=True)
        assert abs(out.updated_weights.sum() - 1) < 1e-12 and abs(out.weights.sum() - 1) < 1e-12

    def test_single_particle(self):
        s = ParticleState(np.array([[0.0]]), np.ones(1))
        out = particle_filter_step(s, self._model(), [0.0], np.random.default_rng(2))
        assert np.array_equal(particle_map(out, self._model(), [0.0]), out.updated_points[0])

    def test_map_brute_force_and_relabeling(self):
        m = self._model(0.5)
        prev = np.array([[-1.0], [0.0], [2.0]])
        prev_w = np.array([0.2, 0.5, 0.3])
        upd = np.array([[0.1], [1.4], [-0.7]])
        s = ParticleState(upd, np.full(3, 1 / 3), prev, prev_w, upd, np.full(3, 1 / 3))
        y = [0.9]

        def npdf(x, mu, var):
            return math.exp(-0.5 * (x - mu) ** 2 / var) / math.sqrt(2 * math.pi * var)

        scores = [npdf(y[0], u, 0.5) * sum(w * npdf(u, p, 1.0) for p, w in zip(prev[:, 0], prev_w)) for u in upd[:, 0]]
        assert particle_map(s, m, y).tolist() == upd[int(np.argmax(scores))].tolist()
        perm = [2, 0, 1]
        s2 = ParticleState(upd[perm], s.weights, prev[perm], prev_w[perm], upd[perm], s.weights)
        assert particle_map(s2, m, y).tolist() == particle_map(s, m, y).tolist()

    def test_systematic(self):
        idx = systematic_resample(np.array([0.0, 1.0, 0.0]), np.random.default_rng(0))
        assert idx.tolist() == [1, 1, 1]

    def test_degenerate(self):
        s = ParticleState(np.zeros((3, 1)), np.zeros(3))
        with pytest.raises(FilterDegeneracyError):
            particle_filter_step(s, self._model(), [0.0], np.random.default_rng(0))


class TestGaussianRecursions:
    def test_scalar_example(self):
        for step in (kalman_step, gaussian_possibility_step):
            b = step(GaussianBelief([0.0], [[1.0]]), 1.0, 0.0, 1.0, 1.0, [1.0])
            assert b.mean[0] == pytest.approx(0.5) and b.cov[0, 0] == pytest.approx(0.5)

    def test_scalar_against_plain_floats(self):
        ref = oracles.scalar_kalman(0.3, 2.0, 0.9, 0.4, 1.5, 0.7, 1.2)
        b = kalman_step(GaussianBelief([0.3], [[2.0]]), 0.9, 0.4, 1.5, 0.7, [1.2])
        assert b.mean[0] == pytest.approx(ref.mean[0], rel=1e-12)
        assert b.cov[0, 0] == pytest.approx(ref.cov[0, 0], rel=1e-12)

    def test_zero_innovation(self):
        b = kalman_step(GaussianBelief([1.0, 2.0], np.eye(2)), np.eye(2), 0.1 * np.eye(2), [[1.0, 0.0]], [[1.0]], [1.0])
        assert np.allclose(b.mean, [1.0, 2.0])

    def test_uninformative(self):
        prior = GaussianBelief([0.4], [[2.0]])
        for step in (kalman_step, gaussian_possibility_step):
            b = step(prior, 1.0, 0.0, 1.0, 1e12, [100.0])
            assert b.mean[0] == pytest.approx(0.4, abs=1e-6) and b.cov[0, 0] == pytest.approx(2.0, abs=1e-6)

    def test_pure_linear_map(self):
        F = np.array([[1.0, 0.1], [0.0, 1.0]])
        b = gaussian_possibility_step(GaussianBelief([1.0, 2.0], np.eye(2)), F, 1e-30 * np.eye(2), [[1.0, 0.0]], [[1e14]], [0.0])
        assert np.allclose(b.mean, F @ [1.0, 2.0], atol=1e-9)

    def test_singular_innovation(self):
        with pytest.raises(ValueError):
            kalman_step(GaussianBelief([0.0], [[0.0]]), 1.0, 0.0, 1.0, 0.0, [1.0])

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 100_000))
    def test_equivalence(self, seed):
        rng = np.random.default_rng(seed)
        b1 = b2 = GaussianBelief(rng.standard_normal(3), np.eye(3))
        for _ in range(10):
            F, Q, H, R = oracles.random_linear_gaussian(rng, 3, 2)
            y = rng.standard_normal(2)
            b1, b2 = kalman_step(b1, F, Q, H, R, y), gaussian_possibility_step(b2, F, Q, H, R, y)
        assert np.allclose(b1.mean, b2.mean, rtol=1e-8, atol=1e-10)
        assert np.allclose(b1.cov, b2.cov, rtol=1e-8, atol=1e-10)


class TestEndToEnd:
    @pytest.mark.parametrize("cfg", [FilterConfig(n=64), FilterConfig(n=64, continuous="scaled", discrete="global", complexity="linear", resampling="all")])
    def test_scenario_one_tracks(self, cfg):
        sc = make_scenario("1", horizon=30)
        traj = sc.simulate(np.random.default_rng(0))
        est = run_possibility_filter(sc.model(), traj.observations, cfg, np.random.default_rng(1))
        err = np.abs(est[:, [0, 2]] - traj.states[:, [0, 2]])
        assert est.shape == traj.states.shape and err.mean() < 0.3

    def test_disk_multi(self):
        sc = make_scenario("disk", horizon=20)
        traj = sc.simulate(np.random.default_rng(0))
        est = run_possibility_filter(sc.model(), traj.observations, FilterConfig(n=100), np.random.default_rng(1))
        assert est.shape == (20, 2) and np.all(np.abs(est[:, 0]) <= np.pi)

    def test_initialize_single(self):
        s = initialize_single(Gaussian([0.0, 0.0], np.eye(2)), FilterConfig(n=10), np.random.default_rng(0))
        assert len(s) == 10 and s.weights.max() == 1.0
