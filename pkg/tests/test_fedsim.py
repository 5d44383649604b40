import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from synthgauge import fedsim
from synthgauge.dataio import PipelineConfig
from synthgauge.errors import NumericalError, ValidationError


class TestFedavg:
    def test_single(self, rng):
        p = rng.standard_normal(5)
        assert np.array_equal(fedsim.fedavg([p], [7]), p)

    def test_hand(self):
        assert fedsim.fedavg([np.zeros(1), np.full(1, 4.0)], [1, 3])[0] == 3.0

    def test_equal_weights(self, rng):
        ps = [rng.standard_normal(6) for _ in range(4)]
        oracle = np.array([sum(p[i] for p in ps) / 4 for i in range(6)])
        assert np.allclose(fedsim.fedavg(ps, [2, 2, 2, 2]), oracle, atol=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.integers(1, 5000), min_size=1, max_size=5), st.integers(0, 2**31))
    def test_weighted_and_permutation(self, sizes, seed):
        r = np.random.default_rng(seed)
        ps = [r.standard_normal(7) for _ in sizes]
        out = fedsim.fedavg(ps, sizes)
        oracle = sum(n * p for n, p in zip(sizes, ps)) / sum(sizes)
        assert np.max(np.abs(out - oracle)) < 1e-12
        perm = r.permutation(len(sizes))
        assert np.max(np.abs(fedsim.fedavg([ps[i] for i in perm], [sizes[i] for i in perm]) - out)) < 1e-12

    def test_errors(self):
        with pytest.raises(ValidationError):
            fedsim.fedavg([np.zeros(2), np.zeros(3)], [1, 1])
        with pytest.raises(ValidationError):
            fedsim.fedavg([np.zeros(2)], [0])
        with pytest.raises(ValidationError):
            fedsim.fedavg([], [])

    def test_three_client_weights(self):
        w = fedsim.aggregation_weights([200, 1200, 2000])
        assert np.allclose(w, [1 / 17, 6 / 17, 10 / 17], atol=1e-10)


class TestLocalTrain:
    def _quad(self, c):
        return lambda theta, r: (float(np.sum((theta - c) ** 2)), 2 * (theta - c))

    def test_zero_steps(self):
        cl = fedsim.ClientState(0, 10, np.array([1.0, 2.0]), self._quad(np.zeros(2)))
        out = fedsim.local_train(cl, 0, 0.1)
        assert np.array_equal(out.params, cl.params) and out.losses == []

    def test_quadratic_decreases(self):
        cl = fedsim.ClientState(0, 10, np.array([1.0, -2.0]), self._quad(np.array([0.5, 0.5])))
        out = fedsim.local_train(cl, 20, 0.05)
        assert np.all(np.diff(out.losses) < 0) and len(out.losses) == 20

    def test_one_step_by_hand(self):
        cl = fedsim.ClientState(0, 10, np.array([1.0, 2.0]), self._quad(np.array([0.0, 1.0])))
        out = fedsim.local_train(cl, 1, 0.1)
        assert np.allclose(out.params, [1.0 - 0.1 * 2.0, 2.0 - 0.1 * 2.0])

    def test_non_finite(self):
        cl = fedsim.ClientState(0, 10, np.zeros(1), lambda t, r: (float("inf"), t))
        with pytest.raises(NumericalError, match="step 0"):
            fedsim.local_train(cl, 3, 0.1)


class TestMomentLoss:
    def test_gradient_fd(self, rng):
        x = rng.standard_normal((6, 3))
        mu, cov = rng.standard_normal(3), np.eye(3)
        _, g = fedsim.moment_loss(x, mu, cov)
        h = 1e-6
        fd = np.zeros_like(x)
        for i, j in itertools.product(range(6), range(3)):
            e = np.zeros_like(x)
            e[i, j] = h
            fd[i, j] = (fedsim.moment_loss(x + e, mu, cov)[0] - fedsim.moment_loss(x - e, mu, cov)[0]) / (2 * h)
        assert np.allclose(g, fd, rtol=1e-6, atol=1e-8)

    def test_objective_gradient_fd(self):
        setup = fedsim.FederationSetup([50], rounds=1, local_steps=1, latent_dim=3, sample_dim=4)
        clients, _ = fedsim.make_clients(setup)
        obj, theta = clients[0].objective, clients[0].params
        _, grad = obj(theta, 0)
        h = 1e-6
        idx = np.random.default_rng(0).choice(theta.size, 15, replace=False)
        for i in idx:
            e = np.zeros_like(theta)
            e[i] = h
            fd = (obj(theta + e, 0)[0] - obj(theta - e, 0)[0]) / (2 * h)
            assert fd == pytest.approx(grad[i], rel=1e-5, abs=1e-9)


SMALL = dict(rounds=3, local_steps=10, latent_dim=4, sample_dim=6)


class TestFederation:
    def test_single_client_bit_identical(self):
        setup = fedsim.FederationSetup([300], **SMALL)
        fed = fedsim.run_federation(setup)
        iso = fedsim.run_isolated(setup, 0)
        assert fed.client_losses == iso.client_losses
        assert all(np.array_equal(a, b) for a, b in zip(fed.round_params, iso.round_params))

    def test_identical_clients_symmetry(self):
        setup = fedsim.FederationSetup([100, 100], **SMALL)
        clients, held = fedsim.make_clients(setup, client_ids=[0, 0])
        out, params, _ = fedsim.federate(clients, 3, 10, 0.1, held)
        solo, solo_params, _ = fedsim.federate(clients[:1], 3, 10, 0.1, held)
        for a, b in zip(params, solo_params):
            assert np.allclose(a, b, atol=1e-13)

    def test_shape_and_determinism(self):
        setup = fedsim.FederationSetup([200, 1200, 2000], **SMALL)
        a, b = fedsim.run_federation(setup), fedsim.run_federation(setup)
        assert len(a.round_params) == 3 and len(a.global_eval_losses) == 3
        assert all(len(c) == 30 for c in a.client_losses)
        assert a.to_dict() == b.to_dict()
        assert np.all(np.isfinite(np.concatenate(a.client_losses)))

    def test_from_config(self):
        s = fedsim.FederationSetup.from_config(PipelineConfig())
        assert s.client_sizes == [200, 1200, 2000] and s.local_steps == 100

    def test_validation(self):
        with pytest.raises(ValidationError):
            fedsim.FederationSetup([])
        with pytest.raises(ValidationError):
            fedsim.FederationSetup([10], rounds=0)


class TestSpeedup:
    def test_identical(self):
        c = [5.0, 4.0, 3.0, 2.0]
        assert fedsim.speedup(c, c, 3.0) == 1.0

    def test_ratio(self):
        iso = np.linspace(10, 1, 400)
        iso[319:] = 0.5
        iso[:319] = 2.0
        fed = np.full(400, 2.0)
        fed[199:] = 0.5
        assert fedsim.speedup(fed, iso, 1.0) == pytest.approx(1.6)

    def test_not_reached(self):
        assert fedsim.speedup([3.0, 2.0], [3.0, 2.5], 1.0) == fedsim.NOT_REACHED
