import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.metrics import roc_auc_score

from synthgauge import classifier, toygen
from synthgauge.dataio import EmbeddingSet, PipelineConfig
from synthgauge.errors import ValidationError


def separable(n=200, seed=0):
    r = np.random.default_rng(seed)
    y = np.arange(n) % 2
    x = r.standard_normal((n, 4)) * 0.3 + np.where(y[:, None] == 1, 2.0, -2.0)
    return EmbeddingSet(x, y)


def brute_auc(s, y):
    pos, neg = s[y == 1], s[y == 0]
    total = sum(1.0 if p > q else 0.5 if p == q else 0.0 for p in pos for q in neg)
    return total / (len(pos) * len(neg))


class TestAuc:
    def test_cases(self):
        assert classifier.auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
        assert classifier.auc([0.5] * 4, [0, 1, 0, 1]) == 0.5
        with pytest.raises(ValidationError):
            classifier.auc([0.1, 0.2], [1, 1])

    def test_brute(self, rng):
        s, y = rng.integers(0, 4, 10).astype(float), np.array([0, 1] * 5)
        assert classifier.auc(s, y) == brute_auc(s, y)
        assert classifier.auc(s, y) == pytest.approx(roc_auc_score(y, s))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31))
    def test_monotone_invariance(self, seed):
        r = np.random.default_rng(seed)
        s, y = r.standard_normal(20), r.permutation(np.arange(20) % 2)
        assert classifier.auc(s, y) == classifier.auc(np.exp(3 * s) + 1, y)


class TestConfusion:
    def test_perfect(self):
        m = classifier.confusion_metrics([1, 0, 1, 0], [1, 0, 1, 0], [0.9, 0.1, 0.8, 0.2])
        assert (m.acc, m.auc, m.f1, m.sensitivity, m.specificity) == (1, 1, 1, 1, 1)

    def test_constant(self):
        m = classifier.confusion_metrics([0] * 4, [0, 1, 0, 1])
        assert (m.acc, m.sensitivity, m.specificity) == (0.5, 0.0, 1.0)

    def test_hand_six(self):
        m = classifier.confusion_metrics([1, 1, 0, 0, 1, 0], [1, 0, 0, 1, 1, 0])
        assert (m.tp, m.tn, m.fp, m.fn) == (2, 2, 1, 1)
        assert m.acc == 4 / 6 and m.sensitivity == 2 / 3 and m.specificity == 2 / 3 and m.f1 == 4 / 6

    def test_threshold_sweep(self, rng):
        model = classifier.init_model(4, seed=1)
        test = separable(60, 3)
        sens, spec = [], []
        for t in np.linspace(0, 1, 21):
            m = classifier.evaluate(model, test, t)
            sens.append(m.sensitivity)
            spec.append(m.specificity)
        assert np.all(np.diff(sens) <= 0) and np.all(np.diff(spec) >= 0)


class TestModel:
    def test_gradient_fd(self, rng):
        model = classifier.init_model(3, hidden=5, seed=2)
        x, y = rng.standard_normal((8, 3)), rng.integers(0, 2, 8).astype(float)
        theta = model.param_vector()
        _, grad = classifier.logistic_loss(model, x, y)
        h = 1e-6
        fd = np.array([(classifier.logistic_loss(model.with_params(theta + h * e), x, y)[0] - classifier.logistic_loss(model.with_params(theta - h * e), x, y)[0]) / (2 * h) for e in np.eye(theta.size)])
        assert np.max(np.abs(fd - grad)) / np.max(np.abs(fd)) < 1e-5

    def test_predict(self):
        model = classifier.init_model(2, seed=0)
        zero = model.with_params(np.zeros_like(model.param_vector()))
        assert np.all(classifier.predict_proba(zero, np.ones((3, 2))) == 0.5)
        with pytest.raises(ValidationError):
            classifier.predict_proba(model, np.ones((1, 3)))

    def test_hand_forward(self, rng):
        model = classifier.init_model(3, hidden=4, seed=1)
        x = rng.standard_normal((2, 3))
        h1, h2 = model.layers
        s = np.tanh(x @ h1.weight.T + h1.bias) @ h2.weight.T + h2.bias
        assert np.allclose(classifier.predict_proba(model, x), 1 / (1 + np.exp(-s[:, 0])), atol=1e-15)
        assert np.allclose(classifier.extract_embeddings(model, x), np.tanh(x @ h1.weight.T + h1.bias))

    def test_embeddings_zero(self):
        model = classifier.init_model(3, hidden=4, seed=1)
        zero = model.with_params(np.zeros_like(model.param_vector()))
        assert np.array_equal(classifier.extract_embeddings(zero, np.zeros((1, 3))), np.zeros((1, 4)))


class TestTrain:
    def test_separable(self):
        data = separable()
        model = classifier.train(data, data, classifier.TrainParams(seed=0))
        assert classifier.evaluate(model, data).acc == 1.0

    def test_deterministic(self):
        data = separable()
        a = classifier.train(data, data, classifier.TrainParams(seed=4, max_epochs=3))
        b = classifier.train(data, data, classifier.TrainParams(seed=4, max_epochs=3))
        assert np.array_equal(a.param_vector(), b.param_vector())

    def test_best_epoch(self):
        data = separable(seed=1)
        val = separable(seed=2)
        model = classifier.train(data, val, classifier.TrainParams(seed=0))
        best = min(e["val_loss"] for e in model.log)
        assert model.log[model.best_epoch - 1]["val_loss"] == best
        got, _ = classifier.logistic_loss(model, val.vectors.astype(float), val.labels.astype(float))
        assert got == pytest.approx(best, abs=1e-12)

    def test_single_class(self):
        data = EmbeddingSet(np.zeros((4, 2)), [0, 0, 0, 0])
        with pytest.raises(ValidationError):
            classifier.train(data, data)

    def test_early_stopping_rule(self):
        stop = classifier.EarlyStopping(3)
        losses = [5, 4, 3, 2, 1, 2, 3, 4, 5, 6]
        for epoch, loss in enumerate(losses, 1):
            if stop.update(epoch, loss):
                break
        assert epoch == 8 and stop.best_epoch == 5


@pytest.fixture(scope="module")
def data():
    dist = toygen.make_distribution(dim=8, class_ratio=0.1, seed=1)
    return toygen.sample_dataset(dist, 400, 1, "real", "t"), toygen.sample_dataset(dist, 200, 1, "real", "v")


class TestScenarios:
    def test_sets(self, data):
        real, _ = data
        sets = classifier.scenario_sets(real, classifier.ReplaySource(real), 0.02, 0)
        assert np.bincount(sets["aug"].labels).tolist() == [360, 360]
        assert np.bincount(sets["synth"].labels).tolist() == [550, 550]
        assert sets["baseline"] is real

    def test_table(self, data):
        real, val = data
        cfg = PipelineConfig(sample_dim=8, seed=3)
        rows, _ = classifier.run_scenarios(real, val, classifier.ReplaySource(real), cfg)
        assert [r["scenario"] for r in rows] == ["baseline", "synth", "aug"]
        assert all(r["n_val"] == 200 for r in rows)
        again, _ = classifier.run_scenarios(real, val, classifier.ReplaySource(real), cfg)
        assert rows == again

    def test_generator_source(self):
        g = toygen.new_generator(conditional=True, latent_dim=4, sample_dim=8)
        x = classifier.GeneratorSource(g).sample(1, 5, 0)
        assert x.shape == (5, 8)
        gens = {0: toygen.new_generator(latent_dim=4, sample_dim=8, seed=1), 1: toygen.new_generator(latent_dim=4, sample_dim=8, seed=2)}
        assert classifier.GeneratorSource(gens).sample(0, 3, 0).shape == (3, 8)
