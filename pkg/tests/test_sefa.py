import numpy as np
import pytest

from synthgauge import sefa, toygen
from synthgauge._mlp import Layer
from synthgauge.errors import ValidationError


def test_diag_golden():
    b = sefa.factorize_weight(np.diag([3.0, 2.0, 1.0]))
    assert np.array_equal(b.significances, [9.0, 4.0, 1.0])
    assert np.array_equal(b.directions, np.eye(3))


def test_orthogonal(rng):
    q, _ = np.linalg.qr(rng.standard_normal((5, 5)))
    b = sefa.factorize_weight(q)
    assert np.allclose(b.significances, 1.0, atol=1e-12)
    assert np.allclose(b.directions @ b.directions.T, np.eye(5), atol=1e-8)


def test_eigen_relation(rng):
    a = rng.standard_normal((32, 16))
    b = sefa.factorize_weight(a)
    m = a.T @ a
    for lam, v in zip(b.significances, b.directions):
        assert np.linalg.norm(m @ v - lam * v) < 1e-8 * max(1.0, lam)
    assert np.all(np.diff(b.significances) <= 0) and np.all(b.significances >= 0)


def test_scale_invariance(rng):
    a = rng.standard_normal((8, 4))
    b1, b2 = sefa.factorize_weight(a), sefa.factorize_weight(2.5 * a)
    assert np.allclose(b1.directions, b2.directions, atol=1e-10)
    assert np.allclose(b2.significances, 6.25 * b1.significances, rtol=1e-10)


def test_zero_weight():
    with pytest.raises(ValidationError):
        sefa.factorize_weight(np.zeros((3, 3)))


def test_edit_algebra(rng):
    b = sefa.factorize(toygen.new_generator())
    w = rng.standard_normal(16)
    assert np.array_equal(sefa.edit(w, b, 2, 0.0), w)
    assert np.allclose(sefa.edit(sefa.edit(w, b, 3, 1.7), b, 3, -1.7), w, atol=1e-12)
    assert np.linalg.norm(sefa.edit(w, b, 1, -2.0) - w) == pytest.approx(2.0, abs=1e-12)
    with pytest.raises(ValidationError):
        sefa.edit(w, b, 16, 1.0)


def test_linear_first_layer_displacement(rng):
    g = toygen.new_generator()
    a = g.synthesis_layers[0].weight
    lin = toygen.ToyGenerator(16, 32, g.mapping_layers, [Layer(a, g.synthesis_layers[0].bias, "linear")])
    b = sefa.factorize(lin)
    w = rng.standard_normal(16)
    for i in (1, 3, 5):
        shift = toygen.synthesize(sefa.edit(w, b, i, 1.5), lin) - toygen.synthesize(w, lin)
        assert np.max(np.abs(shift - 1.5 * a @ b.directions[i])) < 1e-10


def test_sweep(rng):
    g = toygen.new_generator()
    b = sefa.factorize(g)
    w = toygen.mapping(rng.standard_normal(16), g)
    grid = sefa.edit_sweep(w, g, b, [1, 3, 5])
    assert [(i, a) for i, a, _ in grid] == [(i, a) for i in (1, 3, 5) for a in sefa.DEFAULT_ALPHAS]
    original = toygen.synthesize(w, g)
    for i, a, s in grid:
        if a == 0:
            assert np.array_equal(s, original)
    single = sefa.edit_sweep(w, g, b, [2], [0.0])
    assert np.array_equal(single[0][2], original)
    with pytest.raises(ValidationError):
        sefa.edit_sweep(w, g, b, [1], [1.0, 2.0])


def test_odd_symmetry():
    g = toygen.new_generator()
    b = sefa.factorize(g)
    w = np.zeros(16)
    for i in range(3):
        plus = toygen.synthesize(sefa.edit(w, b, i, 1.0), g)
        minus = toygen.synthesize(sefa.edit(w, b, i, -1.0), g)
        assert np.allclose(plus, -minus, atol=1e-15)
