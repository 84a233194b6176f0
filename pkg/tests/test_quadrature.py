import math

import numpy as np
import pytest
from scipy.special import sph_harm_y

from heatdet import InputError, build_rule, integrate, integrate_pair, make_model
from heatdet.quadrature import integrate_homogeneous

CIRCLE = make_model("circle", 2 * math.pi)
SPHERE = make_model("sphere", 1.0)


def test_circle_band8_nodes():
    r = build_rule(CIRCLE, 8)
    assert len(r) == 17
    assert np.allclose(r.weights, 2 * math.pi / 17, rtol=0, atol=1e-15)


@pytest.mark.parametrize("band", [1, 3, 10, 25])
def test_sphere_weights_sum(band):
    r = build_rule(SPHERE, band)
    assert r.weights.sum() == pytest.approx(4 * math.pi, rel=1e-12)
    assert np.all(r.weights > 0)
    # poles are never nodes
    assert np.all((r.nodes[:, 0] > 0) & (r.nodes[:, 0] < math.pi))


def test_bad_band():
    with pytest.raises(InputError):
        build_rule(CIRCLE, 0)


def test_circle_examples():
    assert integrate(build_rule(CIRCLE, 3), lambda x: np.cos(3 * x[:, 0]) ** 2) == pytest.approx(math.pi, abs=1e-13)
    r8 = build_rule(CIRCLE, 8)
    assert integrate(r8, lambda x: np.ones(len(x))) == pytest.approx(2 * math.pi, rel=1e-15)
    assert abs(integrate(r8, lambda x: np.sin(5 * x[:, 0]))) <= 1e-13


def test_sphere_y10_normalized():
    r = build_rule(SPHERE, 2)

    def y10sq(p):
        return (3 / (4 * math.pi)) * np.cos(p[:, 0]) ** 2

    assert integrate(r, y10sq) == pytest.approx(1.0, abs=1e-12)


def test_pair_examples():
    r = build_rule(CIRCLE, 4)
    assert integrate_pair(r, r, lambda X, y: np.ones(len(X))) == pytest.approx(4 * math.pi**2, rel=1e-14)
    assert abs(integrate_pair(r, r, lambda X, y: np.cos(X[:, 0] - y[0]))) <= 1e-12
    # each factor integrates to zero; the squared product is pi * pi
    v = integrate_pair(r, r, lambda X, y: np.cos(2 * X[:, 0]) * np.cos(2 * y[0]))
    assert abs(v) <= 1e-12
    v = integrate_pair(r, r, lambda X, y: np.cos(2 * X[:, 0]) ** 2 * np.cos(2 * y[0]) ** 2)
    assert v == pytest.approx(math.pi**2, abs=1e-12)


def test_circle_exactness_kronecker():
    band = 12
    r = build_rule(CIRCLE, band)
    x = r.nodes[:, 0]
    ks = np.arange(-band, band + 1)
    E = np.exp(1j * np.outer(x, ks)) / math.sqrt(2 * math.pi)
    G = (E.conj().T * r.weights) @ E
    assert np.max(np.abs(G - np.eye(len(ks)))) <= 1e-11


def test_sphere_exactness_kronecker():
    band = 8
    r = build_rule(SPHERE, band)
    th, ph = r.nodes[:, 0], r.nodes[:, 1]
    cols = [sph_harm_y(l, m, th, ph) for l in range(band + 1) for m in range(-l, l + 1)]
    Y = np.column_stack(cols)
    G = (Y.conj().T * r.weights) @ Y
    assert np.max(np.abs(G - np.eye(Y.shape[1]))) <= 1e-11


def test_pair_self_convergence():
    def f2(X, y):
        return np.cos(3 * X[:, 0] - 2 * y[0]) ** 2 + np.sin(X[:, 0] + y[0])

    a = integrate_pair(build_rule(CIRCLE, 8), build_rule(CIRCLE, 8), f2)
    b = integrate_pair(build_rule(CIRCLE, 16), build_rule(CIRCLE, 16), f2)
    assert abs(a - b) <= 1e-11 * abs(b)


def test_homogeneous_matches_full_sphere():
    r = build_rule(SPHERE, 6)

    def f2(X, y):
        ux = np.column_stack([np.sin(X[:, 0]) * np.cos(X[:, 1]), np.sin(X[:, 0]) * np.sin(X[:, 1]), np.cos(X[:, 0])])
        uy = np.array([math.sin(y[0]) * math.cos(y[1]), math.sin(y[0]) * math.sin(y[1]), math.cos(y[0])])
        z = ux @ uy
        return z**2 + z**3

    full = integrate_pair(r, r, f2)
    hom = integrate_homogeneous(r, lambda X, y: f2(X, y))
    assert hom == pytest.approx(full, rel=1e-11)


def test_pair_thread_independent():
    r = build_rule(CIRCLE, 100)

    def f2(X, y):
        return np.exp(np.cos(X[:, 0] - y[0]))

    a = integrate_pair(r, r, f2, threads=1)
    b = integrate_pair(r, r, f2, threads=6)
    assert a == b
