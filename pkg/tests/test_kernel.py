import math

import numpy as np
import pytest

from heatdet import (
    DomainError,
    InputError,
    TruncationError,
    build_rule,
    enumerate_basis,
    heat_content,
    heat_determinant,
    heat_kernel,
    heat_trace,
    integrate,
    make_bundle,
    make_model,
    mixed_tensor,
    scalar_mixed_tensor,
    tail_bound,
)
from heatdet.kernel import psi_residual, t_min_valid

import oracles

CIRCLE = make_model("circle", 2 * math.pi)
TORUS = make_model("torus", [2 * math.pi, 2 * math.pi])
SPHERE = make_model("sphere", 1.0)
K = np.arange(-60, 61)
S0 = float(np.sum(np.exp(-0.1 * K**2)))  # 5.604990...
S2 = float(np.sum(K**2 * np.exp(-0.1 * K**2)))  # 28.02495..., over all of Z


@pytest.fixture(scope="module")
def c400():
    return enumerate_basis(CIRCLE, make_bundle(CIRCLE), 400.0)


def test_lattice_sums():
    assert S0 == pytest.approx(5.604990, abs=2e-6)
    assert S0 == pytest.approx(math.sqrt(math.pi / 0.1), rel=1e-12)
    # the one-sided sum over k >= 1 is 14.012478; over Z it doubles
    assert S2 / 2 == pytest.approx(14.012475, abs=5e-6)
    assert S2 == pytest.approx(oracles.circle_K(0.05), rel=1e-14)


def test_heat_kernel_diagonal(c400):
    U = heat_kernel(c400, 0.1, [0.7], [0.7]).U
    assert U.shape == (1, 1)
    assert U[0, 0] == pytest.approx(0.892057, abs=1e-5)
    assert U[0, 0] == pytest.approx(S0 / (2 * math.pi), rel=1e-13)


def test_heat_kernel_large_t_projects(c400):
    U = heat_kernel(c400, 60.0, [0.2], [2.9]).U
    assert U[0, 0] == pytest.approx(1 / (2 * math.pi), rel=1e-12)
    Q = np.array([[0.4, 0.1], [0.1, 0.4]])  # bottom eigenvector (1,-1)/sqrt2, q = 0.3
    b = enumerate_basis(TORUS, make_bundle(TORUS, 2, Q), 10.0)
    U = heat_kernel(b, 80.0, [0.1, 0.2], [3.0, 1.0]).U * math.exp(80.0 * 0.3)
    P0 = 0.5 * np.array([[1, -1], [-1, 1]])
    assert np.allclose(U, P0 / TORUS.volume, atol=1e-12)


def test_heat_kernel_potential_factorization():
    b0 = enumerate_basis(CIRCLE, make_bundle(CIRCLE), 400.0)
    bq = enumerate_basis(CIRCLE, make_bundle(CIRCLE, 1, [[0.7]]), 400.7)
    for t in (0.05, 0.3):
        u0 = heat_kernel(b0, t, [0.3], [1.9]).U
        uq = heat_kernel(bq, t, [0.3], [1.9]).U
        assert uq[0, 0] == pytest.approx(u0[0, 0] * math.exp(-0.7 * t), rel=1e-13)


def test_hermiticity_exact(rng):
    Q = np.array([[0.3, 0.2 - 0.1j], [0.2 + 0.1j, 0.9]])
    b = enumerate_basis(TORUS, make_bundle(TORUS, 2, Q, [0.3, -0.2]), 60.0).remixed(rng)
    for _ in range(10):
        x, y = rng.uniform(0, 6, (2, 2))
        a = heat_kernel(b, 0.1, x, y).U
        c = heat_kernel(b, 0.1, y, x).U
        assert np.max(np.abs(a.conj().T - c)) == 0.0


def test_semigroup(c400):
    rule = build_rule(CIRCLE, 2 * c400.max_degree)
    V, _ = c400.sample(rule.nodes)
    t, s = 0.05, 0.08
    x, xp = 0.4, 2.2
    for x, xp in [(0.4, 2.2), (1.0, 1.0)]:
        left = np.array([heat_kernel(c400, t, [x], y).U[0, 0] for y in rule.nodes])
        right = np.array([heat_kernel(c400, s, y, [xp]).U[0, 0] for y in rule.nodes])
        lhs = integrate(rule, left * right)
        assert lhs == pytest.approx(heat_kernel(c400, t + s, [x], [xp]).U[0, 0], abs=1e-8)


def test_trace_matches_diagonal_integral():
    b = enumerate_basis(SPHERE, make_bundle(SPHERE), 200.0)
    rule = build_rule(SPHERE, 2 * b.max_degree)
    diag = [np.trace(heat_kernel(b, 0.05, p, p).U).real for p in rule.nodes[::1]]
    assert integrate(rule, np.array(diag)) == pytest.approx(heat_trace(b, 0.05), rel=1e-10)


def test_mixed_tensor_circle(c400):
    # U = S0/2pi and grad grad' U = S2/2pi with both sums over Z
    P = mixed_tensor(c400, 0.1, [1.3], [1.3]).P
    assert P[0, 0] == pytest.approx(S0 * S2 / (4 * math.pi**2), rel=1e-12)
    assert P[0, 0] == pytest.approx(2 * 1.98943, abs=2e-4)


def test_mixed_tensor_integrates_to_K(c400):
    # the same normalization reproduces the lattice oracle for K
    rule = build_rule(CIRCLE, 2 * c400.max_degree)
    vals = np.array([mixed_tensor(c400, 0.05, p, [0.0]).P[0, 0] for p in rule.nodes])
    assert 2 * math.pi * integrate(rule, vals) == pytest.approx(oracles.circle_K(0.05), rel=1e-12)


def test_mixed_tensor_constant_only():
    b = enumerate_basis(CIRCLE, make_bundle(CIRCLE), 0.5)
    assert len(b) == 1
    assert np.all(mixed_tensor(b, 0.1, [0.3], [2.0]).P == 0)


def test_mixed_tensor_torus_qI():
    q, N, t = 0.4, 3, 0.2
    b1 = enumerate_basis(TORUS, make_bundle(TORUS), 60.0)
    bN = enumerate_basis(TORUS, make_bundle(TORUS, N, q * np.eye(N)), 60.0 + q)
    x, xp = [0.3, 1.1], [2.0, 4.5]
    P1 = mixed_tensor(b1, t, x, xp).P
    PN = mixed_tensor(bN, t, x, xp).P
    assert np.allclose(PN, N * math.exp(-2 * t * q) * P1, rtol=1e-12, atol=1e-14)


def test_mixed_tensor_psd_on_diagonal(rng):
    b = enumerate_basis(SPHERE, make_bundle(SPHERE), 120.0)
    for _ in range(10):
        p = [rng.uniform(0.2, 2.9), rng.uniform(0, 6.2)]
        P = mixed_tensor(b, 0.05, p, p).P
        assert np.allclose(P, P.T, atol=1e-12)
        assert np.linalg.eigvalsh(P).min() >= -1e-12


def test_scalar_mixed_tensor(c400):
    # pairs cos(kx), sin(kx) contribute k^2/pi each: S2/2pi over Z
    P = scalar_mixed_tensor(c400, 0.1, [0.5], [0.5]).P
    assert P[0, 0] == pytest.approx(S2 / (2 * math.pi), rel=1e-13)
    assert P[0, 0] == pytest.approx(2 * 2.230156, abs=2e-5)
    far = scalar_mixed_tensor(c400, 0.1, [0.5], [0.5 + math.pi]).P
    alt = float(np.sum((-1.0) ** K * K**2 * np.exp(-0.1 * K**2))) / (2 * math.pi)
    assert far[0, 0] == pytest.approx(alt, abs=1e-12)


def test_scalar_mixed_tensor_doubling(c400):
    # P~(2t) uses the squared weights of P~(t) mode by mode
    x, xp = [0.2], [1.7]
    _, D = c400.sample(np.array([x, xp]))
    w = np.exp(-0.1 * c400.eigenvalues)
    direct = float(np.sum(w**2 * D[0, :, 0, 0] * D[1, :, 0, 0]))
    assert scalar_mixed_tensor(c400, 0.2, x, xp).P[0, 0] == pytest.approx(direct, rel=1e-12, abs=1e-15)


def test_scalar_mixed_tensor_rank_error():
    b = enumerate_basis(CIRCLE, make_bundle(CIRCLE, 2), 10.0)
    with pytest.raises(InputError):
        scalar_mixed_tensor(b, 0.1, [0.0], [0.0])


def test_heat_trace_examples():
    b = enumerate_basis(CIRCLE, make_bundle(CIRCLE), 5000.0)
    assert heat_trace(b, 0.01) == pytest.approx(17.72454, abs=1e-4)
    s = enumerate_basis(SPHERE, make_bundle(SPHERE), 20000.0)
    assert heat_trace(s, 0.1) == pytest.approx(10.3403, abs=1e-3)
    small = enumerate_basis(SPHERE, make_bundle(SPHERE), 30.0)
    assert heat_trace(small, 1e-9) == pytest.approx(len(small), rel=1e-6)
    ts = np.linspace(0.01, 2, 50)
    vals = [heat_trace(b, t) for t in ts]
    assert all(v > 0 for v in vals) and np.all(np.diff(vals) < 0)


def test_heat_content_examples():
    b = enumerate_basis(CIRCLE, make_bundle(CIRCLE), 200.0)
    for t in (0.01, 0.5, 3.0):
        assert heat_content(b, t) == pytest.approx(2 * math.pi, abs=1e-10)
    bq = enumerate_basis(CIRCLE, make_bundle(CIRCLE, 1, [[0.7]]), 200.0)
    assert heat_content(bq, 0.5) == pytest.approx(oracles.circle_content(0.5, 0.7), abs=1e-6)
    s = enumerate_basis(SPHERE, make_bundle(SPHERE), 60.0)
    for t in (0.05, 1.0):
        assert heat_content(s, t) == pytest.approx(4 * math.pi, abs=1e-10)
    with pytest.raises(InputError):
        heat_content(enumerate_basis(CIRCLE, make_bundle(CIRCLE, 2), 10.0), 0.1)


def test_psi_residual_circle():
    b = enumerate_basis(CIRCLE, make_bundle(CIRCLE), 4e6)
    for t in np.geomspace(1e-4, 1e-2, 7):
        assert psi_residual(b, t, [0.0], [0.3]) / t <= 2
    assert psi_residual(b, 0.01, [1.0], [1.0]) <= 1e-8


def test_psi_residual_twisted_potential():
    b = enumerate_basis(CIRCLE, make_bundle(CIRCLE, 1, [[0.7]], [0.4]), 4e6)
    assert psi_residual(b, 1e-4, [0.0], [0.3]) <= 1e-8


def test_psi_residual_sphere():
    b = enumerate_basis(SPHERE, make_bundle(SPHERE), 1e5)
    r = psi_residual(b, 0.005, [1.0, 0.3], [1.2, 0.3])
    assert r <= 0.01
    # leading correction is t (R/6 + ...) with R/6 = 1/3, so the residual is O(t)
    r2 = psi_residual(b, 0.0025, [1.0, 0.3], [1.2, 0.3])
    assert 1.6 < r / r2 < 2.4


def test_psi_residual_domain_error():
    b = enumerate_basis(CIRCLE, make_bundle(CIRCLE), 100.0)
    with pytest.raises(DomainError):
        psi_residual(b, 0.01, [0.0], [math.pi])


def test_tail_bound_examples(c400):
    rep = tail_bound(c400, 0.05)
    assert rep.bound[0] < 1e-6
    b800 = enumerate_basis(CIRCLE, make_bundle(CIRCLE), 800.0)
    k4 = heat_determinant(c400, build_rule(CIRCLE, c400.max_degree), 0.05).real
    k8 = heat_determinant(b800, build_rule(CIRCLE, b800.max_degree), 0.05).real
    assert abs(k4 - k8) < rep.bound[0]
    for model in (CIRCLE, TORUS, SPHERE):
        for cutoff in (10.0, 25.0):
            b = enumerate_basis(model, make_bundle(model), cutoff)
            assert np.all(tail_bound(b, [1.0, 1.5, 4.0]).bound < 1e-4)


def test_tail_bound_monotone():
    b = enumerate_basis(TORUS, make_bundle(TORUS), 100.0)
    rep = tail_bound(b, np.geomspace(0.01, 3, 40))
    assert np.all(np.diff(rep.bound) < 0)
    vals = [tail_bound(enumerate_basis(CIRCLE, make_bundle(CIRCLE), c), 0.05).bound[0] for c in (50, 100, 200, 400, 800)]
    assert np.all(np.diff(vals) < 0)


def test_tail_bound_overestimates_truncation():
    full = enumerate_basis(TORUS, make_bundle(TORUS), 900.0)
    rule = build_rule(TORUS, 2 * full.max_degree)
    for cutoff, t in [(100.0, 0.05), (200.0, 0.03)]:
        b = enumerate_basis(TORUS, make_bundle(TORUS), cutoff)
        # both truncations are intended; the tail bound itself is under test
        k_cut = heat_determinant(b, rule, t, tol=math.inf).real
        err = abs(k_cut - heat_determinant(full, rule, t, tol=math.inf).real)
        assert err <= tail_bound(b, t).bound[0]


def test_truncation_error_carries_window():
    b = enumerate_basis(CIRCLE, make_bundle(CIRCLE), 10.0)
    with pytest.raises(TruncationError) as exc:
        heat_kernel(b, 1e-4, [0.0], [0.0], tol=1e-6)
    assert exc.value.t_min_valid == pytest.approx(t_min_valid(b, 1e-6))
    assert exc.value.t_min_valid > 1e-4
