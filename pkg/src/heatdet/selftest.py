"""Fast built-in property checks run by ``heatdet selftest``."""

from __future__ import annotations

import logging
import math
from fractions import Fraction

import numpy as np

from . import asymptotics, invariants, kernel
from .models import make_bundle, make_model
from .quadrature import build_rule
from .spectrum import enumerate_basis

log = logging.getLogger("heatdet")


def _circle(cutoff=2500.0, q=0.0):
    m = make_model("circle", 2 * math.pi)
    b = make_bundle(m, 1, [[q]])
    basis = enumerate_basis(m, b, cutoff)
    return m, b, basis, build_rule(m, basis.max_degree)


def check_circle_oracle():
    _, _, basis, rule = _circle()
    ks = np.arange(-200, 201)
    worst = 0.0
    for t in (0.05, 0.1):
        ref = float(np.sum(ks**2 * np.exp(-2 * t * ks**2)))
        k = invariants.heat_determinant(basis, rule, t).real
        worst = max(worst, abs(k - ref) / ref)
    return worst <= 1e-10, f"max relative error {worst:.2e}"


def check_hermiticity():
    _, _, basis, _ = _circle(400.0)
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(20):
        x, y = rng.uniform(0, 2 * math.pi, (2, 1))
        a = kernel.heat_kernel(basis, 0.1, x, y).U
        b = kernel.heat_kernel(basis, 0.1, y, x).U
        worst = max(worst, float(np.max(np.abs(a.conj().T - b))))
    return worst == 0.0, f"max |U(x,y)^H - U(y,x)| = {worst:.1e}"


def check_scalar_vanishing():
    m = make_model("torus", [2 * math.pi, 2 * math.pi])
    basis = enumerate_basis(m, make_bundle(m), 40.0)
    rule = build_rule(m, basis.dim * basis.max_degree)
    # the identity holds for every truncation, so the tail bound is irrelevant here
    d = invariants.scalar_heat_determinant(basis, rule, 0.3, tol=math.inf)
    ok = abs(d.value) <= 1e-8 * max(d.scale, 1e-300)
    return ok, f"|K~| = {abs(d.value):.1e} against integrand scale {d.scale:.2e}"


def check_det_expansion():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(1, 6))
        A, B = rng.standard_normal((2, n, n))
        B += n * np.eye(n)
        ref = np.linalg.det(A + B)
        worst = max(worst, abs(invariants.det_sum_expansion(A, B) - ref) / abs(ref))
    return worst <= 1e-11, f"max relative error {worst:.1e}"


def check_gaussian_moments():
    ok = asymptotics.gaussian_moment(2, [1, 1]) == Fraction(1, 2)
    ok &= asymptotics.gaussian_moment(2, [1, 1, 2, 2]) == Fraction(1, 4)
    ok &= asymptotics.gaussian_moment(3, [1, 2, 3]) == 0
    p = float(asymptotics.gaussian_moment(3, [1, 1, 2, 2, 3, 3]))
    q = asymptotics.gaussian_moment_pairings(3, [1, 1, 2, 2, 3, 3])
    return bool(ok and abs(p - q) < 1e-15), "closed forms and pairing sums agree" if ok else "mismatch"


def check_zeta_closed_form():
    _, _, basis, rule = _circle(400.0)
    a, c, s, lam = 1.5, 2.0, 6.0, -1.0

    def lead(t):
        return c * t**-a

    z = invariants.zeta(basis, rule, s, lam, 0.05, k_func=lead, series=({0: c}, a))
    ref = c * math.gamma(s - a) / math.gamma(s) * (-lam) ** (a - s)
    err = abs(z.value - ref) / ref
    return err <= 1e-9, f"relative error {err:.1e}"


def check_potential_factorization():
    _, _, b0, rule = _circle()
    _, _, bq, _ = _circle(q=0.7)
    t = 0.1
    k0 = invariants.heat_determinant(b0, rule, t).real
    kq = invariants.heat_determinant(bq, rule, t).real
    err = abs(kq - math.exp(-2 * 0.7 * t) * k0) / kq
    return err <= 1e-12, f"relative error {err:.1e}"


CHECKS = {
    "circle lattice oracle": check_circle_oracle,
    "kernel hermiticity": check_hermiticity,
    "scalar heat determinant vanishes": check_scalar_vanishing,
    "determinant sum expansion": check_det_expansion,
    "gaussian moments": check_gaussian_moments,
    "zeta closed form": check_zeta_closed_form,
    "potential factorization": check_potential_factorization,
}


def run_selftest(echo=print) -> int:
    failed = 0
    for name, fn in CHECKS.items():
        try:
            ok, detail = fn()
        except Exception as exc:  # any crash is a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        failed += not ok
        echo(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return 0 if failed == 0 else 2
