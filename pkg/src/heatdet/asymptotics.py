"""Closed-form small-t coefficients and Gaussian moments.

Conventions, stated once because they differ between the expansions:

* heat determinant:  K(t) ~ prefactor(n, t) * sum_k t^k B_k, with B_k = vol * b_k
  (plain powers of t);
* heat trace:        Theta(t) ~ (4 pi t)^{-n/2} sum_k (-t)^k / k! A_k;
* heat content:      Pi(t) = sum_k (-t)^k / k! Pi_k.

So a positive potential enters b_1 with a minus sign and A_1 with a plus
sign.  All models have constant curvature and constant Q, so densities are
uniform and integrals are volume times density.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import InputError
from .models import BundleModel, ManifoldModel


@dataclass(frozen=True)
class CoeffSet:
    b: dict = field(default_factory=dict)
    B: dict = field(default_factory=dict)
    A: dict = field(default_factory=dict)
    Pi: dict = field(default_factory=dict)


def monomials(model: ManifoldModel, bundle: BundleModel) -> dict:
    """Local invariants of the model/bundle pair, keyed by monomial name."""
    c = model.curvature
    Q = np.asarray(bundle.Q)
    trQ = float(np.trace(Q).real)
    return {
        "R": c.R,
        "R^2": c.R**2,
        "LapR": c.LapR,
        "Ric^2": c.RicSq,
        "Riem^2": c.RiemSq,
        "trRR": bundle.curvSq,
        "R trQ": c.R * trQ,
        "tr LapQ": 0.0,  # Q is constant on every model
        "trQ": trQ,
        "trQ^2": float(np.trace(Q @ Q).real),
        "(trQ)^2": trQ**2,
    }


# Each entry: monomial -> (power of N relative to N^n, coefficient as a function of n).
B_TABLE = {
    0: {
        "1": (0, lambda n: Fraction(1, 2)),
    },
    1: {
        "R": (0, lambda n: Fraction(12 * n**2 - n + 10, 72 * n)),
        "trQ": (-1, lambda n: Fraction(-n)),
    },
    2: {
        "R^2": (0, lambda n: Fraction(20 * n**4 - 8 * n**3 - 11 * n**2 - 6 * n + 6, 144 * n**2)),
        "LapR": (0, lambda n: Fraction(4 * n**3 + 11 * n**2 + n - 4, 120 * n**2)),
        "Ric^2": (0, lambda n: Fraction(-24 * n**3 + 84 * n**2 - 576 * n + 385, 4320 * n**2)),
        "Riem^2": (0, lambda n: Fraction(8 * n**3 - 8 * n**2 - 18 * n + 15, 1440 * n**2)),
        "trRR": (-1, lambda n: Fraction(n**3 - n**2 + 3 * n - 12, 12 * n**2)),
        "R trQ": (-1, lambda n: Fraction(-12 * n**3 - 4 * n**2 + n + 2, 12 * n)),
        "tr LapQ": (-1, lambda n: Fraction(-(n + 2), 6)),
        "trQ^2": (-1, lambda n: Fraction(n)),
        "(trQ)^2": (-2, lambda n: Fraction(n * (n - 1))),
    },
}

# Density of A_k: monomial -> coefficient (N enters through traces or explicitly).
A_TABLE = {
    0: {"N": 1},
    1: {"trQ": 1, "N R": Fraction(-1, 6)},
    2: {
        "trQ^2": 1,
        "R trQ": Fraction(-1, 3),
        "trRR": Fraction(1, 6),
        "N R^2": Fraction(1, 36),
        "N Ric^2": Fraction(-1, 90),
        "N Riem^2": Fraction(1, 90),
    },
}


def b_coeffs(model: ManifoldModel, bundle: BundleModel) -> dict:
    """Densities b_{-1}..b_2 of the heat-determinant expansion."""
    n, N = model.dim, bundle.rank
    mono = dict(monomials(model, bundle), **{"1": 1.0})
    out = {-1: 0.0}
    for k, table in B_TABLE.items():
        total = 0.0
        for name, (npow, coef) in table.items():
            total += float(coef(n)) * float(N) ** (n + npow) * mono[name]
        out[k] = total
    return out


def B_coeffs(model: ManifoldModel, bundle: BundleModel) -> dict:
    return {k: model.volume * v for k, v in b_coeffs(model, bundle).items()}


def a_coeffs(model: ManifoldModel, bundle: BundleModel) -> dict:
    """Integrated heat-trace coefficients A_0..A_2."""
    N = bundle.rank
    mono = monomials(model, bundle)
    vals = {
        "N": N,
        "trQ": mono["trQ"],
        "N R": N * mono["R"],
        "trQ^2": mono["trQ^2"],
        "R trQ": mono["R trQ"],
        "trRR": mono["trRR"] / 1.0,
        "N R^2": N * mono["R^2"],
        "N Ric^2": N * mono["Ric^2"],
        "N Riem^2": N * mono["Riem^2"],
    }
    return {k: model.volume * sum(float(c) * vals[name] for name, c in table.items())
            for k, table in A_TABLE.items()}


def pi_coeffs(model: ManifoldModel, bundle: BundleModel, kmax: int) -> dict:
    """Heat-content coefficients Pi_0..Pi_kmax for a constant scalar potential."""
    if bundle.rank != 1:
        raise InputError("heat content coefficients need a scalar operator")
    q = float(np.asarray(bundle.Q).real.ravel()[0])
    # L^k 1 = q^k for constant q, so every Pi_k = vol q^k
    return {k: model.volume * q**k for k in range(kmax + 1)}


def coeff_set(model: ManifoldModel, bundle: BundleModel, kmax_pi: int = 4) -> CoeffSet:
    return CoeffSet(
        b=b_coeffs(model, bundle),
        B=B_coeffs(model, bundle),
        A=a_coeffs(model, bundle),
        Pi=pi_coeffs(model, bundle, kmax_pi) if bundle.rank == 1 else {},
    )


def prefactor(n: int, t):
    """(4 pi)^{-n^2} (pi/2n)^{n/2} t^{-n(n+1/2)}."""
    return (4 * math.pi) ** (-n * n) * (math.pi / (2 * n)) ** (n / 2) * np.asarray(t, dtype=float) ** (-n * (n + 0.5))


def predicted_K(model: ManifoldModel, bundle: BundleModel, t, kmax: int = 2):
    if kmax > 2:
        raise InputError("closed-form coefficients are known up to k = 2")
    t = np.asarray(t, dtype=float)
    B = B_coeffs(model, bundle)
    series = sum(B[k] * t**k for k in range(kmax + 1))
    out = prefactor(model.dim, t) * series
    return float(out) if out.ndim == 0 else out


def predicted_trace(model: ManifoldModel, bundle: BundleModel, t, kmax: int = 2):
    A = a_coeffs(model, bundle)
    t = np.asarray(t, dtype=float)
    s = sum((-t) ** k / math.factorial(k) * A[k] for k in range(kmax + 1))
    out = (4 * math.pi * t) ** (-model.dim / 2) * s
    return float(out) if out.ndim == 0 else out


def predicted_content(model: ManifoldModel, bundle: BundleModel, t, kmax: int = 6):
    Pi = pi_coeffs(model, bundle, kmax)
    t = np.asarray(t, dtype=float)
    out = sum((-t) ** k / math.factorial(k) * Pi[k] for k in range(kmax + 1))
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# Gaussian moments


def _pairings(items: tuple):
    if not items:
        yield ()
        return
    first, rest = items[0], items[1:]
    for i in range(len(rest)):
        for tail in _pairings(rest[:i] + rest[i + 1:]):
            yield ((first, rest[i]),) + tail


def gaussian_moment(n_dim: int, indices: Sequence[int], A=None):
    """Moment of ``xi^{i_1} ... xi^{i_m}`` under ``exp(-<xi, A xi>)`` (normalized).

    Indices are 1-based.  The default ``A = (n/2) I`` is the measure
    ``exp(-n |xi|^2 / 2)`` so that ``<xi^mu xi^nu> = delta/n``.  Even moments
    are ``(2k)!/(2^{2k} k!) A^{(i1 i2} ... A^{i_{2k-1} i_{2k})}`` with the
    inverse matrix, evaluated as full symmetrization over index orderings.
    Exact rationals are returned whenever ``A`` is rational.
    """
    idx = tuple(int(i) - 1 for i in indices)
    if any(i < 0 or i >= n_dim for i in idx):
        raise InputError("indices must lie in 1..n_dim")
    m = len(idx)
    if m % 2:
        return Fraction(0)
    if A is None:
        Ainv = [[Fraction(2, n_dim) if i == j else Fraction(0) for j in range(n_dim)] for i in range(n_dim)]
    else:
        A = np.asarray(A)
        exact = A.dtype == object
        if A.shape != (n_dim, n_dim) or not (np.all(A == A.T) if exact else np.allclose(A, A.T)):
            raise InputError("A must be a symmetric n_dim x n_dim matrix")
        if exact:
            Ainv = _fraction_inverse([[Fraction(v) for v in row] for row in A])
        else:
            Ainv = np.linalg.inv(A).tolist()
    k = m // 2
    # complete symmetrization over all m! orderings; (2k)!/(4^k k!) times the
    # average reduces to the plain sum divided by 4^k k!
    total = 0
    for perm in itertools.permutations(idx):
        term = 1
        for j in range(k):
            term = term * Ainv[perm[2 * j]][perm[2 * j + 1]]
        total = total + term
    return total * Fraction(1, 4**k * math.factorial(k))


def gaussian_moment_pairings(n_dim: int, indices: Sequence[int], A=None):
    """Same moment via the sum over perfect pairings (Isserlis)."""
    idx = tuple(int(i) - 1 for i in indices)
    if len(idx) % 2:
        return 0.0
    cov = np.linalg.inv(np.eye(n_dim) * n_dim / 2 if A is None else np.asarray(A, dtype=float)) / 2
    return float(sum(math.prod(cov[a][b] for a, b in p) for p in _pairings(idx)))


def _fraction_inverse(M):
    n = len(M)
    aug = [row[:] + [Fraction(int(i == j)) for j in range(n)] for i, row in enumerate(M)]
    for c in range(n):
        p = next(r for r in range(c, n) if aug[r][c] != 0)
        aug[c], aug[p] = aug[p], aug[c]
        piv = aug[c][c]
        aug[c] = [v / piv for v in aug[c]]
        for r in range(n):
            if r != c and aug[r][c] != 0:
                f = aug[r][c]
                aug[r] = [a - f * b for a, b in zip(aug[r], aug[c])]
    return [row[n:] for row in aug]
