"""Product quadrature rules on the model manifolds.

A rule with band limit ``b`` integrates exactly every product of two
eigenfunctions of degree at most ``b``:

* circle and torus: a uniform grid with ``2b+1`` points per cycle;
* sphere: Gauss-Legendre in ``cos(theta)`` with ``b+1`` nodes times a
  uniform grid of ``2b+1`` longitudes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .models import Kind, ManifoldModel
from .parallel import map_chunks, pairwise_sum


@dataclass(frozen=True)
class QuadratureRule:
    model: ManifoldModel
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    band_limit: int
    shape: tuple[int, ...] = ()

    def __len__(self) -> int:
        return len(self.weights)


def build_rule(model: ManifoldModel, band_limit: int) -> QuadratureRule:
    band_limit = int(band_limit)
    if band_limit < 1:
        raise InputError("band_limit must be >= 1")
    m = 2 * band_limit + 1
    if model.kind is Kind.SPHERE:
        r = model.radius
        x, w = np.polynomial.legendre.leggauss(band_limit + 1)
        theta = np.arccos(x[::-1])
        wt = w[::-1]
        phi = 2 * math.pi * np.arange(m) / m
        T, Ph = np.meshgrid(theta, phi, indexing="ij")
        nodes = np.column_stack([T.ravel(), Ph.ravel()])
        weights = (r * r * 2 * math.pi / m) * np.repeat(wt, m)
        shape = (band_limit + 1, m)
    else:
        axes = [L * np.arange(m) / m for L in model.lengths]
        grids = np.meshgrid(*axes, indexing="ij")
        nodes = np.column_stack([g.ravel() for g in grids])
        weights = np.full(len(nodes), model.volume / m**model.dim)
        shape = (m,) * model.dim
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(model, nodes, weights, band_limit, shape)


def _values(rule: QuadratureRule, f, nodes=None):
    nodes = rule.nodes if nodes is None else nodes
    return np.asarray(f(nodes)) if callable(f) else np.asarray(f)


def _scalar(v):
    v = v.item() if hasattr(v, "item") else v
    return complex(v) if isinstance(v, complex) else float(v)


def integrate(rule: QuadratureRule, f):
    """Sum of ``w_i f(node_i)``; ``f`` is a vectorized callable or node values."""
    vals = _values(rule, f)
    if vals.shape[0] != len(rule):
        raise InputError("integrand must provide one value per node")
    return _scalar(pairwise_sum(rule.weights * vals))


def integrate_pair(rule_a: QuadratureRule, rule_b: QuadratureRule, f2, threads: int | None = None):
    """Double sum ``sum_ij w_i w_j f2(a_i, b_j)``.

    ``f2(A, y)`` receives all nodes of ``rule_a`` and a single node ``y`` of
    ``rule_b`` and returns one value per row of ``A``.
    """

    def rows(lo, hi):
        return np.array([pairwise_sum(rule_a.weights * np.asarray(f2(rule_a.nodes, rule_b.nodes[j])))
                         for j in range(lo, hi)])

    inner = np.concatenate(map_chunks(rows, len(rule_b), 64, threads))
    return _scalar(pairwise_sum(rule_b.weights * inner))


def integrate_homogeneous(rule: QuadratureRule, f2, ref=None):
    """``vol * integral of f2(x, ref) dv(x)``, exact for two-point invariant ``f2``.

    Valid on the model manifolds because their isometry groups act
    transitively (translations on flat models, rotations on the sphere).
    """
    ref = rule.model.reference_point() if ref is None else np.asarray(ref, dtype=float)
    return _scalar(rule.model.volume * pairwise_sum(rule.weights * _values(rule, lambda X: f2(X, ref))))
