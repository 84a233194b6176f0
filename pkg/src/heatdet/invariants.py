"""Heat determinant K(t), its scalar variant, correlation invariants and zeta.

All determinants are of frame components and are integrated against
``dv dv'``, which equals the coordinate form ``det P_coord dx dx'`` in any
chart and is globally defined on the sphere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy import integrate as sp_integrate
from scipy.special import gamma, hyp1f1

from .errors import HeatdetError, InputError
from .kernel import (
    _check,
    batched_det,
    determinant_tail,
    channel_pair_tensors,
    pair_tensors,
    scalar_pair_tensors,
    weights,
)
from .models import Kind
from .parallel import map_chunks, pairwise_sum
from .quadrature import QuadratureRule, build_rule
from .spectrum import SpectralBasis, enumerate_basis

EPS = np.finfo(float).eps
# relative tail bound enforced when no tol is given; math.inf disables the check
DEFAULT_TOL = 1e-6
# elements per sampled chunk, sized for a few hundred MB at most
_CHUNK_ELEMENTS = 6_000_000


@dataclass(frozen=True)
class DetValue:
    value: complex
    t: float
    tail_bound: float
    quadrature_estimate: float
    method: str = "full"
    scale: float = 0.0

    @property
    def real(self) -> float:
        return float(np.real(self.value))


@dataclass(frozen=True)
class CInvariant:
    k_ids: tuple
    l_ids: tuple
    value: complex


# ---------------------------------------------------------------------------
# integration engine


def _required_band(basis: SpectralBasis) -> int:
    # det P is a product of n entries, each quadratic in the modes at x
    return basis.dim * basis.max_degree


def _choose_method(basis: SpectralBasis, rule: QuadratureRule, method: str) -> str:
    if method not in ("auto", "full", "homogeneous"):
        raise InputError(f"unknown integration method {method!r}")
    if method != "auto":
        return method
    P, M = len(rule), len(basis)
    work = P * P * M * basis.rank**2
    mem = P * M * basis.rank * (1 + basis.dim)
    return "full" if work <= 3e8 and mem <= _CHUNK_ELEMENTS else "homogeneous"


def _chunk_size(basis: SpectralBasis) -> int:
    per_point = len(basis) * basis.rank * (1 + basis.dim)
    return max(16, _CHUNK_ELEMENTS // max(per_point, 1))


class _Integrand:
    """Pairs a sampler (points -> per-point arrays) with the det evaluation."""

    def __init__(self, sampler, fn):
        self.sample = sampler
        self.fn = fn

    def __call__(self, W, samples, ref):
        return self.fn(W, *samples, *ref)


def _det_integrand(basis, assembly: str = "auto") -> _Integrand:
    if assembly not in ("auto", "channel", "general"):
        raise InputError(f"unknown assembly {assembly!r}")
    if assembly == "channel" and basis.mixing:
        raise InputError("channel assembly needs an unmixed basis")
    if assembly == "general" or basis.mixing:
        return _Integrand(basis.sample,
                          lambda W, V, D, v, d: batched_det(pair_tensors(basis, W, V, D, v, d)))
    return _Integrand(basis.sample_scalar,
                      lambda W, f, df, fr, dr: batched_det(channel_pair_tensors(basis, W, f, df, fr, dr)))


def _scalar_det_integrand(basis) -> _Integrand:
    return _Integrand(basis.sample, lambda W, V, D, v, d: batched_det(scalar_pair_tensors(basis, W, D, d)))


def _integrand_rows(basis, W, rule, ref, integrand, threads):
    """Integrand at every rule node against a single reference sample; (T, P)."""

    def work(lo, hi):
        return integrand(W, integrand.sample(rule.nodes[lo:hi]), ref)

    return np.concatenate(map_chunks(work, len(rule), _chunk_size(basis), threads), axis=1)


def _integrate_det(basis, rule, ts, integrand, method, threads):
    """Returns (values (T,), abs-scale (T,)) of the double integral."""
    W = weights(basis, ts)
    if method == "homogeneous":
        x0 = basis.model.reference_point()[None, :]
        ref = tuple(a[0] for a in integrand.sample(x0))
        rows = _integrand_rows(basis, W, rule, ref, integrand, threads)
        vol = basis.model.volume
        vals = vol * pairwise_sum(rule.weights[None, :] * rows, axis=1)
        scale = vol * pairwise_sum(rule.weights[None, :] * np.abs(rows), axis=1)
        return vals, scale
    S = integrand.sample(rule.nodes)

    def col(lo, hi):
        out = np.empty((len(ts), hi - lo), dtype=complex)
        sc = np.empty((len(ts), hi - lo))
        for j in range(lo, hi):
            r = integrand(W, S, tuple(a[j] for a in S))
            out[:, j - lo] = pairwise_sum(rule.weights[None, :] * r, axis=1)
            sc[:, j - lo] = pairwise_sum(rule.weights[None, :] * np.abs(r), axis=1)
        return out, sc

    parts = map_chunks(col, len(rule), 32, threads)
    inner = np.concatenate([p[0] for p in parts], axis=1)
    inner_sc = np.concatenate([p[1] for p in parts], axis=1)
    return (pairwise_sum(rule.weights[None, :] * inner, axis=1),
            pairwise_sum(rule.weights[None, :] * inner_sc, axis=1))


def _finish(values, scales, ts, basis, method, check_imag=True, use_scale=False):
    out = []
    for val, sc, t in zip(values, scales, ts):
        val = complex(val)
        ref = abs(val.real) if not use_scale else max(abs(val.real), sc)
        if check_imag and abs(val.imag) > 1e-9 * max(ref, 1e-300):
            raise HeatdetError(f"heat determinant has a non-negligible imaginary part at t={t:g}: {val}")
        qe = 4 * EPS * math.sqrt(max(len(basis), 1)) * float(sc)
        out.append(DetValue(val, float(t), determinant_tail(basis, float(t)), qe, method, float(sc)))
    return out


def heat_determinant_many(basis: SpectralBasis, rule: QuadratureRule, ts, method: str = "auto",
                          tol: float | None = None, threads: int | None = None,
                          assembly: str = "auto") -> list[DetValue]:
    """K(t) for several times sharing one pass over the quadrature nodes.

    ``assembly='channel'`` (the default for unmixed bases) uses
    ``P = sum_c u_c g_c`` over Q-eigenchannels; ``'general'`` contracts the
    full fiber matrices and is the path that sees the Q eigenframe.
    Every t must meet the relative tail bound ``tol`` (default DEFAULT_TOL),
    otherwise TruncationError names the smallest valid t.
    """
    ts = [float(t) for t in np.atleast_1d(ts)]
    if rule.model is not basis.model and rule.model != basis.model:
        raise InputError("rule and basis live on different manifolds")
    if rule.band_limit < _required_band(basis):
        raise InputError(
            f"band limit {rule.band_limit} too small: det P needs at least {_required_band(basis)}"
            f" (dimension x max degree)"
        )
    for t in ts:
        _check(basis, t, DEFAULT_TOL if tol is None else tol)
    method = _choose_method(basis, rule, method)
    vals, scales = _integrate_det(basis, rule, ts, _det_integrand(basis, assembly), method, threads)
    return _finish(vals, scales, ts, basis, method)


def heat_determinant(basis: SpectralBasis, rule: QuadratureRule, t: float, method: str = "auto",
                     tol: float | None = None, cross_check: bool = False,
                     threads: int | None = None) -> DetValue:
    """``K(t) = integral over M x M of det P_{mu nu'}(t; x, x') dv dv'``.

    ``method='homogeneous'`` fixes x' at a reference point and multiplies by
    the volume; with ``cross_check`` that shortcut is first compared with the
    full product rule on a low-resolution basis.
    """
    if cross_check:
        homogeneous_cross_check(basis, t)
    return heat_determinant_many(basis, rule, [t], method, tol, threads)[0]


def homogeneous_cross_check(basis: SpectralBasis, t: float, max_degree: int = 4, rtol: float = 1e-9):
    """Compare full and homogeneous integration on a small version of ``basis``."""
    model, bundle = basis.model, basis.bundle
    small_cut = min(basis.cutoff, _cutoff_for_degree(basis, max_degree))
    small = enumerate_basis(model, bundle, small_cut)
    rule = build_rule(model, max(1, _required_band(small)))
    # the small basis is truncated on purpose; only the two paths are compared
    full = heat_determinant_many(small, rule, [t], method="full", tol=math.inf)[0].value
    homo = heat_determinant_many(small, rule, [t], method="homogeneous", tol=math.inf)[0].value
    if abs(full - homo) > rtol * max(abs(full), 1e-300):
        raise HeatdetError(f"homogeneous path disagrees with full rule: {homo} vs {full}")
    return full, homo


def _cutoff_for_degree(basis: SpectralBasis, degree: int) -> float:
    model = basis.model
    if model.kind is Kind.SPHERE:
        lam = degree * (degree + 1) / model.radius**2
    else:
        lam = (2 * math.pi * degree / max(model.lengths)) ** 2
    return lam + float(np.min(basis.q)) + 1e-9


def scalar_heat_determinant(basis: SpectralBasis, rule: QuadratureRule, t: float, method: str = "auto",
                            tol: float | None = None, threads: int | None = None) -> DetValue:
    """Integral of ``det grad_mu grad_nu' U`` over M x M (scalar operators)."""
    if basis.rank != 1:
        raise InputError("the scalar heat determinant needs a rank-1 bundle")
    # each entry is linear in the modes, so the degree requirement halves
    need = max(1, (basis.dim * basis.max_degree + 1) // 2)
    if rule.band_limit < need:
        raise InputError(f"band limit {rule.band_limit} too small, need {need}")
    _check(basis, t, DEFAULT_TOL if tol is None else tol)
    method = _choose_method(basis, rule, method)
    vals, scales = _integrate_det(basis, rule, [t], _scalar_det_integrand(basis), method, threads)
    return _finish(vals, scales, [t], basis, method, use_scale=True)[0]


# ---------------------------------------------------------------------------
# determinants


def det_small(M) -> complex:
    """Determinant by Gaussian elimination with partial pivoting."""
    A = np.array(M, dtype=complex if np.iscomplexobj(M) else float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InputError("det_small needs a square matrix")
    n = A.shape[0]
    if n > 8:
        raise InputError("det_small is meant for matrices up to 8 x 8")
    det = 1.0
    for k in range(n):
        p = k + int(np.argmax(np.abs(A[k:, k])))
        if A[p, k] == 0:
            return A.dtype.type(0)
        if p != k:
            A[[k, p]] = A[[p, k]]
            det = -det
        det *= A[k, k]
        A[k + 1:, k:] -= np.outer(A[k + 1:, k] / A[k, k], A[k, k:])
    return det


def elementary_symmetric(C) -> list:
    """``e_k(C)``, the fully antisymmetrized k-fold products of C, for k = 0..n.

    ``e_k`` is evaluated as the sum of principal k x k minors; Newton's
    power-trace identities lose several digits to cancellation here.
    """
    C = np.asarray(C)
    n = C.shape[0]
    e = [C.dtype.type(1)]
    for k in range(1, n + 1):
        e.append(sum(det_small(C[np.ix_(S, S)]) for S in combinations(range(n), k)))
    return e


def det_sum_expansion(A, B) -> complex:
    """``det(A + B) = det B * sum_k A^{b_1}_{[a_1} ... A^{b_k}_{a_k]} (B^-1)^{a_1}_{b_1} ...``."""
    A = np.asarray(A)
    B = np.asarray(B)
    if A.shape != B.shape or A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InputError("A and B must be square matrices of equal size")
    dB = det_small(B)
    if dB == 0:
        raise InputError("B must be invertible")
    C = np.linalg.solve(B, A)
    return dB * sum(elementary_symmetric(C))


# ---------------------------------------------------------------------------
# correlation invariants


def _rule_for(basis: SpectralBasis, rule: QuadratureRule | None, factor: int,
              degree: int | None = None) -> QuadratureRule:
    deg = basis.max_degree if degree is None else degree
    need = max(1, -(-factor * deg // 2))
    if rule is None:
        return build_rule(basis.model, need)
    return rule


def phi_tilde(basis: SpectralBasis, rule: QuadratureRule | None, k_ids) -> complex:
    """Integral of ``d phi_{k_1} ^ ... ^ d phi_{k_n}`` (scalar bundles)."""
    if basis.rank != 1:
        raise InputError("phi_tilde is defined for scalar operators")
    k_ids = tuple(int(k) for k in k_ids)
    if len(k_ids) != basis.dim:
        raise InputError(f"need {basis.dim} mode ids")
    if len(set(k_ids)) < len(k_ids):
        return 0.0
    rule = _rule_for(basis, rule, basis.dim)
    _, D = basis.sample(rule.nodes)
    idx = [basis.index_of(k) for k in k_ids]
    G = D[:, idx, 0, :]  # (P, n, n) rows = modes, columns = frame index
    return _integrate_dets(rule, G)


def _integrate_dets(rule, G):
    vals = batched_det(G)
    out = complex(pairwise_sum(rule.weights * vals))
    return out.real if out.imag == 0 else out


def one_form(basis: SpectralBasis, V, D, k: int, l: int) -> np.ndarray:
    """``Phi^k_{l, mu} = <phi_k, grad_mu phi_l>`` at the sampled points, (P, n)."""
    i, j = basis.index_of(k), basis.index_of(l)
    return np.einsum("pa,pam->pm", np.conj(V[:, i]), D[:, j])


def c_invariant(basis: SpectralBasis, rule: QuadratureRule | None, k_ids, l_ids) -> CInvariant:
    """``C^{k_1..k_n}_{l_1..l_n} = integral Phi^{k_1}_{l_1} ^ ... ^ Phi^{k_n}_{l_n}``."""
    k_ids, l_ids = tuple(int(k) for k in k_ids), tuple(int(l) for l in l_ids)
    n = basis.dim
    if len(k_ids) != n or len(l_ids) != n:
        raise InputError(f"need {n} upper and {n} lower mode ids")
    rule = _rule_for(basis, rule, 2 * n)
    V, D = basis.sample(rule.nodes)
    G = np.stack([one_form(basis, V, D, k, l) for k, l in zip(k_ids, l_ids)], axis=1)
    return CInvariant(k_ids, l_ids, _integrate_dets(rule, G))


def _sup_sq(basis: SpectralBasis, geom) -> np.ndarray:
    """Upper bound on ``sup_x |phi(x)|^2`` for modes of geometric eigenvalue ``geom``."""
    model = basis.model
    geom = np.asarray(geom, dtype=float)
    if model.kind is Kind.SPHERE:
        # (2l+1)/(4 pi r^2) with 2l+1 = sqrt(4 lam r^2 + 1) <= 2 lam r^2 + 1
        r2 = model.radius**2
        return (2 * geom * r2 + 1) / (4 * math.pi * r2)
    return np.full_like(geom, 2.0**model.dim / model.volume)


def _wedge_norm_sq(X, Y, w) -> float:
    """``sum_ab |C_ab|^2`` for ``C = M - M^T``, ``M_ab = sum_p w_p X_pa Y_pb``.

    With many more pairs than nodes the sum is taken through node-by-node
    Gram matrices, ``2 sum_pq w_p w_q (GX GY - H conj(H^T))_pq``.
    """
    P, A = X.shape
    if A <= 2 * P:
        Xw = X * w[:, None]
        block = max(1, 4_000_000 // A)
        parts = []
        for lo in range(0, A, block):
            hi = min(lo + block, A)
            M = Xw[:, lo:hi].T @ Y
            Mt = Y[:, lo:hi].T @ Xw
            parts.append(np.sum(np.abs(M - Mt) ** 2))
        return float(pairwise_sum(np.array(parts)))
    GX = X @ X.conj().T
    GY = Y @ Y.conj().T
    H = X @ Y.conj().T
    ww = np.outer(w, w)
    total = ww * (GX * GY - H * H.conj().T)
    return float(2 * pairwise_sum(pairwise_sum(total.real, axis=1)))


def k_from_spectral(basis: SpectralBasis, rule: QuadratureRule | None, t: float,
                    budget: float = 1e-14, max_entries: int = 50_000_000) -> DetValue:
    """``K(t) = (1/n!) sum exp(-t sum(lam_k + lam_l)) |C|^2`` truncated by weight.

    A pair ``(k, l)`` is kept when ``exp(-t (lam_k + lam_l))`` is at least
    ``budget`` times the largest pair weight, so a budget above 1 keeps
    nothing.  The returned ``tail_bound`` covers every dropped tuple,
    including those beyond the basis: Cauchy-Schwarz gives
    ``|C|^2 <= prod_i ||Phi^{k_i}_{l_i}||^2`` and
    ``||Phi^k_l||^2 <= sup|phi_k|^2 lam_l`` (for n = 1 simply ``lam_l``),
    hence the bound ``(S_all^n - S_kept^n)/n!`` on the weighted pair sums S.

    Raises InputError when the sampled pair forms would exceed
    ``max_entries`` values; a larger budget shrinks the pair set.
    """
    n = basis.dim
    if n > 2:
        raise InputError("the spectral form is only implemented for n = 1, 2")
    if t <= 0:
        raise InputError("t must be positive")
    lam, geo = basis.eigenvalues, basis.geometric
    wk = np.exp(-t * lam)
    thresh = budget * math.exp(-2 * t * float(lam.min()))
    tail = basis.tail_sums(t)
    if n == 1:
        beta = np.ones_like(lam)
        beta_all = float(np.sum(wk)) + tail["w1"]
    else:
        beta = _sup_sq(basis, geo)
        if basis.model.kind is Kind.SPHERE:
            r2 = basis.model.radius**2
            beta_tail = (2 * r2 * tail["g1"] + tail["w1"]) / (4 * math.pi * r2)
        else:
            beta_tail = tail["w1"] * 2.0**n / basis.model.volume
        beta_all = float(np.sum(wk * beta)) + beta_tail
    S_all = beta_all * (float(np.sum(wk * geo)) + tail["g1"])
    keep = (np.outer(wk, wk) >= thresh) & (geo[None, :] > 0)
    pi_, pj = np.nonzero(keep)
    S_in = float(np.sum(wk[pi_] * beta[pi_] * wk[pj] * geo[pj]))
    neglected = max(S_all**n - S_in**n, 0.0) / math.factorial(n)
    if len(pi_) == 0:
        return DetValue(0.0, float(t), neglected, 0.0, "spectral")
    # the integrand only involves kept modes, so their degree fixes the rule
    rule = _rule_for(basis, rule, 2 * n, int(max(basis.degrees[pi_].max(), basis.degrees[pj].max())))
    if len(pi_) * len(rule.weights) * basis.rank > max_entries:
        raise InputError(f"{len(pi_)} kept pairs on {len(rule.weights)} nodes exceed the memory cap; "
                         f"raise the budget above {budget:g}")
    V, D = basis.sample(rule.nodes)
    # Phi^k_l,mu at the nodes for the kept pairs only, (P, A) per direction
    forms = [pairwise_sum(np.conj(V[:, pi_, :]) * D[..., m][:, pj, :], axis=2) if basis.rank > 1
             else np.conj(V[:, pi_, 0]) * D[:, pj, 0, m] for m in range(n)]
    if basis.is_real:
        forms = [f.real for f in forms]
    pw = wk[pi_] * wk[pj]
    w = rule.weights
    if n == 1:
        C = pairwise_sum(w[:, None] * forms[0], axis=0)
        value = float(pairwise_sum(pw * np.abs(C) ** 2))
    else:
        value = 0.5 * _wedge_norm_sq(forms[0] * np.sqrt(pw), forms[1] * np.sqrt(pw), w)
    qe = 4 * EPS * len(pi_) * abs(value)
    return DetValue(complex(value), float(t), neglected, qe, "spectral")


# ---------------------------------------------------------------------------
# Laplace-Mellin zeta function


@dataclass(frozen=True)
class ZetaValue:
    value: float
    error: float
    near: float
    far: float


def mellin_series_part(coeffs: dict, a: float, s: float, lam: float, t_split: float) -> float:
    """``integral_0^T t^{s-1} e^{lam t} sum_k c_k t^{k-a} dt`` in closed form.

    Uses ``integral_0^T t^{p-1} e^{lam t} dt = T^p/p 1F1(p; p+1; lam T)``.
    """
    total = 0.0
    for k, c in coeffs.items():
        p = s - a + k
        if p <= 0:
            raise InputError("series term is not integrable at t = 0")
        total += c * t_split**p / p * float(hyp1f1(p, p + 1, lam * t_split))
    return total


def zeta(basis: SpectralBasis, rule: QuadratureRule, s: float, lam: float, t_split: float,
         kmax: int = 2, n_fit: int = 10, k_func=None, series=None) -> ZetaValue:
    """``Z(s, lam) = Gamma(s)^{-1} integral_0^inf t^{s-1} e^{lam t} K(t) dt``.

    A restricted-domain numerical transform (no analytic continuation): the
    piece below ``t_split`` uses the fitted small-t series term by term, the
    rest is integrated adaptively from sampled K(t).  ``k_func`` and
    ``series`` override the heat determinant and the fitted coefficients
    (``series = (coeffs, a)`` meaning ``K ~ sum_k c_k t^{k-a}``).
    """
    from .fitkit import fit, normalize
    from .asymptotics import prefactor

    n = basis.dim
    s, lam = float(np.real(s)), float(np.real(lam))
    a = n * (n + 0.5)
    if s <= a:
        raise InputError(f"Re s must exceed n(n+1/2) = {a:g}")
    positive = basis.eigenvalues[basis.eigenvalues > 0]
    if len(positive) == 0 or lam >= 2 * float(positive.min()):
        raise InputError("Re lambda must be below twice the lowest positive eigenvalue")
    if t_split <= 0:
        raise InputError("t_split must be positive")
    if k_func is None:
        def k_func(t):
            return heat_determinant(basis, rule, t).real
    c_scale = prefactor(n, 1.0) * basis.model.volume
    if series is None:
        from .kernel import t_min_valid

        t_lo = max(t_min_valid(basis, 1e-8), t_split / 20)
        if t_lo >= t_split:
            raise InputError(f"t_split {t_split:g} lies below the tail-valid window (t >= {t_lo:.3g})")
        ts = np.geomspace(t_lo, t_split, n_fit)
        ks = np.array([k_func(t) for t in ts])
        res = fit(normalize(ts, ks, basis.model, basis.bundle), kmax=kmax)
        coeffs = {k: c_scale * res.bhat[k] for k in res.bhat}
        fit_err = res.residual_rms
    else:
        coeffs, a = series
        fit_err = 0.0
    near = mellin_series_part(coeffs, a, s, lam, t_split)

    def f(t):
        return t ** (s - 1) * math.exp(lam * t) * k_func(t)

    far, far_err = sp_integrate.quad(f, t_split, np.inf, epsabs=0, epsrel=1e-10, limit=200)
    # relative fit error carried over to the series piece
    near_err = abs(near) * fit_err / max(abs(coeffs.get(0, 0.0)) / c_scale, 1e-300)
    g = gamma(s)
    return ZetaValue((near + far) / g, (abs(near_err) + far_err) / g, near / g, far / g)


def combinations_of_modes(basis: SpectralBasis, size: int):
    """Increasing tuples of mode ids (helper for the wedge invariants)."""
    return combinations([m.mode_id for m in basis.modes], size)
