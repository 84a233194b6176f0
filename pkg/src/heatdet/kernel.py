"""Truncated heat kernel, mixed-derivative tensors, heat trace and content.

Everything is assembled from per-mode samples (values and frame
gradients) of a :class:`~heatdet.spectrum.SpectralBasis`.  The vectorized
helpers ``pair_tensors`` and ``scalar_pair_tensors`` evaluate the tensors for
many points ``x`` against one point ``x'`` and many times at once; they are
the workhorses of :mod:`heatdet.invariants`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InputError, TruncationError
from .models import Kind, geodesic
from .parallel import pairwise_sum
from .quadrature import build_rule, integrate
from .spectrum import SpectralBasis


@dataclass(frozen=True)
class KernelValue:
    U: np.ndarray
    t: float
    x: np.ndarray
    xp: np.ndarray


@dataclass(frozen=True)
class MixedDerivTensor:
    P: np.ndarray
    t: float
    x: np.ndarray
    xp: np.ndarray

    @property
    def det(self):
        return np.linalg.det(self.P)


@dataclass(frozen=True)
class TruncationReport:
    """Tail control for the heat determinant of a truncated basis.

    ``bound`` over-estimates ``|K_full(t) - K_truncated(t)|``; ``relative``
    divides it by the leading small-t magnitude of K.  ``t_min_valid`` is the
    smallest t with ``relative <= tolerance``.
    """

    cutoff: float
    t: np.ndarray = field(repr=False)
    bound: np.ndarray = field(repr=False)
    relative: np.ndarray = field(repr=False)
    tolerance: float
    t_min_valid: float

    @property
    def bound_value(self) -> np.ndarray:
        return self.bound


def weights(basis: SpectralBasis, ts) -> np.ndarray:
    """Boltzmann factors ``exp(-t lambda_k)`` as an ``(M, T)`` array."""
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    if np.any(ts <= 0):
        raise InputError("t must be positive")
    return np.exp(-np.outer(basis.eigenvalues, ts))


# ---------------------------------------------------------------------------
# vectorized assembly


def pair_tensors(basis: SpectralBasis, W: np.ndarray, V, D, v_ref, d_ref) -> np.ndarray:
    """``P_{mu nu'}(t; x_c, x')`` for samples ``V, D`` at points x_c.

    ``v_ref, d_ref`` are the samples at x' (shapes ``(M, N)``, ``(M, N, n)``)
    and ``W`` the ``(M, T)`` weights.  Returns ``(T, C, n, n)``.  Assembly is
    ``tr[U(x', x) grad_mu grad_nu' U(x, x')]`` with both factors accumulated
    over modes before the fiber trace.
    """
    C, M, N = V.shape
    n = D.shape[-1]
    T = W.shape[1]
    A = (v_ref[:, :, None] * W[:, None, :]).reshape(M, N * T)
    Vc = np.conj(V).transpose(0, 2, 1).reshape(C * N, M)
    U = (Vc @ A).reshape(C, N, N, T)  # [c, b, a, t] = U(x', x)[a, b]
    B = (np.conj(d_ref)[:, :, :, None] * W[:, None, None, :]).reshape(M, N * n * T)
    Dm = D.transpose(0, 2, 3, 1).reshape(C * N * n, M)
    G = (Dm @ B).reshape(C, N, n, N, n, T)  # [c, b, mu, a, nu, t] = G_{mu nu}[b, a]
    return np.einsum("cbat,cbmavt->tcmv", U, G, optimize=True)


def channel_pair_tensors(basis: SpectralBasis, W: np.ndarray, f, df, f_ref, df_ref) -> np.ndarray:
    """Same as :func:`pair_tensors` from the geometric factors of an unmixed basis.

    Every mode is a scalar function times a fixed eigenvector of Q, so the
    fiber trace collapses to ``P = sum_c u_c(x', x) g_c(x, x')`` with
    per-channel kernel ``u_c`` and gradient kernel ``g_c``.  ``f, df`` come
    from :meth:`SpectralBasis.sample_scalar` (shapes ``(C, G)``,
    ``(C, n, G)``); ``f_ref, df_ref`` are the same at x'.
    """
    C, G = f.shape
    n = df.shape[1]
    T = W.shape[1]
    rows = basis.geometric_rows[1]
    Fc = np.conj(f)
    Dm = df.reshape(C * n, G)
    P = None
    for ch in range(basis.rank):
        idx = np.nonzero(basis.channels == ch)[0]
        if len(idx) == 0:
            continue
        Wc = np.zeros((G, T))
        Wc[rows[idx]] = W[idx]
        u = Fc @ (f_ref[:, None] * Wc)  # (C, T)
        B = (np.conj(df_ref).T[:, :, None] * Wc[:, None, :]).reshape(G, n * T)
        g = (Dm @ B).reshape(C, n, n, T)
        term = u[:, None, None, :] * g
        P = term if P is None else P + term
    return P.transpose(3, 0, 1, 2)


def scalar_pair_tensors(basis: SpectralBasis, W: np.ndarray, D, d_ref) -> np.ndarray:
    """``sum_k w_k grad phi_k(x_c) grad phi_k(x')^*`` as ``(T, C, n, n)`` (rank 1)."""
    C, M, _, n = D.shape
    T = W.shape[1]
    B = (np.conj(d_ref[:, 0, :])[:, :, None] * W[:, None, :]).reshape(M, n * T)
    Dm = D[:, :, 0, :].transpose(0, 2, 1).reshape(C * n, M)
    return (Dm @ B).reshape(C, n, n, T).transpose(3, 0, 1, 2)


def batched_det(P: np.ndarray) -> np.ndarray:
    n = P.shape[-1]
    if n == 1:
        return P[..., 0, 0]
    if n == 2:
        return P[..., 0, 0] * P[..., 1, 1] - P[..., 0, 1] * P[..., 1, 0]
    return np.linalg.det(P)


# ---------------------------------------------------------------------------
# point-pair operations


def _check(basis: SpectralBasis, t: float, tol: float | None):
    if t <= 0:
        raise InputError("t must be positive")
    if tol is not None:
        rep = tail_bound(basis, t, tol)
        if rep.relative[0] > tol:
            raise TruncationError(
                f"spectral tail bound {rep.relative[0]:.3g} exceeds tolerance {tol:g} at t={t:g}"
                f" (cutoff {basis.cutoff:g}); smallest valid t is {rep.t_min_valid:.4g}",
                t_min_valid=rep.t_min_valid,
                bound=float(rep.bound[0]),
            )


def _terms_outer(w, a, b):
    """Per-mode outer products ``w_k a_k b_k^dagger`` with shape (M, N, N).

    The outer product is formed before weighting so that swapping ``a`` and
    ``b`` yields the exact conjugate transpose.
    """
    return w[:, None, None] * (a[:, :, None] * np.conj(b)[:, None, :])


def heat_kernel(basis: SpectralBasis, t: float, x, xp, tol: float | None = None) -> KernelValue:
    """``U(t; x, x') = sum_k exp(-t lam_k) phi_k(x) phi_k(x')^dagger``."""
    _check(basis, t, tol)
    cx, cxp = basis.model.canonical(x), basis.model.canonical(xp)
    # evaluate in a canonical point order so that swapping x and x' gives the
    # exact conjugate transpose, independent of rounding in the samples
    swap = tuple(cxp) < tuple(cx)
    a, b = (cxp, cx) if swap else (cx, cxp)
    V, _ = basis.sample(np.vstack([a, b]))
    w = np.exp(-t * basis.eigenvalues)
    U = pairwise_sum(_terms_outer(w, V[0], V[1]))
    if swap:
        U = U.conj().T
    return KernelValue(U, float(t), cx, cxp)


def mixed_tensor(basis: SpectralBasis, t: float, x, xp, tol: float | None = None) -> MixedDerivTensor:
    """Frame components of ``P_{mu nu'} = tr U*(t;x,x') grad_mu grad_nu' U(t;x,x')``."""
    _check(basis, t, tol)
    V, D = basis.sample(np.vstack([np.atleast_2d(x), np.atleast_2d(xp)]))
    w = np.exp(-t * basis.eigenvalues)
    Uback = pairwise_sum(_terms_outer(w, V[1], V[0]))  # U(t; x', x)
    n = basis.dim
    P = np.zeros((n, n), dtype=complex)
    for mu in range(n):
        for nu in range(n):
            G = pairwise_sum(_terms_outer(w, D[0][:, :, mu], D[1][:, :, nu]))
            P[mu, nu] = np.trace(Uback @ G)
    if basis.is_real:
        P = P.real
    return MixedDerivTensor(P, float(t), basis.model.canonical(x), basis.model.canonical(xp))


def scalar_mixed_tensor(basis: SpectralBasis, t: float, x, xp, tol: float | None = None) -> MixedDerivTensor:
    """``sum_k exp(-t lam_k) grad phi_k(x) grad phi_k(x')^T`` for scalar operators."""
    if basis.rank != 1:
        raise InputError("the scalar mixed tensor needs a rank-1 bundle")
    _check(basis, t, tol)
    _, D = basis.sample(np.vstack([np.atleast_2d(x), np.atleast_2d(xp)]))
    w = np.exp(-t * basis.eigenvalues)
    terms = w[:, None, None] * D[0][:, 0, :, None] * np.conj(D[1][:, 0, None, :])
    P = pairwise_sum(terms)
    return MixedDerivTensor(P, float(t), basis.model.canonical(x), basis.model.canonical(xp))


def heat_trace(basis: SpectralBasis, t: float) -> float:
    """``sum_k exp(-t lam_k)`` over the truncated basis."""
    if t <= 0:
        raise InputError("t must be positive")
    return float(pairwise_sum(np.exp(-t * basis.eigenvalues)))


def mode_integrals(basis: SpectralBasis) -> np.ndarray:
    """``Phi_k = integral phi_k dv`` for a rank-1 basis."""
    if basis.rank != 1:
        raise InputError("heat content is only defined for scalar operators")
    rule = build_rule(basis.model, max(1, basis.max_degree))
    V, _ = basis.sample(rule.nodes)
    return np.array([integrate(rule, V[:, k, 0]) for k in range(len(basis))])


def heat_content(basis: SpectralBasis, t: float) -> float:
    """``sum_k exp(-t lam_k) |Phi_k|^2``; scalar operators only."""
    if t <= 0:
        raise InputError("t must be positive")
    phi = mode_integrals(basis)
    return float(pairwise_sum(np.exp(-t * basis.eigenvalues) * np.abs(phi) ** 2))


def _flat_channel_kernel_mp(basis: SpectralBasis, t: float, x, xp, channel: int, dps: int):
    """Channel-diagonal kernel on a flat model summed in ``dps``-digit arithmetic.

    Uses the unmixed geometric factors; the channel kernel does not depend on
    the choice of basis inside degenerate eigenspaces.
    """
    import mpmath

    model = basis.model
    x, xp = model.canonical(x), model.canonical(xp)
    twists = basis.bundle.twists or (0.0,) * model.dim
    real = not basis.bundle.has_twist
    idx = np.nonzero(basis.channels == channel)[0]
    with mpmath.workdps(dps):
        two_pi = 2 * mpmath.pi
        axes, freqs = [], []
        for j, (L, alpha) in enumerate(zip(model.lengths, twists)):
            L = mpmath.mpf(L)
            freqs.append({int(k): ((two_pi * int(k) + alpha) / L) ** 2 for k in np.unique(basis.labels[idx, j])})
            a, b = mpmath.mpf(float(x[j])), mpmath.mpf(float(xp[j]))
            table = {}
            for k in np.unique(basis.labels[idx, j]):
                k = int(k)
                if real:
                    # cos/sin pairs of equal |k| combine to cos(k (x - x'))
                    amp = 1 / L if k == 0 else 2 / L
                    trig = mpmath.cos if k >= 0 else mpmath.sin
                    table[k] = amp * trig(two_pi * abs(k) * a / L) * trig(two_pi * abs(k) * b / L)
                else:
                    table[k] = mpmath.expj((two_pi * k + alpha) * (a - b) / L) / L
            axes.append(table)
        total = mpmath.mpf(0)
        tq = mpmath.mpf(t) * mpmath.mpf(float(basis.q[channel]))
        for i in idx:
            # eigenvalues recomputed at full precision: the weights must be as exact as the phases
            lam = mpmath.fsum(freqs[j][int(basis.labels[i, j])] for j in range(model.dim))
            term = mpmath.exp(-mpmath.mpf(t) * lam - tq)
            for j in range(model.dim):
                term *= axes[j][int(basis.labels[i, j])]
            total += term
        return total


def psi_residual(basis: SpectralBasis, t: float, x, xp, channel: int = 0) -> float:
    """``|Psi - 1|`` for the off-diagonal factorization in one Q-channel.

    ``Psi = (4 pi t)^{n/2} exp(sigma/2t) Delta^{-1/2} exp(t q_c) U_cc`` where
    ``U_cc`` is the kernel in the eigenframe of Q.  Far from the diagonal
    U_cc is exponentially smaller than its spectral terms; on flat models the
    sum is then redone with enough digits to resolve the cancellation.
    """
    model = basis.model
    g = geodesic(model, x, xp)
    if g.dist >= model.injectivity_radius:
        raise DomainError("pair lies outside the injectivity radius")
    if not 0 <= channel < basis.rank:
        raise InputError("channel out of range")
    if t <= 0:
        raise InputError("t must be positive")
    n = model.dim
    qc = float(basis.q[channel])
    # log of the expected magnitude (4 pi t)^{-n/2} e^{-sigma/2t} Delta^{1/2} e^{-t q}
    log_est = -0.5 * n * math.log(4 * math.pi * t) - g.sigma / (2 * t) + 0.5 * math.log(g.vanvleck) - t * qc
    f, _ = basis.sample_scalar(np.vstack([np.atleast_2d(x), np.atleast_2d(xp)]))
    rows = basis.geometric_rows[1][basis.channels == channel]
    w = np.exp(-t * basis.eigenvalues[basis.channels == channel])
    log_abs = math.log(max(float(np.sum(w * np.abs(f[0, rows]) * np.abs(f[1, rows]))), 1e-300))
    digits = (log_abs - log_est) / math.log(10)
    if model.is_flat and digits > 6:
        import mpmath

        with mpmath.workdps(int(math.ceil(digits)) + 25):
            u = _flat_channel_kernel_mp(basis, t, x, xp, channel, mpmath.mp.dps)
            # exp(-log_est) is exactly the Psi normalization
            return float(abs(u * mpmath.exp(-mpmath.mpf(log_est)) - 1))
    U = heat_kernel(basis, t, x, xp).U
    v = basis.Q_frame[:, channel]
    ucc = np.conj(v) @ U @ v
    psi = ucc * (4 * math.pi * t) ** (n / 2) * math.exp(g.sigma / (2 * t)) / math.sqrt(g.vanvleck)
    psi *= math.exp(t * qc)
    return float(abs(psi - 1))


# ---------------------------------------------------------------------------
# truncation control


def _basis_sums(basis: SpectralBasis, t: float) -> dict:
    e1 = np.exp(-t * basis.eigenvalues)
    lg = basis.geometric
    return dict(
        w1=float(np.sum(e1)),
        g1=float(np.sum(lg * e1)),
        w2=float(np.sum(e1 * e1)),
        g2=float(np.sum(lg * lg * e1 * e1)),
    )


def determinant_tail(basis: SpectralBasis, t: float) -> float:
    """Over-estimate of ``|K_full(t) - K_truncated(t)|``.

    With ``U = U_tr + dU`` and ``G = grad grad' U = G_tr + dG`` the entries of
    P change by ``tr(dU G) + tr(U_tr dG)``.  Homogeneity of the models gives
    the pointwise bounds ``|U| <= W1/vol`` and ``|G| <= G1/vol`` (W1 = sum of
    weights, G1 = sum of weights times geometric eigenvalue) and
    orthonormality gives the L2(MxM) norms ``||U||^2 = W2``,
    ``||G||^2 = G2``.  Expanding the determinant,

        bound = n! sum_{j=1..n} C(n, j) Pmax^{n-j} dsup^{j-1} L1

    with ``Pmax = u g``, ``dsup = u_tail g + u_tr g_tail`` and
    ``L1 = sqrt(W2_tr G2_tail) + sqrt(W2_tail G2)``.
    """
    vol = basis.model.volume
    n = basis.dim
    tr = _basis_sums(basis, t)
    tail = basis.tail_sums(t)
    full = {k: tr[k] + tail[k] for k in tr}
    u, g = full["w1"] / vol, full["g1"] / vol
    u_tr, u_tail, g_tail = tr["w1"] / vol, tail["w1"] / vol, tail["g1"] / vol
    pmax = u * g
    dsup = u_tail * g + u_tr * g_tail
    l1 = math.sqrt(tr["w2"] * tail["g2"]) + math.sqrt(tail["w2"] * full["g2"])
    total = sum(math.comb(n, j) * pmax ** (n - j) * dsup ** (j - 1) for j in range(1, n + 1))
    return math.factorial(n) * total * l1


def leading_magnitude(basis: SpectralBasis, t: float) -> float:
    from .asymptotics import prefactor

    return prefactor(basis.dim, t) * basis.model.volume * 0.5 * basis.rank**basis.dim


def tail_bound(basis: SpectralBasis, t, tolerance: float = 1e-6) -> TruncationReport:
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(ts <= 0):
        raise InputError("t must be positive")
    bound = np.array([determinant_tail(basis, tt) for tt in ts])
    rel = bound / np.array([leading_magnitude(basis, tt) for tt in ts])
    return TruncationReport(basis.cutoff, ts, bound, rel, float(tolerance), t_min_valid(basis, tolerance))


def t_min_valid(basis: SpectralBasis, tolerance: float, lo: float = 1e-8, hi: float = 1e4) -> float:
    """Smallest t (to 0.1% in log t) whose relative tail bound meets ``tolerance``."""
    def rel(tt):
        return determinant_tail(basis, tt) / leading_magnitude(basis, tt)

    if rel(lo) <= tolerance:
        return lo
    if rel(hi) > tolerance:
        return math.inf
    a, b = math.log(lo), math.log(hi)
    while b - a > 1e-3:
        mid = 0.5 * (a + b)
        if rel(math.exp(mid)) <= tolerance:
            b = mid
        else:
            a = mid
    return math.exp(b)
