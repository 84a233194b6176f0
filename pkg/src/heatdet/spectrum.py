"""Exact spectra of L = -Delta + Q and pointwise eigenmode evaluation.

Because Q is constant and the connection flat, the spectrum is the sum of
the scalar Laplace spectrum and spec(Q): each eigensection is a scalar
eigenfunction times an eigenvector of Q.  Gradients are always returned in
orthonormal frame components; on the sphere the frame is
``(e_theta, e_phi / sin(theta)) / r``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import gamma, gammaincc

from .errors import DomainError, EmptyBasisError, InputError
from .models import BundleModel, Kind, ManifoldModel
from .quadrature import QuadratureRule, build_rule

TWO_PI = 2 * math.pi


@dataclass(frozen=True)
class EigenMode:
    eigenvalue: float
    degree: int
    channel: int
    mode_id: int
    labels: tuple[int, ...]
    geometric_eigenvalue: float


@dataclass(frozen=True)
class FieldSample:
    value: np.ndarray
    grad: np.ndarray


# ---------------------------------------------------------------------------
# geometric mode tables


def _circle_levels(L: float, alpha: float, lam_max: float):
    """Integer labels k with ((2 pi k + alpha)/L)^2 <= lam_max."""
    kmax = int(math.floor(math.sqrt(max(lam_max, 0.0)) * L / TWO_PI + abs(alpha) / TWO_PI)) + 1
    k = np.arange(-kmax, kmax + 1)
    lam = ((TWO_PI * k + alpha) / L) ** 2
    return k, lam


def _geometric_modes(model: ManifoldModel, twists, lam_max: float):
    """Return (labels (M, d), lambda_geom (M,), degree (M,)) with lambda <= lam_max."""
    slack = lam_max * (1 + 1e-12) + 1e-300
    if model.kind is Kind.SPHERE:
        r = model.radius
        lmax = int(math.floor((-1 + math.sqrt(1 + 4 * max(lam_max, 0) * r * r)) / 2)) + 1
        labels = [(l, m) for l in range(lmax + 1) for m in range(-l, l + 1)]
        labels = np.array(labels, dtype=np.int64).reshape(-1, 2)
        lam = labels[:, 0] * (labels[:, 0] + 1) / (r * r)
        keep = lam <= slack
        return labels[keep], lam[keep].astype(float), labels[keep, 0].copy()
    twists = twists or (0.0,) * model.dim
    per_axis = [_circle_levels(L, a, lam_max) for L, a in zip(model.lengths, twists)]
    grids = np.meshgrid(*[k for k, _ in per_axis], indexing="ij")
    lams = np.meshgrid(*[l for _, l in per_axis], indexing="ij")
    labels = np.column_stack([g.ravel() for g in grids]).astype(np.int64)
    lam = np.sum(np.stack([l.ravel() for l in lams]), axis=0)
    keep = lam <= slack
    labels, lam = labels[keep], lam[keep]
    return labels, lam, np.max(np.abs(labels), axis=1)


def geometric_eigenvalues(model: ManifoldModel, twists, lam_lo: float, lam_hi: float):
    """Scalar eigenvalues in ``(lam_lo, lam_hi]`` as (values, multiplicities)."""
    if model.kind is Kind.SPHERE:
        r = model.radius
        lmax = int(math.floor((-1 + math.sqrt(1 + 4 * max(lam_hi, 0) * r * r)) / 2)) + 1
        l = np.arange(lmax + 1)
        lam = l * (l + 1) / (r * r)
        keep = (lam > lam_lo) & (lam <= lam_hi)
        return lam[keep].astype(float), (2 * l[keep] + 1).astype(float)
    _, lam, _ = _geometric_modes(model, twists, lam_hi)
    lam = lam[lam > lam_lo]
    return lam, np.ones_like(lam)


def _weyl_constant(model: ManifoldModel) -> float:
    n = model.dim
    omega = math.pi ** (n / 2) / math.gamma(n / 2 + 1)
    return model.volume * omega / TWO_PI**n


# ---------------------------------------------------------------------------
# normalized associated Legendre functions


def norm_legendre(theta: np.ndarray, lmax: int):
    """Orthonormal Legendre table and its theta derivative.

    Returns ``(P, dP)`` of shape ``(len(theta), lmax+1, lmax+1)`` indexed
    ``[i, l, m]`` with ``2 pi * integral P_lm^2 sin(theta) dtheta = 1``.
    Poles must not be passed in (the derivative divides by sin(theta)).
    """
    theta = np.asarray(theta, dtype=float)
    x, s = np.cos(theta), np.sin(theta)
    T = len(theta)
    P = np.zeros((T, lmax + 1, lmax + 1))
    P[:, 0, 0] = 1 / math.sqrt(4 * math.pi)
    for m in range(1, lmax + 1):
        P[:, m, m] = math.sqrt((2 * m + 1) / (2 * m)) * s * P[:, m - 1, m - 1]
    for m in range(0, lmax):
        P[:, m + 1, m] = math.sqrt(2 * m + 3) * x * P[:, m, m]
    for m in range(0, lmax + 1):
        for l in range(m + 2, lmax + 1):
            a = math.sqrt((4 * l * l - 1) / (l * l - m * m))
            b = math.sqrt(((l - 1) ** 2 - m * m) * (2 * l + 1) / ((2 * l - 3) * (l * l - m * m)))
            P[:, l, m] = a * x * P[:, l - 1, m] - b * P[:, l - 2, m]
    dP = np.zeros_like(P)
    inv_s = 1 / s
    for l in range(1, lmax + 1):
        m = np.arange(l + 1)
        c = np.sqrt((l * l - m * m) * (2 * l + 1) / (2 * l - 1))
        prev = np.zeros((T, l + 1))
        prev[:, :l] = P[:, l - 1, :l]
        dP[:, l, : l + 1] = (l * x[:, None] * P[:, l, : l + 1] - c * prev) * inv_s[:, None]
    return P, dP


# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """All eigenmodes of ``L`` with eigenvalue not above ``cutoff``.

    ``Q_frame`` is the unitary whose columns are the eigenvectors of Q;
    ``mixing`` optionally holds unitary blocks acting inside degenerate
    eigenspaces (used to test basis independence).
    """

    model: ManifoldModel
    bundle: BundleModel
    cutoff: float
    modes: tuple[EigenMode, ...] = field(repr=False)
    Q_frame: np.ndarray = field(repr=False)
    q: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)
    channels: np.ndarray = field(repr=False)
    eigenvalues: np.ndarray = field(repr=False)
    geometric: np.ndarray = field(repr=False)
    degrees: np.ndarray = field(repr=False)
    mixing: tuple = field(default=(), repr=False)

    def __len__(self) -> int:
        return len(self.modes)

    @property
    def dim(self) -> int:
        return self.model.dim

    @property
    def rank(self) -> int:
        return self.bundle.rank

    @property
    def max_degree(self) -> int:
        return int(self.degrees.max()) if len(self.degrees) else 0

    @cached_property
    def is_real(self) -> bool:
        return not self.bundle.has_twist and np.isrealobj(self.Q_frame) and all(
            np.isrealobj(b) for _, b in self.mixing
        )

    @property
    def dtype(self):
        return np.float64 if self.is_real else np.complex128

    @cached_property
    def _index(self) -> dict:
        return {m.mode_id: i for i, m in enumerate(self.modes)}

    def index_of(self, mode_id: int) -> int:
        try:
            return self._index[int(mode_id)]
        except KeyError:
            raise InputError(f"unknown mode id {mode_id}") from None

    def find(self, labels, channel: int = 0) -> int:
        """Mode id of the mode with the given geometric labels and channel."""
        labels = tuple(int(v) for v in np.atleast_1d(labels))
        for m in self.modes:
            if m.labels == labels and m.channel == channel:
                return m.mode_id
        raise InputError(f"no mode with labels {labels} in channel {channel}")

    def degenerate_groups(self, rtol: float = 1e-12) -> list[np.ndarray]:
        lam = self.eigenvalues
        groups, start = [], 0
        for i in range(1, len(lam) + 1):
            if i == len(lam) or abs(lam[i] - lam[start]) > rtol * max(1.0, abs(lam[start])):
                groups.append(np.arange(start, i))
                start = i
        return groups

    def remixed(self, rng: np.random.Generator) -> "SpectralBasis":
        """Same basis with each degenerate eigenspace rotated by a random unitary."""
        blocks = []
        for g in self.degenerate_groups():
            if len(g) < 2:
                continue
            A = rng.standard_normal((len(g), len(g)))
            if not self.is_real:
                A = A + 1j * rng.standard_normal((len(g), len(g)))
            Qm, R = np.linalg.qr(A)
            Qm = Qm * (np.diag(R) / np.abs(np.diag(R)))
            blocks.append((g, Qm))
        return SpectralBasis(
            self.model, self.bundle, self.cutoff, self.modes, self.Q_frame, self.q, self.labels,
            self.channels, self.eigenvalues, self.geometric, self.degrees, tuple(blocks),
        )

    # -- evaluation -------------------------------------------------------

    @cached_property
    def geometric_rows(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct geometric labels and, per mode, its row among them."""
        uniq, inv = np.unique(self.labels, axis=0, return_inverse=True)
        return uniq, inv.ravel()

    def sample_scalar(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Geometric factors at the distinct labels: ``(P, G)`` and ``(P, n, G)``.

        Mode k equals ``f_{row(k)} e_{c_k}`` with ``e_c`` the c-th eigenvector
        of Q.  Ignores ``mixing``; only meaningful for unmixed bases.
        """
        pts = self.model.canonical(np.atleast_2d(np.asarray(points, dtype=float)))
        f, df = self._sample_geometric(pts, self.geometric_rows[0], layout="pnm")
        return f, df

    def sample(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Values ``(P, M, N)`` and frame gradients ``(P, M, N, n)`` at points."""
        pts = self.model.canonical(np.atleast_2d(np.asarray(points, dtype=float)))
        f, df = self._sample_geometric(pts)
        V = f[:, :, None] * self.Q_frame.T[self.channels][None, :, :]
        D = df[:, :, None, :] * self.Q_frame.T[self.channels][None, :, :, None]
        for g, B in self.mixing:
            V[:, g] = np.einsum("pkn,kj->pjn", V[:, g], B)
            D[:, g] = np.einsum("pknd,kj->pjnd", D[:, g], B)
        return V, D

    def _sample_geometric(self, pts: np.ndarray, labels=None, layout: str = "pmn"):
        labels = self.labels if labels is None else labels
        kind = self.model.kind
        if kind is Kind.SPHERE:
            return self._sample_sphere(pts, labels, layout)
        twists = self.bundle.twists or (0.0,) * self.dim
        P, M = len(pts), len(labels)
        real = not self.bundle.has_twist
        f = np.ones((P, M), dtype=float if real else complex)
        df = np.zeros((P, M, self.dim) if layout == "pmn" else (P, self.dim, M), dtype=f.dtype)
        axis_vals, axis_ders = [], []
        for j, (L, alpha) in enumerate(zip(self.model.lengths, twists)):
            # tabulate on unique coordinates and wavenumbers, then gather
            ux, xi = np.unique(pts[:, j], return_inverse=True)
            uk, ki = np.unique(labels[:, j], return_inverse=True)
            k = uk[None, :]
            x = ux[:, None]
            if real:
                kk = np.abs(k)
                arg = TWO_PI * kk * x / L
                c, s = np.cos(arg), np.sin(arg)
                om = TWO_PI * kk / L
                amp = np.where(k == 0, 1 / math.sqrt(L), math.sqrt(2 / L))
                val = np.where(k >= 0, c, s) * amp
                der = np.where(k > 0, -om * s, np.where(k < 0, om * c, 0.0)) * amp
            else:
                om = (TWO_PI * k + alpha) / L
                val = np.exp(1j * om * x) / math.sqrt(L)
                der = 1j * om * val
            val = val[xi.ravel()][:, ki.ravel()]
            der = der[xi.ravel()][:, ki.ravel()]
            axis_vals.append(val)
            axis_ders.append(der)
        for j in range(self.dim):
            f = f * axis_vals[j]
        for j in range(self.dim):
            g = axis_ders[j]
            for i in range(self.dim):
                if i != j:
                    g = g * axis_vals[i]
            if layout == "pmn":
                df[:, :, j] = g
            else:
                df[:, j, :] = g
        return f, df

    def _sample_sphere(self, pts: np.ndarray, labels, layout: str):
        theta, phi = pts[:, 0], pts[:, 1]
        sin_t = np.sin(theta)
        if np.any(sin_t < 1e-12):
            raise DomainError("eigenmode gradients are undefined at the sphere poles")
        r = self.model.radius
        lmax = self.max_degree
        uth, inv = np.unique(theta, return_inverse=True)
        Pt, dPt = norm_legendre(uth, lmax)
        l, m = labels[:, 0], labels[:, 1]
        am = np.abs(m)
        inv = inv.ravel()
        leg = Pt[:, l, am][inv]
        dleg = dPt[:, l, am][inv]
        # trigonometric factors tabulated on distinct longitudes and orders
        uph, pinv = np.unique(phi, return_inverse=True)
        um, minv = np.unique(am, return_inverse=True)
        arg = um[None, :] * uph[:, None]
        c, s = np.cos(arg), np.sin(arg)
        pinv = pinv.ravel()
        c, s = c[pinv][:, minv], s[pinv][:, minv]
        sq2 = math.sqrt(2)
        trig = np.where(m > 0, sq2 * c, np.where(m < 0, sq2 * s, 1.0))
        dtrig = np.where(m > 0, -sq2 * am * s, np.where(m < 0, sq2 * am * c, 0.0))
        f = leg * trig / r
        d_th = dleg * trig / (r * r)
        d_ph = leg * dtrig / (sin_t[:, None] * r * r)
        axis = 2 if layout == "pmn" else 1
        return f, np.stack([d_th, d_ph], axis=axis)

    def sample_rule(self, rule: QuadratureRule):
        return self.sample(rule.nodes)

    # -- spectral sums used by truncation bounds ----------------------------

    def tail_sums(self, t: float, span: float = 60.0, cap: int = 2_000_000):
        """Exact-spectrum sums over the modes dropped by the cutoff.

        Returns a dict with ``w1 = sum e^{-t lam}``, ``g1 = sum lam_geom e^{-t lam}``,
        ``w2 = sum e^{-2 t lam}``, ``g2 = sum lam_geom^2 e^{-2 t lam}`` over
        ``lam > cutoff``.  Levels are enumerated analytically up to
        ``cutoff + span/t`` (or ``cap`` levels) and the remainder is covered
        by twice the Weyl-law integral.
        """
        return _tail_sums(self, float(t), span, cap)


def _tail_sums(basis: SpectralBasis, t: float, span: float, cap: int):
    model, twists = basis.model, basis.bundle.twists
    out = dict(w1=0.0, g1=0.0, w2=0.0, g2=0.0)
    n = model.dim
    hi_target = basis.cutoff - float(np.min(basis.q)) + span / t
    if model.kind is Kind.SPHERE:
        hi = hi_target
    else:
        # limit the lattice enumeration to roughly ``cap`` points
        c = _weyl_constant(model)
        hi = min(hi_target, (cap / c) ** (2 / n))
    for qc in basis.q:
        lo = basis.cutoff - qc
        if hi > lo:
            lam, mult = geometric_eigenvalues(model, twists, lo, hi)
            if len(lam):
                e1 = np.exp(-t * (lam + qc))
                e2 = e1 * e1
                out["w1"] += float(np.sum(mult * e1))
                out["g1"] += float(np.sum(mult * lam * e1))
                out["w2"] += float(np.sum(mult * e2))
                out["g2"] += float(np.sum(mult * lam * lam * e2))
        start = max(hi, lo)
        c = _weyl_constant(model) * (n / 2)
        for key, p, tt in (("w1", 0, t), ("g1", 1, t), ("w2", 0, 2 * t), ("g2", 2, 2 * t)):
            a = p + n / 2
            rem = c * math.exp(-tt * qc) * gamma(a) * gammaincc(a, tt * start) / tt**a
            out[key] += 2.0 * float(rem)
    return out


def enumerate_basis(model: ManifoldModel, bundle: BundleModel, cutoff: float) -> SpectralBasis:
    """Every eigenmode of ``-Delta + Q`` with eigenvalue ``<= cutoff``."""
    Q = np.asarray(bundle.Q)
    if Q.shape != (bundle.rank, bundle.rank) or np.max(np.abs(Q - Q.conj().T)) > 1e-12 * max(1, np.abs(Q).max()):
        raise InputError("Q must be a Hermitian rank x rank matrix")
    if bundle.twists is not None and model.kind is Kind.SPHERE:
        raise InputError("twists are not defined on the sphere")
    q, frame = np.linalg.eigh(Q)
    if not np.isfinite(cutoff):
        raise InputError("cutoff must be finite")
    if cutoff < q.min():
        raise EmptyBasisError(f"cutoff {cutoff} lies below the bottom of the spectrum {q.min()}")
    labels, lam_g, deg = _geometric_modes(model, bundle.twists, cutoff - q.min())
    rows = []
    for c, qc in enumerate(q):
        keep = lam_g + qc <= cutoff * (1 + 1e-12) + 1e-300
        for idx in np.nonzero(keep)[0]:
            rows.append((lam_g[idx] + qc, tuple(int(v) for v in labels[idx]), c, idx))
    if not rows:
        raise EmptyBasisError(f"no eigenvalues below cutoff {cutoff}")
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    sel = np.array([r[3] for r in rows])
    modes = tuple(
        EigenMode(float(lam), int(deg[i]), int(c), mid, lab, float(lam_g[i]))
        for mid, (lam, lab, c, i) in enumerate(rows)
    )
    frame = frame.real.copy() if np.isrealobj(Q) else frame
    return SpectralBasis(
        model=model,
        bundle=bundle,
        cutoff=float(cutoff),
        modes=modes,
        Q_frame=frame,
        q=q.astype(float),
        labels=labels[sel],
        channels=np.array([m.channel for m in modes], dtype=np.int64),
        eigenvalues=np.array([m.eigenvalue for m in modes]),
        geometric=lam_g[sel].astype(float),
        degrees=deg[sel].astype(np.int64),
    )


def eval_mode(basis: SpectralBasis, mode_id: int, point) -> FieldSample:
    i = basis.index_of(mode_id)
    V, D = basis.sample(np.atleast_2d(point))
    return FieldSample(value=V[0, i], grad=D[0, i])


def gram_check(basis: SpectralBasis, rule: QuadratureRule | None = None) -> float:
    """Largest entry of ``|Gram - I|`` under the rule (default: exact rule)."""
    if rule is None:
        rule = build_rule(basis.model, max(1, basis.max_degree))
    V, _ = basis.sample(rule.nodes)
    A = V.reshape(len(rule), -1) if basis.rank == 1 else None
    if A is None:
        # fiber inner product: sum over channel components
        G = np.einsum("p,pkn,pln->kl", rule.weights, V.conj(), V)
    else:
        G = (A.conj().T * rule.weights) @ A
    return float(np.max(np.abs(G - np.eye(len(basis)))))
