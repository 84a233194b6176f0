"""Model manifolds and bundles with their exact geometric data.

Three closed geometries are supported: the circle, flat tori of any
dimension and the round 2-sphere.  Points are stored in chart coordinates
(angles for circle and torus, ``(colatitude, longitude)`` for the sphere)
and canonicalized into the fundamental domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import DomainError, InputError


class Kind(str, Enum):
    CIRCLE = "circle"
    TORUS = "torus"
    SPHERE = "sphere"

    @classmethod
    def parse(cls, value) -> "Kind":
        if isinstance(value, Kind):
            return value
        key = str(value).strip().lower().replace("_", "").replace("-", "")
        aliases = {
            "circle": cls.CIRCLE,
            "s1": cls.CIRCLE,
            "torus": cls.TORUS,
            "flattorus": cls.TORUS,
            "sphere": cls.SPHERE,
            "sphere2": cls.SPHERE,
            "s2": cls.SPHERE,
        }
        try:
            return aliases[key]
        except KeyError:
            raise InputError(f"unsupported manifold kind {value!r}") from None


@dataclass(frozen=True)
class CurvatureScalars:
    """Curvature contractions entering the closed-form coefficients.

    ``R`` scalar curvature, ``RicSq`` = R_{mn}R^{mn}, ``RiemSq`` =
    R_{abmn}R^{abmn}, ``LapR`` = Laplacian of R (zero for every model).
    """

    R: float = 0.0
    RicSq: float = 0.0
    RiemSq: float = 0.0
    LapR: float = 0.0


@dataclass(frozen=True)
class ManifoldModel:
    kind: Kind
    lengths: tuple[float, ...]
    dim: int
    volume: float
    injectivity_radius: float
    curvature: CurvatureScalars

    @property
    def radius(self) -> float:
        if self.kind is not Kind.SPHERE:
            raise AttributeError("only the sphere has a radius")
        return self.lengths[0]

    @property
    def is_flat(self) -> bool:
        return self.kind is not Kind.SPHERE

    def canonical(self, points) -> np.ndarray:
        """Map chart coordinates into the fundamental domain.

        Accepts a single point (shape ``(n,)``) or an array ``(P, n)`` and
        returns an array of the same shape.
        """
        pts = np.array(points, dtype=float)
        single = pts.ndim <= 1
        pts = np.atleast_2d(pts.reshape(1, -1) if single else pts)
        if pts.shape[1] != self.dim:
            raise InputError(f"expected points with {self.dim} coordinates, got {pts.shape[1]}")
        if not np.all(np.isfinite(pts)):
            raise InputError("point coordinates must be finite")
        if self.kind is Kind.SPHERE:
            theta = np.mod(pts[:, 0], 2 * math.pi)
            phi = pts[:, 1].copy()
            flip = theta > math.pi
            theta[flip] = 2 * math.pi - theta[flip]
            phi[flip] += math.pi
            pts = np.column_stack([theta, np.mod(phi, 2 * math.pi)])
        else:
            pts = np.mod(pts, np.asarray(self.lengths))
        return pts[0] if single else pts

    def reference_point(self) -> np.ndarray:
        """A fixed regular point used by the homogeneous integration path."""
        if self.kind is Kind.SPHERE:
            return np.array([math.pi / 2, 0.0])
        return np.zeros(self.dim)


@dataclass(frozen=True)
class BundleModel:
    """Trivial rank-N bundle with constant Hermitian potential and flat twists.

    ``twists`` are holonomy angles per cycle: sections pick up ``exp(i*alpha_j)``
    when transported once around the j-th period.  ``curvSq`` is the scalar
    tr R_{mn}R^{mn} of the connection and is zero for the flat bundles here.
    """

    rank: int
    Q: np.ndarray = field(repr=False)
    twists: tuple[float, ...] | None = None
    curvSq: float = 0.0

    def __post_init__(self):
        if self.rank < 1:
            raise InputError("bundle rank must be >= 1")
        Q = np.array(self.Q, dtype=complex).reshape(self.rank, self.rank)
        scale = max(1.0, float(np.max(np.abs(Q))) if Q.size else 1.0)
        if np.max(np.abs(Q - Q.conj().T)) > 1e-13 * scale:
            raise InputError("potential Q must be Hermitian")
        Q = 0.5 * (Q + Q.conj().T)
        if np.all(Q.imag == 0):
            Q = Q.real.copy()
        Q.setflags(write=False)
        object.__setattr__(self, "Q", Q)
        if self.twists is not None:
            object.__setattr__(self, "twists", tuple(float(a) for a in self.twists))
        if self.curvSq != 0:
            raise InputError("only flat connections are supported (curvSq must be 0)")

    @property
    def trQ(self) -> float:
        return float(np.trace(self.Q).real)

    @property
    def trQ2(self) -> float:
        return float(np.trace(self.Q @ self.Q).real)

    @property
    def has_twist(self) -> bool:
        return self.twists is not None and any(a != 0 for a in self.twists)


@dataclass(frozen=True)
class GeodesicData:
    sigma: float
    vanvleck: float
    dist: float


def make_model(kind, params) -> ManifoldModel:
    """Build a model manifold.

    ``params`` is the circumference (circle), a sequence of periods (torus)
    or the radius (sphere).  Sequences of length one are accepted for all.
    """
    kind = Kind.parse(kind)
    vals = np.atleast_1d(np.asarray(params, dtype=float)).ravel()
    if vals.size == 0:
        raise InputError("at least one length is required")
    if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
        raise InputError("lengths must be strictly positive")
    lengths = tuple(float(v) for v in vals)
    if kind is Kind.CIRCLE:
        if len(lengths) != 1:
            raise InputError("circle takes a single circumference")
        (L,) = lengths
        return ManifoldModel(kind, lengths, 1, L, L / 2, CurvatureScalars())
    if kind is Kind.TORUS:
        return ManifoldModel(
            kind, lengths, len(lengths), math.prod(lengths), min(lengths) / 2, CurvatureScalars()
        )
    if len(lengths) != 1:
        raise InputError("sphere takes a single radius")
    (r,) = lengths
    # constant curvature: R_abcd = (g_ac g_bd - g_ad g_bc)/r^2 in two dimensions
    curv = CurvatureScalars(R=2 / r**2, RicSq=2 / r**4, RiemSq=4 / r**4, LapR=0.0)
    return ManifoldModel(kind, lengths, 2, 4 * math.pi * r**2, math.pi * r, curv)


def make_bundle(model: ManifoldModel, rank: int = 1, Q=None, twists: Sequence[float] | None = None) -> BundleModel:
    if Q is None:
        Q = np.zeros((rank, rank))
    Q = np.asarray(Q)
    if Q.size != rank * rank:
        raise InputError(f"Q must have {rank * rank} entries for rank {rank}")
    if twists is not None:
        if model.kind is Kind.SPHERE:
            raise InputError("twists are only defined on the circle and the torus")
        if len(twists) != model.dim:
            raise InputError(f"expected {model.dim} twist angles, got {len(twists)}")
    return BundleModel(rank, Q.reshape(rank, rank), tuple(twists) if twists is not None else None)


def _unit_vectors(pts: np.ndarray) -> np.ndarray:
    th, ph = pts[..., 0], pts[..., 1]
    return np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=-1)


def geodesic_distance(model: ManifoldModel, x, y) -> np.ndarray:
    """Vectorized geodesic distance (minimal image on flat models)."""
    x = model.canonical(x)
    y = model.canonical(y)
    if model.kind is Kind.SPHERE:
        a, b = _unit_vectors(x), _unit_vectors(y)
        c = np.cross(a, b)
        s = np.sqrt(np.sum(c * c, axis=-1))
        return model.radius * np.arctan2(s, np.sum(a * b, axis=-1))
    L = np.asarray(model.lengths)
    d = np.abs(x - y)
    d = np.minimum(d, L - d)
    return np.sqrt(np.sum(d * d, axis=-1))


def vanvleck_sphere(theta):
    """theta/sin(theta), with its Taylor series near zero."""
    theta = np.asarray(theta, dtype=float)
    small = np.abs(theta) < 1e-4
    safe = np.where(small, 1.0, theta)
    t2 = theta * theta
    return np.where(small, 1 + t2 / 6 + 7 * t2 * t2 / 360, safe / np.sin(safe))


def geodesic(model: ManifoldModel, x, xp) -> GeodesicData:
    d = float(geodesic_distance(model, x, xp))
    if model.kind is Kind.SPHERE:
        theta = d / model.radius
        if theta >= math.pi * (1 - 1e-12):
            raise DomainError("pair at or beyond the injectivity radius (antipodal points)")
        vv = float(vanvleck_sphere(theta))
    else:
        vv = 1.0
    return GeodesicData(sigma=0.5 * d * d, vanvleck=vv, dist=d)
