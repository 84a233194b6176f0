"""Least-squares extraction of the small-t coefficients of K(t)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .asymptotics import prefactor
from .errors import ConfigError, FitError, InputError
from .models import BundleModel, Kind, ManifoldModel


@dataclass(frozen=True)
class SeriesSamples:
    t: np.ndarray
    y: np.ndarray


@dataclass(frozen=True)
class FitResult:
    """Fitted coefficients with error bars.

    ``stderr`` combines in quadrature the residual-covariance error
    (``stderr_stat``) and ``stderr_trunc``, the shift of each coefficient
    when the next power of t is added to the model.  The second part covers
    the systematic bias of the unmodelled remainder, which residuals alone
    underestimate.
    """

    bhat: dict
    stderr: dict
    residual_rms: float
    t_window: tuple
    condition: float
    stderr_stat: dict = field(default_factory=dict)
    stderr_trunc: dict = field(default_factory=dict)

    def predict(self, t):
        t = np.asarray(t, dtype=float)
        return sum(c * t**k for k, c in self.bhat.items())


def normalize(ts, values, model: ManifoldModel, bundle: BundleModel | None = None,
              t_min: float | None = None) -> SeriesSamples:
    """``y(t) = K(t) / (prefactor(n, t) vol)``, so ``y ~ b0 + b1 t + b2 t^2``.

    ``values`` may be numbers or objects with a ``value`` attribute.  With
    ``t_min`` given, samples below it are rejected.
    """
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    vals = np.array([np.real(getattr(v, "value", v)) for v in np.atleast_1d(values)], dtype=float)
    if ts.shape != vals.shape:
        raise InputError("t and K samples differ in length")
    if np.any(ts <= 0):
        raise InputError("t must be positive")
    if t_min is not None and np.any(ts < t_min):
        raise InputError(f"sample at t={ts.min():g} lies below the tail-valid window (t >= {t_min:.4g})")
    return SeriesSamples(ts, vals / (prefactor(model.dim, ts) * model.volume))


def _lsq(t, y, kmax):
    p = kmax + 1
    sw = t ** (-(kmax + 1) / 2)
    X = np.vander(t, p, increasing=True) * sw[:, None]
    Qm, R = np.linalg.qr(X)
    diag = np.abs(np.diag(R))
    if diag.min() <= 1e-13 * diag.max():
        raise FitError("design matrix is rank deficient (repeated or too few distinct t values)")
    yw = y * sw
    coef = np.linalg.solve(R, Qm.T @ yw)
    return coef, R, yw - X @ coef


def fit(ts, ys=None, kmax: int = 2) -> FitResult:
    """Weighted least squares of y on ``1, t, ..., t^kmax`` via QR.

    The squared residuals carry weights ``t^-(kmax+1)``, putting each sample's
    unmodelled ``t^(kmax+1)`` remainder on a comparable footing.  ``ts`` may
    also be a :class:`SeriesSamples`, in which case ``ys`` is omitted.
    """
    if isinstance(ts, SeriesSamples):
        ts, ys = ts.t, ts.y
    t = np.asarray(ts, dtype=float)
    y = np.asarray(ys, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise InputError("t and y must be 1-d arrays of equal length")
    p = kmax + 1
    if len(t) < kmax + 2:
        raise FitError(f"need at least {kmax + 2} samples for kmax={kmax}, got {len(t)}")
    coef, R, resid = _lsq(t, y, kmax)
    dof = len(t) - p
    sigma2 = float(resid @ resid) / dof
    Rinv = np.linalg.inv(R)
    stat = np.sqrt(np.maximum(np.diag(sigma2 * (Rinv @ Rinv.T)), 0.0))
    trunc = np.zeros(p)
    if len(t) >= kmax + 3:
        try:
            trunc = np.abs(_lsq(t, y, kmax + 1)[0][:p] - coef)
        except FitError:
            pass
    raw = y - np.vander(t, p, increasing=True) @ coef
    return FitResult(
        bhat={k: float(coef[k]) for k in range(p)},
        stderr={k: float(math.hypot(stat[k], trunc[k])) for k in range(p)},
        residual_rms=float(math.sqrt(np.mean(raw * raw))),
        t_window=(float(t.min()), float(t.max())),
        condition=float(np.linalg.cond(R)),
        stderr_stat={k: float(stat[k]) for k in range(p)},
        stderr_trunc={k: float(trunc[k]) for k in range(p)},
    )


def divided_difference(t, y) -> float:
    """Leading coefficient of the interpolating polynomial through all points."""
    t = np.asarray(t, dtype=float)
    d = np.asarray(y, dtype=float).copy()
    for j in range(1, len(t)):
        d[j:] = (d[j:] - d[j - 1:-1]) / (t[j:] - t[:-j])
    return float(d[-1])


def _t_cap(basis) -> float:
    # the small-t series is meaningless past the first spectral gap
    geo = basis.geometric[basis.geometric > 0]
    if len(geo) == 0:
        return 1.0
    return 1.0 / float(geo.min())


def recommend_window(basis, tolerance: float, kmax: int = 2, rule=None, n_probe: int = 24,
                     threads: int | None = None) -> tuple[float, float]:
    """Fit window ``(t_min, t_max)`` for a basis at the given relative tolerance.

    ``t_min`` is where the spectral tail bound meets ``tolerance``; ``t_max``
    is the largest probe time at which the first neglected term, estimated
    from divided differences of sampled y(t), stays below ``tolerance |b0|``.
    """
    from .invariants import heat_determinant_many
    from .kernel import t_min_valid
    from .quadrature import build_rule

    if tolerance <= 0:
        raise InputError("tolerance must be positive")
    t_lo = t_min_valid(basis, tolerance)
    t_hi = _t_cap(basis)
    if not t_lo < t_hi:
        raise ConfigError(
            f"empty fit window at tolerance {tolerance:g}: tail bound needs t >= {t_lo:.4g}"
            f" but the small-t regime ends near {t_hi:.4g}; raise the cutoff (now {basis.cutoff:g})"
        )
    if rule is None:
        rule = build_rule(basis.model, basis.dim * basis.max_degree)
    ts = np.geomspace(t_lo, t_hi, n_probe)
    ks = heat_determinant_many(basis, rule, ts, tol=tolerance, threads=threads)
    y = normalize(ts, ks, basis.model, basis.bundle).y
    m = kmax + 2
    b0 = abs(y[0])
    t_max = t_lo
    for i in range(len(ts) - m + 1):
        win = slice(i, i + m)
        d = divided_difference(ts[win], y[win])
        if abs(d) * ts[i + m - 1] ** (kmax + 1) > tolerance * b0:
            break
        t_max = float(ts[i + m - 1])
    if t_max <= t_lo:
        raise ConfigError(
            f"empty fit window at tolerance {tolerance:g}: the t^{kmax + 1} remainder already exceeds"
            f" the tolerance at t = {t_lo:.4g}"
        )
    return float(t_lo), t_max


def default_grid(model: ManifoldModel, t_min: float, t_max: float, count: int) -> np.ndarray:
    if model.kind is Kind.SPHERE and t_max > 1:
        raise InputError("sphere fits are only meaningful for t well below 1/r^2")
    return np.geomspace(t_min, t_max, count)
