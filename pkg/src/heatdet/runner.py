"""Execute a run configuration and write CSV tables (and optional SVG plots)."""

from __future__ import annotations

import csv
import logging
import math
from pathlib import Path

import numpy as np

from . import asymptotics, fitkit, invariants, kernel
from .cache import Cache
from .config import RunConfig, load
from .errors import ConfigError, FitError, HeatdetError, InputError, TruncationError
from .models import make_bundle, make_model
from .quadrature import build_rule

log = logging.getLogger("heatdet")

EXIT_OK, EXIT_INPUT, EXIT_FAIL = 0, 1, 2

# tried in order until the kept pair set fits in memory
SPECTRAL_BUDGETS = (1e-14, 1e-10, 1e-7, 1e-4, 1e-2)

COLUMNS = {
    "heatdet": ("t", "K_re", "K_im", "tail_bound", "quad_estimate"),
    "scalar-heatdet": ("t", "K_re", "K_im", "integrand_scale", "pass"),
    "trace": ("t", "theta", "theta_pred", "rel_err"),
    "content": ("t", "content", "content_pred", "abs_err"),
    "invariants": ("t", "K_direct", "K_spectral", "spectral_bound", "abs_diff", "pass"),
    "fit": ("k", "b_pred", "b_hat", "stderr", "pass"),
    "predict": ("t", "K_re", "K_pred", "y", "y_pred"),
    "zeta": ("s", "lam", "t_split", "value", "error"),
    "summary": ("coefficient", "predicted", "fitted", "stderr", "status"),
}


def fmt(v) -> str:
    """17 significant digits, enough to round-trip every double."""
    if isinstance(v, (bool, np.bool_)):
        return "PASS" if v else "FAIL"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return f"{float(v):.17g}"


def emit_csv(path: Path, columns, rows) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(v) for v in r])
    return path


def build(cfg: RunConfig):
    """Model and bundle described by a configuration."""
    model = make_model(cfg.model.kind, cfg.model.params)
    N = cfg.bundle.rank
    Q = np.asarray(cfg.bundle.Q, dtype=float) if cfg.bundle.Q else np.zeros(N * N)
    if cfg.bundle.Q_imag:
        if len(cfg.bundle.Q_imag) != Q.size:
            raise InputError("Q_imag must have as many entries as Q")
        Q = Q + 1j * np.asarray(cfg.bundle.Q_imag, dtype=float)
    if Q.size == 1 and N > 1:
        Q = Q[0] * np.eye(N)
    twists = list(cfg.bundle.twists) if cfg.bundle.twists else None
    return model, make_bundle(model, N, Q, twists)


class Run:
    def __init__(self, cfg: RunConfig, out: Path, threads: int | None, plot: bool, cache: Cache):
        self.cfg, self.out, self.threads, self.plot = cfg, out, threads, plot
        self.model, self.bundle = build(cfg)
        self.basis = cache.basis(self.model, self.bundle, cfg.cutoff)
        need = self.basis.dim * self.basis.max_degree
        band = cfg.band_limit or max(1, need)
        self.rule = build_rule(self.model, band)
        self.cache = cache
        self.ts = cfg.t_grid.values()
        self.failures: list[str] = []
        self.summary: list[tuple] = []
        self._K = None
        self._fit = None

    # -- shared computations ----------------------------------------------

    def K(self):
        if self._K is None:
            for t in self.ts:
                kernel._check(self.basis, float(t), self.cfg.tolerance)
            tag = "|".join([str(self.rule.band_limit), self.cfg.method] + [float(t).hex() for t in self.ts])
            hit = self.cache.load_values(self.basis, tag)
            if hit is not None:
                self._K = [invariants.DetValue(complex(v), float(t), float(b), float(q), str(hit["method"]))
                           for v, t, b, q in zip(hit["value"], hit["t"], hit["tail"], hit["quad"])]
            else:
                self._K = invariants.heat_determinant_many(
                    self.basis, self.rule, self.ts, method=self.cfg.method, tol=self.cfg.tolerance,
                    threads=self.threads)
                self.cache.save_values(
                    self.basis, tag, t=self.ts, value=np.array([d.value for d in self._K]),
                    tail=np.array([d.tail_bound for d in self._K]),
                    quad=np.array([d.quadrature_estimate for d in self._K]),
                    method=np.array(self._K[0].method))
        return self._K

    def y(self):
        return fitkit.normalize(self.ts, self.K(), self.model, self.bundle).y

    def fitted(self):
        if self._fit is None:
            self._fit = fitkit.fit(self.ts, self.y(), kmax=self.cfg.kmax)
        return self._fit

    def write(self, name, rows):
        path = emit_csv(self.out / f"{name.replace('-', '_')}.csv", COLUMNS[name], rows)
        log.info("wrote %s (%d rows)", path, len(rows))

    # -- experiments --------------------------------------------------------

    def heatdet(self):
        self.write("heatdet", [(d.t, d.value.real, d.value.imag, d.tail_bound, d.quadrature_estimate)
                               for d in self.K()])

    def scalar_heatdet(self):
        rows = []
        for t in self.ts:
            d = invariants.scalar_heat_determinant(self.basis, self.rule, float(t), method=self.cfg.method,
                                                   tol=self.cfg.tolerance, threads=self.threads)
            tol = 1e-6 if self.model.kind.value == "sphere" else 1e-8
            ok = abs(d.value) <= tol * max(d.scale, 1e-300)
            rows.append((d.t, d.value.real, d.value.imag, d.scale, ok))
            if not ok:
                self.failures.append(f"scalar heat determinant does not vanish at t={t:g}")
        self.write("scalar-heatdet", rows)

    def trace(self):
        rows = []
        for t in self.ts:
            th = kernel.heat_trace(self.basis, float(t))
            pred = asymptotics.predicted_trace(self.model, self.bundle, float(t))
            rows.append((float(t), th, pred, abs(th - pred) / abs(pred)))
        self.write("trace", rows)

    def content(self):
        rows = []
        for t in self.ts:
            c = kernel.heat_content(self.basis, float(t))
            q = float(np.real(np.asarray(self.bundle.Q)).ravel()[0])
            pred = self.model.volume * math.exp(-q * float(t))
            rows.append((float(t), c, pred, abs(c - pred)))
        self.write("content", rows)

    def invariants(self):
        rows = []
        for d in self.K():
            for budget in SPECTRAL_BUDGETS:
                try:
                    s = invariants.k_from_spectral(self.basis, None, d.t, budget=budget)
                    break
                except InputError as exc:
                    if budget == SPECTRAL_BUDGETS[-1]:
                        raise InputError(f"invariants experiment at t={d.t:g}: {exc}; use a smaller cutoff") from exc
            diff = abs(d.value - s.value)
            ok = diff <= s.tail_bound + d.tail_bound + 1e-10 * abs(d.value)
            rows.append((d.t, d.value.real, s.value.real, s.tail_bound, diff, ok))
            if not ok:
                self.failures.append(f"spectral form disagrees with direct K at t={d.t:g}")
        self.write("invariants", rows)

    def fit(self):
        res = self.fitted()
        b = asymptotics.b_coeffs(self.model, self.bundle)
        rows = []
        for k in range(self.cfg.kmax + 1):
            pred = b.get(k, math.nan)
            rtol = self.cfg.fit_rtol[min(k, len(self.cfg.fit_rtol) - 1)]
            ok = bool(abs(res.bhat[k] - pred) <= max(rtol * abs(pred), self.cfg.fit_atol))
            rows.append((k, pred, res.bhat[k], res.stderr[k], ok))
            self.summary.append((f"b{k}", pred, res.bhat[k], res.stderr[k], ok))
            log.info("b%d, predicted %.6g, fitted %.6g±%.2g, %s", k, pred, res.bhat[k], res.stderr[k],
                     "PASS" if ok else "FAIL")
            if not ok:
                self.failures.append(f"fitted b{k} = {res.bhat[k]:.6g} misses prediction {pred:.6g}")
        log.info("fit window [%g, %g], condition %.3g, residual rms %.3g",
                 *res.t_window, res.condition, res.residual_rms)
        self.write("fit", rows)

    def predict(self):
        kmax = min(self.cfg.kmax, 2)
        pred = asymptotics.predicted_K(self.model, self.bundle, self.ts, kmax)
        y = self.y()
        ypred = pred / (asymptotics.prefactor(self.model.dim, self.ts) * self.model.volume)
        self.write("predict", [(float(t), d.value.real, p, yy, yp)
                               for t, d, p, yy, yp in zip(self.ts, self.K(), pred, y, ypred)])
        if self.plot:
            from .plotting import plot_series

            b = asymptotics.b_coeffs(self.model, self.bundle)
            path = plot_series(self.out / "predict.svg", self.ts, y, {k: b[k] for k in range(kmax + 1)},
                               title=f"{self.model.kind.value}, N={self.bundle.rank}")
            log.info("wrote %s", path)

    def zeta(self):
        z = self.cfg.zeta
        val = invariants.zeta(self.basis, self.rule, z.s, z.lam, z.t_split, kmax=self.cfg.kmax)
        self.write("zeta", [(z.s, z.lam, z.t_split, val.value, val.error)])

    def execute(self):
        for name in self.cfg.experiments:
            log.info("experiment %s", name)
            getattr(self, name.replace("-", "_"))()
        self.write("summary", self.summary)


def run(config_path, out=None, threads: int | None = None, plot: bool | None = None,
        cache_dir=None) -> int:
    """Run every experiment of a configuration file; returns the exit code."""
    try:
        cfg = load(config_path)
    except OSError as exc:
        log.error("cannot read config: %s", exc)
        return EXIT_INPUT
    except ConfigError as exc:
        log.error("%s: %s", config_path, exc)
        return EXIT_INPUT
    out = Path(out if out is not None else cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        log.error("cannot create output directory: %s", exc)
        return EXIT_INPUT
    try:
        r = Run(cfg, out, threads, cfg.plot if plot is None else plot,
                Cache(cache_dir, enabled=cfg.cache))
        r.execute()
    except TruncationError as exc:
        log.error("tolerance failure: %s", exc)
        return EXIT_FAIL
    except (InputError, ConfigError) as exc:
        log.error("input error: %s", exc)
        return EXIT_INPUT
    except FitError as exc:
        log.error("fit failed: %s", exc)
        return EXIT_FAIL
    except OSError as exc:
        log.error("I/O failure: %s", exc)
        return EXIT_INPUT
    except HeatdetError as exc:
        log.error("%s", exc)
        return EXIT_FAIL
    for f in r.failures:
        log.error("FAIL: %s", f)
    return EXIT_FAIL if r.failures else EXIT_OK


def validate(config_path) -> int:
    """Parse the configuration and check that the model and basis can be built."""
    try:
        cfg = load(config_path)
        model, bundle = build(cfg)
        from .spectrum import enumerate_basis

        basis = enumerate_basis(model, bundle, cfg.cutoff)
        tmin = kernel.t_min_valid(basis, cfg.tolerance)
    except OSError as exc:
        log.error("cannot read config: %s", exc)
        return EXIT_INPUT
    except HeatdetError as exc:
        log.error("%s: %s", config_path, exc)
        return EXIT_INPUT
    log.info("%s: ok (%d modes, tail-valid for t >= %.4g)", config_path, len(basis), tmin)
    if cfg.t_grid.t_min < tmin:
        log.warning("t_min %g lies below the tail-valid window", cfg.t_grid.t_min)
    return EXIT_OK
