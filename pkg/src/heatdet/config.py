"""Run configuration: a small TOML document describing one experiment batch.

Example::

    experiments = ["heatdet", "fit", "predict"]
    cutoff = 2500.0
    output_dir = "out"

    [model]
    kind = "circle"
    params = [6.283185307179586]

    [bundle]
    rank = 1
    Q = [0.0]

    [t_grid]
    t_min = 0.005
    t_max = 0.05
    count = 12
    spacing = "geometric"
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, fields, replace

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
import tomli_w

from .errors import ConfigError

EXPERIMENTS = ("heatdet", "scalar-heatdet", "trace", "content", "invariants", "fit", "predict", "zeta")
SPACINGS = ("geometric", "linear")
METHODS = ("auto", "full", "homogeneous")


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    params: tuple[float, ...]


@dataclass(frozen=True)
class BundleSpec:
    rank: int = 1
    Q: tuple[float, ...] = ()
    Q_imag: tuple[float, ...] = ()
    twists: tuple[float, ...] = ()


@dataclass(frozen=True)
class TGrid:
    t_min: float
    t_max: float
    count: int
    spacing: str = "geometric"

    def values(self):
        import numpy as np

        if self.spacing == "geometric":
            return np.geomspace(self.t_min, self.t_max, self.count)
        return np.linspace(self.t_min, self.t_max, self.count)


@dataclass(frozen=True)
class ZetaSpec:
    s: float
    lam: float
    t_split: float


@dataclass(frozen=True)
class RunConfig:
    model: ModelSpec
    t_grid: TGrid
    experiments: tuple[str, ...]
    cutoff: float
    bundle: BundleSpec = BundleSpec()
    band_limit: int = 0
    tolerance: float = 1e-6
    seed: int = 0
    output_dir: str = "out"
    kmax: int = 2
    method: str = "auto"
    fit_rtol: tuple[float, ...] = (0.01, 0.05, 0.15)
    fit_atol: float = 1e-3
    plot: bool = True
    cache: bool = True
    zeta: ZetaSpec | None = None

    def with_overrides(self, **kw) -> "RunConfig":
        return replace(self, **kw)


_TABLES = {"model": ModelSpec, "bundle": BundleSpec, "t_grid": TGrid, "zeta": ZetaSpec}


def _where(text: str, table: str | None, key: str) -> tuple[int | None, int | None]:
    """Line and column (1-based) of ``key`` inside ``[table]`` (None = top level)."""
    current = None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"\[\s*([^\]]+?)\s*\]", s)
        if m:
            current = m.group(1).strip().strip('"')
            if table is None and current == key:
                return i, line.index("[") + 1
            continue
        m = re.match(r'\s*"?([A-Za-z0-9_\-]+)"?\s*=', line)
        if m and m.group(1) == key and current == table:
            return i, m.start(1) + 1
    return None, None


def _err(text, table, key, msg) -> ConfigError:
    line, col = _where(text, table, key) if text is not None else (None, None)
    path = f"{table}.{key}" if table else key
    return ConfigError(f"{msg}: {path}", line=line, column=col)


def _as_float(v, text, table, key) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise _err(text, table, key, "expected a number")
    v = float(v)
    if not math.isfinite(v):
        raise _err(text, table, key, "expected a finite number")
    return v


def _as_int(v, text, table, key) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise _err(text, table, key, "expected an integer")
    return int(v)


def _as_floats(v, text, table, key) -> tuple[float, ...]:
    if not isinstance(v, list):
        v = [v]
    return tuple(_as_float(x, text, table, key) for x in v)


def _check_keys(data: dict, allowed, text, table):
    for k in data:
        if k not in allowed:
            raise _err(text, table, k, "unknown key")


def from_dict(data: dict, text: str | None = None) -> RunConfig:
    top = {f.name: f for f in fields(RunConfig)}
    _check_keys(data, top, text, None)
    for key in ("model", "t_grid", "experiments", "cutoff"):
        if key not in data:
            raise _err(text, None, key, "missing required key")
    sub = {}
    for name, cls in _TABLES.items():
        if name not in data:
            continue
        d = data[name]
        if not isinstance(d, dict):
            raise _err(text, None, name, "expected a table")
        _check_keys(d, {f.name for f in fields(cls)}, text, name)
        sub[name] = d

    m = sub["model"]
    if "kind" not in m or "params" not in m:
        raise _err(text, None, "model", "model needs kind and params")
    if not isinstance(m["kind"], str):
        raise _err(text, "model", "kind", "expected a string")
    model = ModelSpec(m["kind"], _as_floats(m["params"], text, "model", "params"))

    b = sub.get("bundle", {})
    bundle = BundleSpec(
        rank=_as_int(b.get("rank", 1), text, "bundle", "rank"),
        Q=_as_floats(b.get("Q", []), text, "bundle", "Q"),
        Q_imag=_as_floats(b.get("Q_imag", []), text, "bundle", "Q_imag"),
        twists=_as_floats(b.get("twists", []), text, "bundle", "twists"),
    )

    g = sub["t_grid"]
    for k in ("t_min", "t_max", "count"):
        if k not in g:
            raise _err(text, None, "t_grid", f"t_grid needs {k}")
    grid = TGrid(
        _as_float(g["t_min"], text, "t_grid", "t_min"),
        _as_float(g["t_max"], text, "t_grid", "t_max"),
        _as_int(g["count"], text, "t_grid", "count"),
        g.get("spacing", "geometric"),
    )
    if grid.spacing not in SPACINGS:
        raise _err(text, "t_grid", "spacing", f"spacing must be one of {', '.join(SPACINGS)}")
    if not 0 < grid.t_min <= grid.t_max or grid.count < 1:
        raise _err(text, None, "t_grid", "need 0 < t_min <= t_max and count >= 1")

    exps = data["experiments"]
    if not isinstance(exps, list) or not all(isinstance(e, str) for e in exps):
        raise _err(text, None, "experiments", "expected a list of experiment names")
    for e in exps:
        if e not in EXPERIMENTS:
            raise _err(text, None, "experiments", f"unknown experiment {e!r}")

    zeta = None
    if "zeta" in sub:
        z = sub["zeta"]
        try:
            zeta = ZetaSpec(**{k: _as_float(z[k], text, "zeta", k) for k in ("s", "lam", "t_split")})
        except KeyError as exc:
            raise _err(text, None, "zeta", f"zeta needs {exc.args[0]}") from None
    if "zeta" in exps and zeta is None:
        raise _err(text, None, "experiments", "the zeta experiment needs a [zeta] table")

    kw = dict(model=model, bundle=bundle, t_grid=grid, experiments=tuple(exps), zeta=zeta,
              cutoff=_as_float(data["cutoff"], text, None, "cutoff"))
    for k in ("band_limit", "seed", "kmax"):
        if k in data:
            kw[k] = _as_int(data[k], text, None, k)
    for k in ("tolerance", "fit_atol"):
        if k in data:
            kw[k] = _as_float(data[k], text, None, k)
    if "fit_rtol" in data:
        kw["fit_rtol"] = _as_floats(data["fit_rtol"], text, None, "fit_rtol")
    for k in ("plot", "cache"):
        if k in data:
            if not isinstance(data[k], bool):
                raise _err(text, None, k, "expected true or false")
            kw[k] = data[k]
    for k in ("output_dir", "method"):
        if k in data:
            if not isinstance(data[k], str):
                raise _err(text, None, k, "expected a string")
            kw[k] = data[k]
    if kw.get("method", "auto") not in METHODS:
        raise _err(text, None, "method", f"method must be one of {', '.join(METHODS)}")
    if kw.get("tolerance", 1.0) <= 0:
        raise _err(text, None, "tolerance", "tolerance must be positive")
    return RunConfig(**kw)


def parse(text: str) -> RunConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        col = getattr(exc, "colno", None)
        msg = getattr(exc, "msg", str(exc))
        raise ConfigError(f"malformed config: {msg}", line=line, column=col) from None
    return from_dict(data, text)


def load(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read())


def to_dict(cfg: RunConfig) -> dict:
    out = {
        "experiments": list(cfg.experiments),
        "cutoff": cfg.cutoff,
        "band_limit": cfg.band_limit,
        "tolerance": cfg.tolerance,
        "seed": cfg.seed,
        "output_dir": cfg.output_dir,
        "kmax": cfg.kmax,
        "method": cfg.method,
        "fit_rtol": list(cfg.fit_rtol),
        "fit_atol": cfg.fit_atol,
        "plot": cfg.plot,
        "cache": cfg.cache,
        "model": {"kind": cfg.model.kind, "params": list(cfg.model.params)},
        "bundle": {"rank": cfg.bundle.rank, "Q": list(cfg.bundle.Q), "Q_imag": list(cfg.bundle.Q_imag),
                   "twists": list(cfg.bundle.twists)},
        "t_grid": {"t_min": cfg.t_grid.t_min, "t_max": cfg.t_grid.t_max, "count": cfg.t_grid.count,
                   "spacing": cfg.t_grid.spacing},
    }
    if cfg.zeta is not None:
        out["zeta"] = {"s": cfg.zeta.s, "lam": cfg.zeta.lam, "t_split": cfg.zeta.t_split}
    return out


def serialize(cfg: RunConfig) -> str:
    return tomli_w.dumps(to_dict(cfg))
