"""Content-addressed on-disk cache for spectral bases and heat-determinant values.

Entries live under ``<root>/<key>/`` where ``key`` hashes the model, the
bundle and the cutoff.  ``HEATDET_CACHE`` overrides the root directory.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import numpy as np

from .models import BundleModel, ManifoldModel
from .spectrum import EigenMode, SpectralBasis, enumerate_basis

FORMAT_VERSION = 1


def cache_root() -> Path:
    env = os.environ.get("HEATDET_CACHE")
    if env:
        return Path(env)
    base = os.environ.get("XDG_CACHE_HOME") or os.path.join(os.path.expanduser("~"), ".cache")
    return Path(base) / "heatdet"


def _floats(a) -> list:
    # hex keeps every bit of each double
    return [float(v).hex() for v in np.ravel(a)]


def basis_key(model: ManifoldModel, bundle: BundleModel, cutoff: float) -> str:
    Q = np.asarray(bundle.Q, dtype=complex)
    desc = {
        "v": FORMAT_VERSION,
        "kind": model.kind.value,
        "lengths": _floats(model.lengths),
        "rank": bundle.rank,
        "Q_re": _floats(Q.real),
        "Q_im": _floats(Q.imag),
        "twists": None if bundle.twists is None else _floats(bundle.twists),
        "cutoff": float(cutoff).hex(),
    }
    blob = json.dumps(desc, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:24]


class Cache:
    def __init__(self, root: str | os.PathLike | None = None, enabled: bool = True):
        self.root = Path(root) if root is not None else cache_root()
        self.enabled = enabled

    def _dir(self, key: str) -> Path:
        return self.root / key

    # -- bases --------------------------------------------------------------

    def save_basis(self, basis: SpectralBasis) -> Path:
        key = basis_key(basis.model, basis.bundle, basis.cutoff)
        d = self._dir(key)
        d.mkdir(parents=True, exist_ok=True)
        path = d / "basis.npz"
        tmp = d / "basis.tmp.npz"
        np.savez(
            tmp,
            eigenvalues=basis.eigenvalues,
            geometric=basis.geometric,
            labels=basis.labels,
            channels=basis.channels,
            degrees=basis.degrees,
            Q_frame=basis.Q_frame,
            q=basis.q,
        )
        os.replace(tmp, path)
        return path

    def load_basis(self, model: ManifoldModel, bundle: BundleModel, cutoff: float) -> SpectralBasis | None:
        path = self._dir(basis_key(model, bundle, cutoff)) / "basis.npz"
        if not path.exists():
            return None
        with np.load(path) as z:
            arr = {k: z[k] for k in z.files}
        modes = tuple(
            EigenMode(float(lam), int(deg), int(c), i, tuple(int(v) for v in lab), float(g))
            for i, (lam, deg, c, lab, g) in enumerate(
                zip(arr["eigenvalues"], arr["degrees"], arr["channels"], arr["labels"], arr["geometric"])
            )
        )
        return SpectralBasis(
            model=model, bundle=bundle, cutoff=float(cutoff), modes=modes, Q_frame=arr["Q_frame"],
            q=arr["q"], labels=arr["labels"], channels=arr["channels"], eigenvalues=arr["eigenvalues"],
            geometric=arr["geometric"], degrees=arr["degrees"],
        )

    def basis(self, model: ManifoldModel, bundle: BundleModel, cutoff: float) -> SpectralBasis:
        """Cached basis, enumerated and stored on a miss."""
        if not self.enabled:
            return enumerate_basis(model, bundle, cutoff)
        hit = self.load_basis(model, bundle, cutoff)
        if hit is not None:
            return hit
        b = enumerate_basis(model, bundle, cutoff)
        self.save_basis(b)
        return b

    # -- heat-determinant values -------------------------------------------

    def _values_path(self, basis: SpectralBasis, tag: str) -> Path:
        key = basis_key(basis.model, basis.bundle, basis.cutoff)
        return self._dir(key) / f"values-{hashlib.sha256(tag.encode()).hexdigest()[:16]}.npz"

    def load_values(self, basis: SpectralBasis, tag: str):
        if not self.enabled:
            return None
        path = self._values_path(basis, tag)
        if not path.exists():
            return None
        with np.load(path) as z:
            return {k: z[k] for k in z.files}

    def save_values(self, basis: SpectralBasis, tag: str, **arrays) -> None:
        if not self.enabled:
            return
        path = self._values_path(basis, tag)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.stem + ".tmp.npz")
        np.savez(tmp, **arrays)
        os.replace(tmp, path)
