"""Lazy i.i.d. Uniform[0,1] sceneries on Z^d and quantile transforms.

Marks are produced by keyed counter-mode hashing of (seed, site), so a
scenery never materializes a box of sites: transient walks touch O(n)
scattered sites in an unbounded range and each query is pure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CoordinateOverflow
from .rng import bits_to_unit, site_hash

_COORD_LIMIT = 1 << 62


@dataclass
class Scenery:
    """Seed-deterministic map from lattice sites to marks in [0, 1).

    With `cache=True` repeated single-site queries are memoized; the hash is
    pure either way, so cache-free recomputation returns identical values and
    concurrent readers may share a scenery freely in cache-free mode.
    """

    seed: int
    d: int
    cache: bool = False
    _memo: dict = field(default_factory=dict, repr=False)

    def at(self, site) -> float:
        return scenery_at(self, site)

    def at_many(self, sites: np.ndarray) -> np.ndarray:
        """Vectorized marks for an (n, d) array of sites (never memoized)."""
        sites = np.asarray(sites, dtype=np.int64)
        _check_coords(sites)
        return bits_to_unit(site_hash(self.seed, sites))


def _check_coords(sites: np.ndarray) -> None:
    if sites.size and int(np.abs(sites).max()) >= _COORD_LIMIT:
        raise CoordinateOverflow("site coordinates must fit in 63-bit signed range")


def scenery_at(scenery: Scenery, site) -> float:
    """Mark at a single lattice site; pure function of (seed, site)."""
    key = tuple(int(c) for c in np.atleast_1d(site))
    if len(key) != scenery.d:
        raise ValueError(f"site must have {scenery.d} coordinates")
    if scenery.cache and key in scenery._memo:
        return scenery._memo[key]
    arr = np.array(key, dtype=np.int64)[None, :]
    _check_coords(arr)
    mark = float(bits_to_unit(site_hash(scenery.seed, arr))[0])
    if scenery.cache:
        scenery._memo[key] = mark
    return mark


def evaluate_along(path, scenery: Scenery) -> np.ndarray:
    """Marks xi_{S_1}, ..., xi_{S_n} along a sampled path (revisits repeat exactly)."""
    if path.n < 1:
        raise ValueError("path must be nonempty")
    return scenery.at_many(path.positions)


@dataclass(frozen=True)
class QuantileTransform:
    """Distribution function F with its generalized inverse F^{-1}.

    F^{-1}(s) = inf{x : F(x) >= s}, so F^{-1}(s) <= x iff s <= F(x) holds
    exactly (the Galois duality the composition law rests on).
    """

    F: object
    _xs: np.ndarray | None = None
    _Fs: np.ndarray | None = None
    _inverse_fn: object = None
    lo: float = 0.0
    hi: float = 1.0

    @classmethod
    def from_table(cls, xs, Fs) -> "QuantileTransform":
        """Step function from (x, F(x)) rows, interpreted right-continuously."""
        xs = np.asarray(xs, dtype=np.float64)
        Fs = np.asarray(Fs, dtype=np.float64)
        if xs.ndim != 1 or xs.shape != Fs.shape or xs.size == 0:
            raise ValueError("quantile table needs matching 1-d x and F columns")
        if np.any(np.diff(xs) <= 0) or np.any(np.diff(Fs) < 0):
            raise ValueError("quantile table must be strictly increasing in x, nondecreasing in F")
        if Fs[-1] < 1.0 - 1e-12:
            raise ValueError("table must reach F = 1")

        def F(x):
            x = np.asarray(x, dtype=np.float64)
            idx = np.searchsorted(xs, x, side="right") - 1
            out = np.where(idx >= 0, Fs[np.clip(idx, 0, xs.size - 1)], 0.0)
            return out if out.ndim else float(out)

        return cls(F=F, _xs=xs, _Fs=Fs, lo=float(xs[0]), hi=float(xs[-1]))

    @classmethod
    def from_callable(cls, F, lo: float = 0.0, hi: float = 1.0,
                      inverse=None) -> "QuantileTransform":
        """Wrap a distribution-function callable; `inverse`, when supplied,
        must honor the infimum convention and is trusted as part of the contract."""
        return cls(F=F, lo=float(lo), hi=float(hi), _inverse_fn=inverse)

    @classmethod
    def identity(cls) -> "QuantileTransform":
        return cls.from_callable(lambda x: np.asarray(x, dtype=np.float64),
                                 inverse=lambda s: np.asarray(s, dtype=np.float64))

    def inverse(self, s):
        """Generalized inverse, vectorized; infimum convention throughout."""
        s = np.asarray(s, dtype=np.float64)
        if self._inverse_fn is not None:
            return self._inverse_fn(s)
        if self._xs is not None:
            idx = np.searchsorted(self._Fs, s, side="left")
            out = self._xs[np.clip(idx, 0, self._xs.size - 1)]
            return out if out.ndim else float(out)
        flat = np.atleast_1d(s).astype(np.float64)
        out = np.array([self._bisect(float(v)) for v in flat])
        return out.reshape(s.shape) if s.ndim else float(out[0])

    def _bisect(self, s: float) -> float:
        lo, hi = self.lo, self.hi
        if self.F(lo) >= s:
            return lo
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if self.F(mid) >= s:
                hi = mid
            else:
                lo = mid
        return hi


def transform(marks, qt: QuantileTransform) -> np.ndarray:
    """Map uniform marks through F^{-1}, yielding i.i.d. draws from F at fresh sites."""
    marks = np.asarray(marks, dtype=np.float64)
    if marks.size and (marks.min() < 0.0 or marks.max() > 1.0):
        raise ValueError("marks must lie in [0, 1]")
    return qt.inverse(marks)
