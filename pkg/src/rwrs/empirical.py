"""Sequential empirical process, occupation statistics, and normings.

The sheet W_n(s, t) = sum_{k <= floor(nt)} (1{mark_k <= s} - s) is stored
un-normalized (integer count minus linear centering) together with the
regime norming a_n, so the same raw sheet serves both the limit-theorem
verification and the U-statistic identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, GridUnsorted
from .walk import REGIME_TRANSIENT, Path

_PACK_OFFSETS = {2: 1 << 31, 3: 1 << 20}


def pack_sites(positions: np.ndarray) -> np.ndarray:
    """Pack (n, d) integer sites into single int64 keys for d <= 3.

    Raises ValueError when coordinates exceed the packing range; callers fall
    back to row-wise uniqueness.
    """
    positions = np.asarray(positions, dtype=np.int64)
    d = positions.shape[1]
    if d == 1:
        return positions[:, 0].copy()
    if d not in _PACK_OFFSETS:
        raise ValueError("packing supports d <= 3")
    off = _PACK_OFFSETS[d]
    if positions.size and int(np.abs(positions).max()) >= off:
        raise ValueError("coordinates exceed packing range")
    shifted = (positions + off).astype(np.uint64)
    bits = 32 if d == 2 else 21
    key = shifted[:, 0]
    for j in range(1, d):
        key = (key << np.uint64(bits)) | shifted[:, j]
    return key.view(np.int64)


def _site_keys(positions: np.ndarray) -> np.ndarray:
    try:
        return pack_sites(positions)
    except ValueError:
        return positions  # np.unique(axis=0) path


def _unique_counts(positions: np.ndarray):
    keys = _site_keys(positions)
    if keys.ndim == 1:
        _, inverse, counts = np.unique(keys, return_inverse=True, return_counts=True)
    else:
        _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    return inverse, counts


@dataclass(frozen=True)
class OccupationStats:
    """Visit counts N_n(x) over the first n steps with their square sum."""

    n: int
    lambda_: int
    sup_count: int
    distinct_sites: int
    sites: np.ndarray
    visit_counts: np.ndarray

    def counts(self) -> dict:
        """Site -> visit count as a plain dict (built on demand)."""
        return {tuple(int(c) for c in s): int(v)
                for s, v in zip(self.sites, self.visit_counts)}

    def to_json_dict(self) -> dict:
        return {"n": self.n, "lambda": self.lambda_, "sup": self.sup_count,
                "distinct_sites": self.distinct_sites}


def occupation_stats(path: Path, n_prefix: int) -> OccupationStats:
    """Counts, Lambda_n = sum N_n(x)^2 and sup_x N_n(x) over steps 1..n_prefix."""
    if not 1 <= n_prefix <= path.n:
        raise ValueError("n_prefix must lie in 1..path length")
    pos = path.positions[:n_prefix]
    keys = _site_keys(pos)
    if keys.ndim == 1:
        _, idx, counts = np.unique(keys, return_index=True, return_counts=True)
    else:
        _, idx, counts = np.unique(keys, axis=0, return_index=True, return_counts=True)
    return OccupationStats(
        n=int(n_prefix),
        lambda_=int((counts.astype(np.int64) ** 2).sum()),
        sup_count=int(counts.max()),
        distinct_sites=int(counts.size),
        sites=pos[idx],
        visit_counts=counts.astype(np.int64),
    )


def lambda_sup(positions: np.ndarray) -> tuple[int, int, int]:
    """(Lambda, sup count, distinct sites) without building site objects."""
    _, counts = _unique_counts(positions)
    return int((counts.astype(np.int64) ** 2).sum()), int(counts.max()), int(counts.size)


def cross_intersection(path: Path, s: float, t: float, n: int) -> int:
    """sum_x N_{floor(ns)}(x) * N_{floor(nt)}(x), exactly."""
    if not (0.0 <= s <= 1.0 and 0.0 <= t <= 1.0):
        raise ValueError("s and t must be fractions in [0, 1]")
    a, b = int(math.floor(n * s)), int(math.floor(n * t))
    a, b = min(a, b), max(a, b)
    if a == 0:
        return 0
    if b > path.n:
        raise ValueError("floor(n*max(s,t)) exceeds path length")
    inverse, counts = _unique_counts(path.positions[:b])
    counts_a = np.bincount(inverse[:a], minlength=counts.size)
    return int((counts_a.astype(np.int64) * counts.astype(np.int64)).sum())


def block_cross_sum(path: Path, a: float, b: float, n: int) -> int:
    """sum over k <= floor(an) < l <= floor(bn) of 1{S_k = S_l} (same-site time pairs)."""
    ka, kb = int(math.floor(n * a)), int(math.floor(n * b))
    if not 0 <= ka <= kb <= path.n:
        raise ValueError("need 0 <= floor(an) <= floor(bn) <= path length")
    if ka == 0 or kb == ka:
        return 0
    inverse, counts = _unique_counts(path.positions[:kb])
    counts_a = np.bincount(inverse[:ka], minlength=counts.size).astype(np.int64)
    return int((counts_a * (counts.astype(np.int64) - counts_a)).sum())


# ---------------------------------------------------------------------------
# normings


@dataclass(frozen=True)
class Norming:
    """Regime norming rule: sqrt(n) when transient, sqrt(n log n) otherwise."""

    regime: str

    def value(self, n: int) -> float:
        return norming_value(self.regime, n)


def norming_value(regime: str, n: int) -> float:
    if regime == REGIME_TRANSIENT:
        if n < 1:
            raise DomainError("norming needs n >= 1")
        return math.sqrt(n)
    if n < 2:
        raise DomainError("log-normed regimes need n >= 2")
    return math.sqrt(n * math.log(n))


# ---------------------------------------------------------------------------
# the sequential empirical sheet


@dataclass(frozen=True)
class EmpiricalSheet:
    """W_n on a threshold/time grid, raw values plus the norming a_n.

    values[i, j] = sum_{k <= floor(n t_j)} (1{mark_k <= s_i} - s_i); the
    companion z_partial[j] stores the scenery partial sum Z_{floor(n t_j)}.
    """

    grid_s: np.ndarray
    grid_t: np.ndarray
    values: np.ndarray
    a_n: float
    n: int
    z_partial: np.ndarray

    def normalized(self) -> np.ndarray:
        return self.values / self.a_n


def _check_grid(grid: np.ndarray, name: str) -> np.ndarray:
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size == 0:
        raise GridUnsorted(f"{name} must be a nonempty 1-d grid")
    if np.any(np.diff(grid) < 0):
        raise GridUnsorted(f"{name} must be sorted ascending")
    if grid[0] < 0.0 or grid[-1] > 1.0:
        raise GridUnsorted(f"{name} must lie in [0, 1]")
    return grid


def empirical_sheet(marks, grid_s, grid_t, norming: Norming) -> EmpiricalSheet:
    """Evaluate the sequential empirical process on a grid in O(n + |s||t|).

    Marks are bucketed once by threshold cell (ties count as <= s) and once by
    time cell; a double prefix sum then yields every grid value exactly.
    """
    marks = np.asarray(marks, dtype=np.float64)
    n = marks.size
    if n < 1:
        raise ValueError("need at least one mark")
    grid_s = _check_grid(grid_s, "grid_s")
    grid_t = _check_grid(grid_t, "grid_t")

    n_at_t = np.floor(n * grid_t + 1e-9).astype(np.int64)
    s_cell = np.searchsorted(grid_s, marks, side="left")
    t_cell = np.searchsorted(n_at_t, np.arange(1, n + 1), side="left")

    table = np.zeros((grid_t.size + 1, grid_s.size + 1), dtype=np.int64)
    np.add.at(table, (t_cell, s_cell), 1)
    counts = table.cumsum(axis=0).cumsum(axis=1)[: grid_t.size, : grid_s.size]

    values = counts.T.astype(np.float64) - grid_s[:, None] * n_at_t[None, :].astype(np.float64)

    prefix_marks = np.concatenate([[0.0], np.cumsum(marks)])
    z_partial = prefix_marks[n_at_t]

    a_n = norming.value(n)
    return EmpiricalSheet(grid_s=grid_s, grid_t=grid_t, values=values,
                          a_n=a_n, n=n, z_partial=z_partial)


def empirical_sheet_reference(marks, grid_s, grid_t) -> np.ndarray:
    """Direct double loop over grid cells; the oracle the fast path is tested against."""
    marks = np.asarray(marks, dtype=np.float64)
    n = marks.size
    grid_s = np.asarray(grid_s, dtype=np.float64)
    grid_t = np.asarray(grid_t, dtype=np.float64)
    out = np.zeros((grid_s.size, grid_t.size))
    for j, t in enumerate(grid_t):
        m = int(math.floor(n * t + 1e-9))
        for i, s in enumerate(grid_s):
            out[i, j] = np.sum((marks[:m] <= s).astype(np.float64) - s)
    return out
