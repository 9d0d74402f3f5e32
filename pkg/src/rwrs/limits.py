"""Limit constants and limit Gaussian objects.

The variance constant is 1 + 2g for transient walks and 2/(pi A) in the
recurrent d in {1,2} regimes.  The limit process is simulated exactly in
distribution on grids: a Brownian sheet from independent cell increments,
tied down in the threshold direction (Kiefer-Muller) and optionally in the
time direction (Brownian pillow).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import FitDiverged, MissingBoundary, MissingParameter
from .rng import derive_seed
from .walk import (
    REGIME_CAUCHY,
    REGIME_PLANAR,
    REGIME_TRANSIENT,
    HeavyTailLaw,
    WalkModel,
)

KIEFER_MULLER = "KIEFER_MULLER"
PILLOW = "PILLOW"

_DEFAULT_LEVELS = tuple(np.round(np.arange(0.001, 1.0, 0.001), 3))


@dataclass(frozen=True)
class LimitConstant:
    c: float
    regime: str
    provenance: str
    error_bound: float = 0.0


def limit_constant(model: WalkModel) -> LimitConstant:
    """Variance constant of the limit process for a built model."""
    if model.regime == REGIME_TRANSIENT:
        if model.green_value is None:
            raise MissingParameter("transient model lacks its Green sum")
        return LimitConstant(
            c=1.0 + 2.0 * model.green_value,
            regime=model.regime,
            provenance="1 + 2 * green_sum",
            error_bound=2.0 * (model.green_error or 0.0),
        )
    if model.A is None:
        raise MissingParameter(f"regime {model.regime} needs the scale parameter A")
    c = 2.0 / (math.pi * model.A)
    err = 0.0
    if model.A_error:
        err = 2.0 * model.A_error / (math.pi * model.A**2)
    return LimitConstant(c=c, regime=model.regime, provenance="2 / (pi A)", error_bound=err)


@dataclass(frozen=True)
class AEstimate:
    A: float
    band: float
    slopes: tuple[float, float]
    n_pair: tuple[int, int]


def estimate_A(model_or_law, u_grid=None, n_pair=(4096, 16384)) -> AEstimate:
    """Cauchy scale A from -log phi(u/n)^n ~ A|u|, extrapolated in n.

    Fits the small-u slope at two values of n and removes the leading 1/n
    correction with a two-point Richardson step.  Raises FitDiverged when the
    slopes collapse with n, the signature of a finite-variance law.
    """
    law = model_or_law.law if isinstance(model_or_law, WalkModel) else model_or_law
    if isinstance(model_or_law, WalkModel) and model_or_law.regime != REGIME_CAUCHY:
        raise FitDiverged(f"estimate_A applies to regime {REGIME_CAUCHY} models")
    char = law.char_function
    if u_grid is None:
        u_grid = np.linspace(0.1, 1.0, 10)
    u = np.asarray(u_grid, dtype=np.float64)
    n1, n2 = int(n_pair[0]), int(n_pair[1])

    slopes = []
    resids = []
    for n in (n1, n2):
        phi = np.abs(np.asarray(char(u / n), dtype=np.complex128))
        if np.any(phi <= 0.0):
            raise FitDiverged("characteristic function vanished inside the fit window")
        y = -n * np.log(phi)
        slope = float((y * u).sum() / (u * u).sum())
        slopes.append(slope)
        resids.append(float(np.abs(y - slope * u).max()))
    s1, s2 = slopes
    if s1 <= 0.0 or s2 <= 0.0 or s2 / s1 < 0.5:
        raise FitDiverged(
            "slope collapses with n (ratio %.3g); law is not in the Cauchy domain" % (s2 / max(s1, 1e-300))
        )
    a = (n2 * s2 - n1 * s1) / (n2 - n1)
    band = abs(s2 - a) + max(resids)
    return AEstimate(A=float(a), band=float(band), slopes=(s1, s2), n_pair=(n1, n2))


# ---------------------------------------------------------------------------
# Gaussian sheets


@dataclass(frozen=True)
class GaussianSheet:
    grid_s: np.ndarray
    grid_t: np.ndarray
    values: np.ndarray  # shape (|s|, |t|)
    kind: str
    seed: int


def _augment(grid: np.ndarray, endpoints) -> np.ndarray:
    return np.unique(np.concatenate([np.asarray(grid, dtype=np.float64), endpoints]))


def _km_values(grid_s, grid_t, rng: np.random.Generator) -> tuple[np.ndarray, ...]:
    """Kiefer-Muller values on the augmented grid via cumulative cell increments."""
    sa = _augment(grid_s, [0.0, 1.0])
    ta = _augment(grid_t, [0.0])
    ds = np.diff(sa)
    dt = np.diff(ta)
    cells = rng.standard_normal((ds.size, dt.size)) * np.sqrt(np.outer(ds, dt))
    sheet = np.zeros((sa.size, ta.size))
    sheet[1:, 1:] = cells.cumsum(axis=0).cumsum(axis=1)
    km = sheet - sa[:, None] * sheet[-1:, :]
    return sa, ta, km


def sample_kiefer_muller(grid_s, grid_t, seed: int) -> GaussianSheet:
    """One Kiefer-Muller sheet on the requested grid, exact in distribution.

    Built as B(s,t) - s B(1,t) from a Brownian sheet of independent cell
    increments, so the covariance (t ^ t')(s ^ s' - s s') holds exactly on
    the grid and the s in {0,1}, t = 0 boundaries vanish identically.
    """
    grid_s = np.asarray(grid_s, dtype=np.float64)
    grid_t = np.asarray(grid_t, dtype=np.float64)
    rng = np.random.default_rng(seed)
    sa, ta, km = _km_values(grid_s, grid_t, rng)
    rows = np.searchsorted(sa, grid_s)
    cols = np.searchsorted(ta, grid_t)
    return GaussianSheet(grid_s=grid_s, grid_t=grid_t,
                         values=km[np.ix_(rows, cols)], kind=KIEFER_MULLER, seed=int(seed))


def pillow_from_km(sheet: GaussianSheet) -> GaussianSheet:
    """Tie the time direction down: P(s,t) = W(s,t) - t W(s,1)."""
    if sheet.kind != KIEFER_MULLER:
        raise ValueError("pillow_from_km expects a Kiefer-Muller sheet")
    t = sheet.grid_t
    at_one = np.flatnonzero(t == 1.0)
    if at_one.size == 0:
        raise MissingBoundary("grid_t must contain t = 1")
    w1 = sheet.values[:, at_one[0]]
    values = sheet.values - t[None, :] * w1[:, None]
    return GaussianSheet(grid_s=sheet.grid_s, grid_t=sheet.grid_t,
                         values=values, kind=PILLOW, seed=sheet.seed)


def km_covariance(points_a, points_b=None) -> np.ndarray:
    """Theoretical KM covariance matrix between lists of (s, t) points."""
    pa = np.asarray(points_a, dtype=np.float64)
    pb = pa if points_b is None else np.asarray(points_b, dtype=np.float64)
    s, t = pa[:, 0][:, None], pa[:, 1][:, None]
    s2, t2 = pb[:, 0][None, :], pb[:, 1][None, :]
    return np.minimum(t, t2) * (np.minimum(s, s2) - s * s2)


def pillow_covariance(points_a, points_b=None) -> np.ndarray:
    pa = np.asarray(points_a, dtype=np.float64)
    pb = pa if points_b is None else np.asarray(points_b, dtype=np.float64)
    s, t = pa[:, 0][:, None], pa[:, 1][:, None]
    s2, t2 = pb[:, 0][None, :], pb[:, 1][None, :]
    return (np.minimum(t, t2) - t * t2) * (np.minimum(s, s2) - s * s2)


# ---------------------------------------------------------------------------
# pillow sup quantiles


@dataclass(frozen=True)
class PillowQuantiles:
    """Simulated null distribution of sup |pillow| over an m x m grid."""

    resolution: int
    replicates: int
    seed: int
    levels: np.ndarray
    values: np.ndarray
    sups: np.ndarray  # sorted
    refinement: dict

    def critical_value(self, alpha: float) -> float:
        """(1 - alpha) quantile of the simulated sup; level <= 0 maps to 0."""
        level = 1.0 - alpha
        if level <= 0.0:
            return 0.0
        return float(np.quantile(self.sups, level))

    def p_value(self, value: float) -> float:
        return float(np.mean(self.sups > value))

    def table_rows(self):
        return list(zip(self.levels.tolist(), self.values.tolist()))


@dataclass(frozen=True)
class QuantileTable:
    """Interpolated (level, sup_value) table, e.g. re-read from a quantiles CSV.

    Exposes the same critical_value / p_value surface as PillowQuantiles but
    at table resolution.
    """

    levels: np.ndarray
    values: np.ndarray

    def critical_value(self, alpha: float) -> float:
        level = 1.0 - alpha
        if level <= 0.0:
            return 0.0
        return float(np.interp(level, self.levels, self.values))

    def p_value(self, value: float) -> float:
        return 1.0 - float(np.interp(value, self.values, self.levels,
                                     left=0.0, right=1.0))


def _pillow_sups(m: int, count: int, seed: int, threads: int = 1) -> np.ndarray:
    grid = np.linspace(0.0, 1.0, m + 1)
    ds = np.diff(grid)
    area = np.sqrt(np.outer(ds, ds))

    def one(idx: int) -> float:
        rng = np.random.default_rng(derive_seed(seed, idx))
        cells = rng.standard_normal((m, m)) * area
        sheet = np.zeros((m + 1, m + 1))
        sheet[1:, 1:] = cells.cumsum(axis=0).cumsum(axis=1)
        km = sheet - grid[:, None] * sheet[-1:, :]
        pillow = km - grid[None, :] * km[:, -1:]
        return float(np.abs(pillow).max())

    if threads and threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            sups = np.fromiter(pool.map(one, range(count)), dtype=np.float64, count=count)
    else:
        sups = np.fromiter((one(i) for i in range(count)), dtype=np.float64, count=count)
    return sups


def pillow_sup_quantiles(m: int, replicates: int, seed: int, *, levels=None,
                         threads: int = 1) -> PillowQuantiles:
    """Empirical quantiles of sup |pillow| over R independent m x m sheets.

    Also recomputes the 95% quantile at resolution 2m on R/4 replicates; the
    relative shift quantifies how much the grid discretization bites.
    """
    if m < 20:
        raise ValueError("grid resolution m must be >= 20")
    if replicates < 1000:
        raise ValueError("need at least 1000 replicates")
    levels = np.asarray(levels if levels is not None else _DEFAULT_LEVELS, dtype=np.float64)
    sups = np.sort(_pillow_sups(m, replicates, seed, threads))
    values = np.quantile(sups, levels)

    fine = _pillow_sups(2 * m, max(replicates // 4, 1000), derive_seed(seed, 1 << 32), threads)
    q95 = float(np.quantile(sups, 0.95))
    q95_fine = float(np.quantile(fine, 0.95))
    refinement = {
        "resolution": 2 * m,
        "replicates": int(fine.size),
        "q95_coarse": q95,
        "q95_fine": q95_fine,
        "rel_change": abs(q95_fine - q95) / q95 if q95 else 0.0,
    }
    return PillowQuantiles(resolution=int(m), replicates=int(replicates), seed=int(seed),
                           levels=levels, values=values, sups=sups, refinement=refinement)
