"""Change-point test and degenerate U-statistics over scenery marks.

The test statistic maximizes, over split points k and thresholds s, the
distance between the first-k empirical counts and their share of the total
counts.  Both the fast scan and the brute-force oracle work on the integer
numerator n * C_k(j) - k * tot_j, so they agree bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .empirical import EmpiricalSheet, norming_value
from .errors import (
    MeasureNotRepresentable,
    MissingBoundary,
    MissingQuantiles,
    TooShort,
)
from .limits import PillowQuantiles, limit_constant
from .walk import WalkModel

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap if not (args and callable(args[0])) else args[0]


@njit(cache=True, nogil=True)
def _extend_hull(b, start, hi, tot, cnt, hull, hlen, upper):
    """Resume the monotone chain for block b from threshold index `start`.

    Valid for the upper hull under suffix count increments: raising suffix
    points can only pop more of the kept prefix, never resurrect a popped
    vertex.  The lower hull must be rebuilt from the block start instead
    (callers pass start = block lo with hlen reset).
    """
    length = hlen[b]
    while length > 0 and hull[b, length - 1] >= start:
        length -= 1
    for j in range(start, hi):
        x = tot[j]
        y = cnt[j]
        while length >= 2:
            o = hull[b, length - 2]
            a = hull[b, length - 1]
            cross = (tot[a] - tot[o]) * (y - cnt[o]) - (cnt[a] - cnt[o]) * (x - tot[o])
            if upper:
                if cross >= 0:
                    length -= 1
                else:
                    break
            else:
                if cross <= 0:
                    length -= 1
                else:
                    break
        hull[b, length] = j
        length += 1
    hlen[b] = length


@njit(cache=True, nogil=True)
def _tn_scan_kernel(ranks, tot, n):
    """Max over k < n, thresholds j of |n*C_k(j) - k*tot_j| (integer numerator).

    Sqrt-decomposition over thresholds: each block keeps convex hulls of the
    points (tot_j, C_k(j)), suffix count updates touch one block directly and
    the rest through lazy offsets, and per-block kinetic pointers track the
    extremes as the slope k/n grows.  Every block is re-queried at every
    step: the max side decays between updates but the min side grows with k
    even for untouched blocks, so deferring queries would miss extremes.
    """
    m = tot.shape[0]
    B = int(math.sqrt(m)) + 1
    if B < 4:
        B = 4
    nb = (m + B - 1) // B
    cnt = np.zeros(m, np.int64)
    lazy = np.zeros(nb, np.int64)
    hull_u = np.zeros((nb, B), np.int64)
    hull_l = np.zeros((nb, B), np.int64)
    len_u = np.zeros(nb, np.int64)
    len_l = np.zeros(nb, np.int64)
    ptr_u = np.zeros(nb, np.int64)
    ptr_l = np.zeros(nb, np.int64)

    for b in range(nb):
        lo = b * B
        hi = min(m, lo + B)
        _extend_hull(b, lo, hi, tot, cnt, hull_u, len_u, True)
        _extend_hull(b, lo, hi, tot, cnt, hull_l, len_l, False)
        ptr_u[b] = len_u[b] - 1
        ptr_l[b] = 0

    best = np.int64(0)
    for k in range(1, n):
        r = ranks[k - 1]
        b = r // B
        hi = min(m, b * B + B)
        for j in range(r, hi):
            cnt[j] += 1
        _extend_hull(b, r, hi, tot, cnt, hull_u, len_u, True)
        len_l[b] = 0
        _extend_hull(b, b * B, hi, tot, cnt, hull_l, len_l, False)
        ptr_u[b] = len_u[b] - 1
        ptr_l[b] = 0
        for bb in range(b + 1, nb):
            lazy[bb] += 1

        for bb in range(nb):
            p = ptr_u[bb]
            while p > 0:
                j1 = hull_u[bb, p - 1]
                j0 = hull_u[bb, p]
                if n * cnt[j1] - k * tot[j1] >= n * cnt[j0] - k * tot[j0]:
                    p -= 1
                else:
                    break
            ptr_u[bb] = p
            j0 = hull_u[bb, p]
            v = n * (cnt[j0] + lazy[bb]) - k * tot[j0]
            if v > best:
                best = v

            p = ptr_l[bb]
            last = len_l[bb] - 1
            while p < last:
                j1 = hull_l[bb, p + 1]
                j0 = hull_l[bb, p]
                if n * cnt[j1] - k * tot[j1] <= n * cnt[j0] - k * tot[j0]:
                    p += 1
                else:
                    break
            ptr_l[bb] = p
            j0 = hull_l[bb, p]
            v = k * tot[j0] - n * (cnt[j0] + lazy[bb])
            if v > best:
                best = v
    return best


def _tn_scan_numpy(ranks: np.ndarray, tot: np.ndarray, n: int) -> int:
    """Blocked dense evaluation of the same integer numerator (fallback path)."""
    m = tot.size
    best = 0
    kcol = np.arange(1, n, dtype=np.int64)[:, None]
    chunk = max(1, 4_000_000 // max(n, 1))
    for j0 in range(0, m, chunk):
        cols = np.arange(j0, min(m, j0 + chunk), dtype=np.int64)
        ind = ranks[:, None] <= cols[None, :]
        cum = np.cumsum(ind, axis=0, dtype=np.int64)[: n - 1]
        num = n * cum - kcol * tot[cols][None, :]
        if num.size:
            best = max(best, int(np.abs(num).max()))
    return best


def _compress(values: np.ndarray):
    uniq, ranks, counts = np.unique(values, return_inverse=True, return_counts=True)
    tot = np.cumsum(counts).astype(np.int64)
    return ranks.astype(np.int64), tot


def changepoint_statistic(values) -> float:
    """T_n = max_{1<=k<n} sup_s |sum_{i<=k} 1{v_i<=s} - (k/n) sum_{i<=n} 1{v_i<=s}|.

    The inner supremum is attained at the sample order statistics, so the
    computation is exact; the scan is O(n sqrt(n)) after rank preprocessing.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    n = v.size
    if n < 2:
        raise TooShort("change-point statistic needs n >= 2")
    ranks, tot = _compress(v)
    if HAVE_NUMBA:
        num = int(_tn_scan_kernel(ranks, tot, np.int64(n)))
    else:
        num = _tn_scan_numpy(ranks, tot, n)
    return num / n


def changepoint_statistic_reference(values) -> float:
    """Direct O(n^2) evaluation over all split points and order statistics."""
    v = np.asarray(values, dtype=np.float64).ravel()
    n = v.size
    if n < 2:
        raise TooShort("change-point statistic needs n >= 2")
    ranks, tot = _compress(v)
    return _tn_scan_numpy(ranks, tot, n) / n


# ---------------------------------------------------------------------------
# kernels and U-statistics


@dataclass(frozen=True)
class ProductMeasure:
    """dh = dg x dg for a product kernel h = g (x) g, with dg = atoms + c dx."""

    atom_locations: tuple[float, ...] = ()
    atom_weights: tuple[float, ...] = ()
    lebesgue_weight: float = 0.0


@dataclass(frozen=True)
class Kernel:
    """Symmetric kernel on [0,1]^2, optionally with its product-measure form."""

    fn: object
    measure: ProductMeasure | None = None
    expected_value: float | None = None
    name: str = ""

    def __call__(self, x, y):
        return self.fn(x, y)


def product_kernel(g, *, atoms=None, lebesgue_weight=0.0, expected_value=None,
                   name="") -> Kernel:
    locations, weights = (), ()
    if atoms is not None:
        locations = tuple(float(x) for x in atoms[0])
        weights = tuple(float(w) for w in atoms[1])
    measure = ProductMeasure(atom_locations=locations, atom_weights=weights,
                             lebesgue_weight=float(lebesgue_weight))
    return Kernel(fn=lambda x, y: g(x) * g(y), measure=measure,
                  expected_value=expected_value, name=name)


def sign_change_kernel() -> Kernel:
    """The centered product kernel (x - 1/2)(y - 1/2); dg is Lebesgue on [0,1]."""
    return product_kernel(lambda x: x - 0.5, lebesgue_weight=1.0,
                          expected_value=0.0, name="(x-1/2)(y-1/2)")


def degeneracy_certificate(kernel: Kernel, x_grid=None, quad_order: int = 64) -> float:
    """max over x of |int h(x, y) dy| by Gauss-Legendre quadrature on [0, 1]."""
    nodes, weights = np.polynomial.legendre.leggauss(quad_order)
    nodes = 0.5 * (nodes + 1.0)
    weights = 0.5 * weights
    xs = np.asarray(x_grid if x_grid is not None else np.linspace(0.0, 1.0, 201))
    vals = kernel.fn(xs[:, None], nodes[None, :]) @ weights
    return float(np.abs(vals).max())


def degenerate_ustat(values, kernel: Kernel) -> float:
    """U_n(h) = n^{-2} sum_{i,j} h(v_i, v_j), diagonal terms included."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise TooShort("U-statistic needs at least one value")
    return float(np.mean(kernel.fn(v[:, None], v[None, :])))


def integrate_sheet_at_one(sheet: EmpiricalSheet) -> float:
    """int_0^1 W_n(x, 1) dx, exact piecewise integration between jump points.

    Requires grid_s to start at 0, end at 1, and refine the sample (every jump
    of the empirical count sits on a grid point); W_n( . , 1) is then linear
    with slope -n on each cell.
    """
    t_idx = np.flatnonzero(sheet.grid_t == 1.0)
    if t_idx.size == 0:
        raise MissingBoundary("sheet must include t = 1")
    if sheet.grid_s[0] != 0.0 or sheet.grid_s[-1] != 1.0:
        raise MissingBoundary("grid_s must span [0, 1] for exact integration")
    s = sheet.grid_s
    w = sheet.values[:, t_idx[0]]
    counts = w + sheet.n * s  # integer counts, exactly representable
    widths = np.diff(s)
    total = float(np.sum(counts[:-1] * widths) - 0.5 * sheet.n * np.sum(s[1:] ** 2 - s[:-1] ** 2))
    return total


def ustat_empirical_identity(sheet: EmpiricalSheet, kernel: Kernel) -> float:
    """U_n(h) - E h via the factorized empirical-process form.

    Evaluates (n^{-1} int W_n(., 1) dg)^2 for product kernels whose dg is a
    finite sum of atoms (which must sit on the sheet grid) plus a constant
    Lebesgue density.
    """
    if kernel.measure is None:
        raise MeasureNotRepresentable("kernel carries no signed-measure form")
    measure = kernel.measure
    t_idx = np.flatnonzero(sheet.grid_t == 1.0)
    if t_idx.size == 0:
        raise MissingBoundary("sheet must include t = 1")
    w = sheet.values[:, t_idx[0]]

    total = 0.0
    if measure.atom_locations:
        locs = np.asarray(measure.atom_locations)
        idx = np.searchsorted(sheet.grid_s, locs)
        ok = (idx < sheet.grid_s.size) & np.isclose(sheet.grid_s[np.minimum(idx, sheet.grid_s.size - 1)], locs, rtol=0.0, atol=1e-12)
        if not ok.all():
            raise MeasureNotRepresentable("measure atoms must lie on the sheet grid")
        total += float(np.sum(np.asarray(measure.atom_weights) * w[idx]))
    if measure.lebesgue_weight:
        total += measure.lebesgue_weight * integrate_sheet_at_one(sheet)
    return (total / sheet.n) ** 2


# ---------------------------------------------------------------------------
# the change-point test


@dataclass(frozen=True)
class TestReport:
    statistic: float
    statistic_over_an: float
    normalized: float
    alpha: float
    critical_value: float
    p_value: float
    reject: bool
    c: float
    c_error: float
    normalized_band: tuple[float, float]
    theorem_flags: tuple[str, ...] = ()

    def to_json_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "statistic_over_an": self.statistic_over_an,
            "normalized": self.normalized,
            "alpha": self.alpha,
            "critical_value": self.critical_value,
            "p_value": self.p_value,
            "reject": self.reject,
            "c": self.c,
            "c_error": self.c_error,
            "normalized_band": list(self.normalized_band),
            "theorem_flags": list(self.theorem_flags),
        }


def changepoint_test(values, model: WalkModel, alpha: float,
                     quantiles: PillowQuantiles) -> TestReport:
    """Stationarity test of the scenery along the walk.

    Rejects when T_n / (a_n sqrt(c)) exceeds the simulated (1 - alpha)
    quantile of the pillow supremum; the p-value is the exceedance fraction
    among the simulated sups.  The report also carries the statistic with the
    c-error band applied, so decisions sensitive to the Green-sum accuracy
    are visible.
    """
    if quantiles is None:
        raise MissingQuantiles("changepoint_test needs simulated pillow quantiles")
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    v = np.asarray(values, dtype=np.float64).ravel()
    n = v.size
    if n < 2:
        raise TooShort("need at least two observations")
    t_n = changepoint_statistic(v)
    a_n = norming_value(model.regime, n)
    lc = limit_constant(model)
    normalized = t_n / (a_n * math.sqrt(lc.c))
    c_lo = max(lc.c - lc.error_bound, 0.0)
    c_hi = lc.c + lc.error_bound
    band_hi = t_n / (a_n * math.sqrt(c_lo)) if c_lo > 0.0 else math.inf
    band_lo = t_n / (a_n * math.sqrt(c_hi))
    critical = quantiles.critical_value(alpha)
    return TestReport(
        statistic=t_n,
        statistic_over_an=t_n / a_n,
        normalized=normalized,
        alpha=float(alpha),
        critical_value=critical,
        p_value=quantiles.p_value(normalized),
        reject=bool(normalized > critical),
        c=lc.c,
        c_error=lc.error_bound,
        normalized_band=(band_lo, band_hi),
        theorem_flags=model.theorem_flags,
    )
