"""Lattice random-walk models on Z^d.

Covers increment-law validation, the structural aperiodicity check, regime
classification (transient / Cauchy-domain d=1 / centered planar), trajectory
sampling, exact return probabilities by repeated convolution, and the
truncated Green sum with a fitted tail.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import zeta

from .errors import (
    ConvolutionTooLarge,
    NoConvergence,
    NotAperiodic,
    NotTransient,
    RegimeUndetermined,
    SingularCovariance,
)

REGIME_TRANSIENT = "A_TRANSIENT"
REGIME_CAUCHY = "B1_CAUCHY"
REGIME_PLANAR = "B2_PLANAR"

_CENTERING_TOL = 1e-12
_PROB_TOL = 1e-12

# zeta-law magnitude table covers all but ~2C * 3e-5 of the tail mass
_TAIL_TABLE_SIZE = 1 << 15


def _lattice_index(vectors, d: int) -> int:
    """Index of the integer lattice spanned by `vectors` inside Z^d (0 if rank-deficient).

    Plain integer elimination: for each column, gcd-reduce the remaining rows
    until a single pivot survives.  The lattice is all of Z^d iff the product
    of pivot magnitudes is 1.
    """
    rows = [list(map(int, v)) for v in vectors if any(v)]
    if not rows:
        return 0
    r = 0
    det = 1
    for c in range(d):
        while True:
            nz = [i for i in range(r, len(rows)) if rows[i][c] != 0]
            if len(nz) <= 1:
                break
            nz.sort(key=lambda i: abs(rows[i][c]))
            base = rows[nz[0]]
            for i in nz[1:]:
                q = rows[i][c] // base[c]
                rows[i] = [a - q * b for a, b in zip(rows[i], base)]
        if not nz:
            return 0
        rows[r], rows[nz[0]] = rows[nz[0]], rows[r]
        det *= abs(rows[r][c])
        r += 1
    return det if r == d else 0


@dataclass(frozen=True)
class IncrementLaw:
    """Finite-support step distribution on Z^d."""

    d: int
    support: tuple[tuple[int, ...], ...]
    probs: tuple[float, ...]
    aperiodic: bool = field(init=False)
    spans_lattice: bool = field(init=False)

    def __init__(self, d, support, probs):
        d = int(d)
        if d < 1:
            raise ValueError("dimension must be a positive integer")
        support = tuple(tuple(int(c) for c in v) for v in support)
        probs = tuple(float(p) for p in probs)
        if len(support) != len(probs) or not support:
            raise ValueError("support and probabilities must be nonempty and matched")
        if any(len(v) != d for v in support):
            raise ValueError("support vectors must have length d")
        if len(set(support)) != len(support):
            raise ValueError("support vectors must be pairwise distinct")
        if any(not (0.0 < p <= 1.0) for p in probs):
            raise ValueError("probabilities must lie in (0, 1]")
        if abs(sum(probs) - 1.0) > _PROB_TOL:
            raise ValueError("probabilities must sum to 1 within 1e-12")
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "spans_lattice", _lattice_index(support, d) == 1)
        object.__setattr__(self, "aperiodic", check_aperiodicity(self))

    @property
    def support_array(self) -> np.ndarray:
        return np.array(self.support, dtype=np.int64)

    @property
    def probs_array(self) -> np.ndarray:
        return np.array(self.probs, dtype=np.float64)

    def mean(self) -> np.ndarray:
        return self.probs_array @ self.support_array

    def covariance(self) -> np.ndarray:
        v = self.support_array.astype(np.float64)
        p = self.probs_array
        m = p @ v
        vc = v - m
        return (vc * p[:, None]).T @ vc

    def char_function(self, theta):
        """Characteristic function; for d=1 `theta` is a scalar grid, else (..., d) vectors."""
        v = self.support_array.astype(np.float64)
        p = self.probs_array
        theta = np.asarray(theta, dtype=np.float64)
        if self.d == 1:
            phase = theta[..., None] * v[:, 0]
        else:
            phase = theta @ v.T
        return (p * np.exp(1j * phase)).sum(axis=-1)


@dataclass(frozen=True)
class HeavyTailLaw:
    """Symmetric integer law with P(X = +-k) = C / k^2 for k >= k_min.

    k_min is the smallest start making the tail mass normalizable; the rest
    of the probability sits at 0.  The tail constant C is what drives the
    Cauchy-domain limit, so it is kept exact while the near-origin mass is a
    normalization artifact.
    """

    C: float
    k_min: int = field(init=False)
    p_zero: float = field(init=False)

    def __init__(self, C):
        C = float(C)
        if C <= 0.0:
            raise ValueError("tail constant C must be positive")
        k_min = 1
        while 2.0 * C * zeta(2.0, k_min) > 1.0:
            k_min += 1
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "k_min", k_min)
        object.__setattr__(self, "p_zero", 1.0 - 2.0 * C * float(zeta(2.0, k_min)))
        ks = np.arange(k_min, k_min + _TAIL_TABLE_SIZE + 1, dtype=np.float64)
        object.__setattr__(self, "_tail_table", 2.0 * C * zeta(2.0, ks))

    @property
    def d(self) -> int:
        return 1

    @property
    def spans_lattice(self) -> bool:
        return True

    @property
    def aperiodic(self) -> bool:
        # consecutive magnitudes k_min, k_min + 1 are in the support, so the
        # difference lattice contains 1
        return True

    def char_function(self, theta):
        """Exact characteristic function via the closed form of sum (1 - cos k t)/k^2."""
        theta = np.abs(np.asarray(theta, dtype=np.float64)) % (2.0 * math.pi)
        full = math.pi * theta / 2.0 - theta**2 / 4.0
        head = np.zeros_like(theta)
        for k in range(1, self.k_min):
            head += (1.0 - np.cos(k * theta)) / k**2
        return 1.0 - 2.0 * self.C * (full - head)

    def tail_probability(self, k: int) -> float:
        """P(|X| >= k) for k >= k_min."""
        return 2.0 * self.C * float(zeta(2.0, k))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        u = rng.random(n)
        signs = rng.integers(0, 2, size=n).astype(np.int64) * 2 - 1
        w = 1.0 - u
        table = self._tail_table
        mag = np.zeros(n, dtype=np.int64)
        active = w <= table[0]
        in_table = active & (w >= table[-1])
        idx = np.searchsorted(-table, -w[in_table], side="right") - 1
        mag[in_table] = self.k_min + idx
        beyond = active & (w < table[-1])
        if beyond.any():
            mag[beyond] = [self._invert_tail(wi) for wi in w[beyond]]
        return signs * mag

    def _invert_tail(self, w: float) -> int:
        k = max(self.k_min, int(2.0 * self.C / w) - 2)
        while self.tail_probability(k + 1) >= w:
            k += 1
        while k > self.k_min and self.tail_probability(k) < w:
            k -= 1
        return k


@dataclass(frozen=True)
class Path:
    """Sampled trajectory S_1..S_n (S_0 = 0 implicit), positions shaped (n, d)."""

    positions: np.ndarray
    seed: int

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def d(self) -> int:
        return self.positions.shape[1]


@dataclass(frozen=True, eq=False)
class WalkModel:
    """Classified walk: regime tag plus the parameters the limit theory needs."""

    law: IncrementLaw | HeavyTailLaw
    regime: str
    A: float | None = None
    A_error: float | None = None
    covariance: np.ndarray | None = None
    green_value: float | None = None
    green_error: float | None = None
    theorem_flags: tuple[str, ...] = ()


def check_aperiodicity(law) -> bool:
    """Structural aperiodicity: pairwise support differences generate Z^d.

    Equivalent to the increment characteristic function having modulus 1 only
    on 2*pi*Z^d, so no sublattice coset carries the walk.
    """
    if isinstance(law, HeavyTailLaw):
        return True
    sup = law.support
    base = sup[0]
    diffs = [tuple(a - b for a, b in zip(v, base)) for v in sup[1:]]
    return _lattice_index(diffs, law.d) == 1


def build_model(
    law,
    regime_hint: str | None = None,
    *,
    allow_periodic: bool = False,
    green_rel_tol: float = 1e-3,
) -> WalkModel:
    """Classify `law` into a Theorem-covered regime and fill its parameters.

    Raises NotAperiodic for periodic laws unless `allow_periodic` is set, in
    which case the model carries a warning flag that propagates into every
    downstream report.
    """
    flags: list[str] = []

    if isinstance(law, HeavyTailLaw):
        if regime_hint not in (None, REGIME_CAUCHY):
            raise RegimeUndetermined(f"heavy-tail law is regime {REGIME_CAUCHY}, not {regime_hint}")
        from .limits import estimate_A

        est = estimate_A(law)
        return WalkModel(law=law, regime=REGIME_CAUCHY, A=est.A, A_error=est.band,
                         theorem_flags=tuple(flags))

    if not law.spans_lattice:
        raise RegimeUndetermined("support does not generate Z^d as a group")
    if not law.aperiodic:
        if not allow_periodic:
            raise NotAperiodic(
                "walk is periodic (support differences span a proper sublattice); "
                "pass allow_periodic=True to proceed with flagged output"
            )
        flags.append("periodic walk: theorem hypotheses violated")

    mean = law.mean()
    centered = float(np.abs(mean).max()) <= _CENTERING_TOL

    if law.d == 2 and centered:
        regime = REGIME_PLANAR
    elif law.d >= 3 or not centered:
        regime = REGIME_TRANSIENT
    else:
        raise RegimeUndetermined(
            "centered finite-variance d=1 law: recurrent with index 2 > d, not covered"
        )
    if regime_hint is not None and regime_hint != regime:
        raise RegimeUndetermined(f"law classifies as {regime}, hint was {regime_hint}")

    if regime == REGIME_PLANAR:
        sigma = law.covariance()
        det = float(np.linalg.det(sigma))
        if det <= 0.0:
            raise SingularCovariance("increment covariance must have positive determinant")
        return WalkModel(law=law, regime=regime, A=2.0 * math.sqrt(det),
                         covariance=sigma, theorem_flags=tuple(flags))

    g, g_err = _green_sum_cached(law, green_rel_tol)
    return WalkModel(law=law, regime=regime, green_value=g, green_error=g_err,
                     theorem_flags=tuple(flags))


def sample_path(model: WalkModel, n: int, seed: int) -> Path:
    """Draw S_1..S_n with i.i.d. increments; deterministic given (model, n, seed)."""
    if n < 1:
        raise ValueError("path length must be >= 1")
    rng = np.random.default_rng(seed)
    law = model.law
    if isinstance(law, HeavyTailLaw):
        steps = law.sample(n, rng)[:, None]
    else:
        cum = np.cumsum(law.probs_array)
        cum[-1] = 1.0
        idx = np.searchsorted(cum, rng.random(n), side="right")
        steps = law.support_array[idx]
    return Path(positions=np.cumsum(steps, axis=0), seed=int(seed))


# ---------------------------------------------------------------------------
# exact pmf convolution


class _Pmf:
    """Probability mass on a d-dim integer box: dense array plus lower corner."""

    __slots__ = ("arr", "lo")

    def __init__(self, arr: np.ndarray, lo: np.ndarray):
        self.arr = arr
        self.lo = np.asarray(lo, dtype=np.int64)

    @classmethod
    def delta(cls, d: int) -> "_Pmf":
        return cls(np.ones((1,) * d, dtype=np.float64), np.zeros(d, dtype=np.int64))

    def at_origin(self) -> float:
        idx = -self.lo
        shape = np.array(self.arr.shape)
        if np.any(idx < 0) or np.any(idx >= shape):
            return 0.0
        return float(self.arr[tuple(idx)])


def _convolve_step(pmf: _Pmf, moves: np.ndarray, probs: np.ndarray) -> _Pmf:
    d = moves.shape[1]
    mn = moves.min(axis=0)
    mx = moves.max(axis=0)
    shape = tuple(pmf.arr.shape[i] + int(mx[i] - mn[i]) for i in range(d))
    out = np.zeros(shape, dtype=np.float64)
    for v, p in zip(moves, probs):
        sl = tuple(
            slice(int(v[i] - mn[i]), int(v[i] - mn[i]) + pmf.arr.shape[i]) for i in range(d)
        )
        out[sl] += p * pmf.arr
    return _Pmf(out, pmf.lo + mn)


def _crop(pmf: _Pmf, tol: float) -> tuple[_Pmf, float]:
    """Trim outer slabs carrying at most `tol` total mass; returns bound on loss."""
    arr = pmf.arr
    lo = pmf.lo.copy()
    lost = 0.0
    d = arr.ndim
    per_side = tol / (2 * d)
    for axis in range(d):
        marg = arr.sum(axis=tuple(a for a in range(arr.ndim) if a != axis))
        head = np.searchsorted(np.cumsum(marg), per_side)
        tail = np.searchsorted(np.cumsum(marg[::-1]), per_side)
        if head + tail >= arr.shape[axis]:
            continue
        if head or tail:
            lost += float(marg[:head].sum() + marg[marg.size - tail:].sum())
            sl = [slice(None)] * arr.ndim
            sl[axis] = slice(head, arr.shape[axis] - tail)
            arr = arr[tuple(sl)]
            lo[axis] += head
    return _Pmf(np.ascontiguousarray(arr), lo), lost


def _pair_origin(a: _Pmf, b: _Pmf) -> float:
    """sum_x a(x) * b(-x), i.e. the origin mass of the convolution of a and b."""
    d = a.arr.ndim
    a_hi = a.lo + np.array(a.arr.shape) - 1
    b_hi = b.lo + np.array(b.arr.shape) - 1
    lo = np.maximum(a.lo, -b_hi)
    hi = np.minimum(a_hi, -b.lo)
    if np.any(lo > hi):
        return 0.0
    sa = tuple(slice(int(lo[i] - a.lo[i]), int(hi[i] - a.lo[i]) + 1) for i in range(d))
    sb = tuple(slice(int(-hi[i] - b.lo[i]), int(-lo[i] - b.lo[i]) + 1) for i in range(d))
    bb = b.arr[sb][(slice(None, None, -1),) * d]
    return float(np.sum(a.arr[sa] * bb))


def return_probability(model: WalkModel | IncrementLaw, k: int, cap: int = 2048,
                        max_elements: int = 40_000_000) -> float:
    """Exact P(S_k = 0) by k-fold convolution of the increment mass.

    Only meaningful for finite-support laws; raises ConvolutionTooLarge when
    the k-step box exceeds the configured caps.
    """
    law = model.law if isinstance(model, WalkModel) else model
    if isinstance(law, HeavyTailLaw):
        raise ValueError("return_probability requires a finite-support law")
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > cap:
        raise ConvolutionTooLarge(f"k={k} exceeds the convolution cap {cap}")
    moves = law.support_array
    radius = int(np.abs(moves).max())
    box = (2 * k * max(radius, 1) + 1) ** law.d
    if box > max_elements or box * (k * len(moves)) > 2**34:
        raise ConvolutionTooLarge(
            f"k-step convolution grid of {box} cells exceeds the memory/ops budget"
        )
    pmf = _Pmf.delta(law.d)
    probs = law.probs_array
    for _ in range(k):
        pmf = _convolve_step(pmf, moves, probs)
    return pmf.at_origin()


def _return_series(law: IncrementLaw, k_target: int, max_elements: int,
                   crop_tol: float) -> tuple[np.ndarray, float, int]:
    """P(S_k = 0) for k = 1..K via paired half-length pmfs; K <= k_target.

    Returns (series indexed 0..K with series[0] unused, mass-loss bound, K).
    The pairing halves the box radius: P(S_{i+j}=0) = sum_x pmf_i(x) pmf_j(-x).
    """
    moves = law.support_array
    probs = law.probs_array
    p = np.zeros(k_target + 1, dtype=np.float64)
    prev = _Pmf.delta(law.d)
    cur = _convolve_step(prev, moves, probs)
    lost = 0.0
    step_tol = crop_tol / max(k_target, 1)
    k_done = 0
    m = 0
    while True:
        k_odd = 2 * m + 1
        if k_odd > k_target:
            break
        p[k_odd] = _pair_origin(prev, cur)
        k_done = k_odd
        k_even = 2 * m + 2
        if k_even <= k_target:
            p[k_even] = _pair_origin(cur, cur)
            k_done = k_even
        else:
            break
        nxt = _convolve_step(cur, moves, probs)
        nxt, loss = _crop(nxt, step_tol)
        lost += loss
        if nxt.arr.size > max_elements:
            break
        prev, cur = cur, nxt
        m += 1
    return p[: k_done + 1], lost, k_done


def _fit_tail(p: np.ndarray, K: int, d: int, centered: bool) -> tuple[float, float]:
    """Estimate sum_{k>K} P(S_k=0) from the last computed decade.

    Centered walks follow the local-limit decay k^(-d/2) with a 1/k
    correction; drift walks decay geometrically.  Returns (tail, error bound).
    """
    lo = max(K // 2, 1)
    ks = np.arange(lo, K + 1)
    vals = p[lo : K + 1]
    nz = vals > 0.0
    if not nz.any():
        return 0.0, 0.0
    if not centered:
        kk = ks[nz].astype(np.float64)
        y = np.log(vals[nz])
        if kk.size < 3:
            return float(vals[nz][-1]), float(vals[nz][-1])
        slope, intercept = np.polyfit(kk, y, 1)
        rho = math.exp(slope)
        if rho >= 1.0 - 1e-9:
            tail = float(vals[nz][-1] * K)
            return tail, tail
        nxt = math.exp(intercept + slope * (K + 1))
        tail = nxt / (1.0 - rho)
        return tail, tail

    stride = 1
    if (~nz).sum() > nz.sum() // 4 and nz.sum() >= 2:
        stride = 2  # period-2 pattern under a periodic override
    kk = ks[nz].astype(np.float64)
    y = vals[nz] * kk ** (d / 2.0)
    design = np.column_stack([np.ones_like(kk), 1.0 / kk])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    rmax = float(np.abs(resid).max()) if resid.size else 0.0
    if stride == 1:
        z0 = float(zeta(d / 2.0, K + 1))
        z1 = float(zeta(d / 2.0 + 1.0, K + 1))
    else:
        scale = 2.0 ** (-d / 2.0)
        z0 = scale * float(zeta(d / 2.0, K // 2 + 1))
        z1 = scale * 2.0 ** (-1.0) * float(zeta(d / 2.0 + 1.0, K // 2 + 1))
    tail = max(float(coef[0] * z0 + coef[1] * z1), 0.0)
    err = 2.0 * rmax * z0 + 2.0 * abs(coef[1]) * z1 / max(K, 1)
    return tail, err


def green_sum(model: WalkModel, rel_tol: float = 1e-3, *, k_cap: int = 4096,
              max_elements: int = 33_000_000) -> tuple[float, float]:
    """g = sum_{k>=1} P(S_k = 0) with a reported error bound.

    Sums exact convolution terms until the fitted local-limit tail estimate
    contributes an error below rel_tol * g (or the step/box caps bite, in
    which case the reported bound is simply larger).  The tail estimate is
    added to the partial sum, so the bound covers fit error, not tail size.
    """
    if model.regime != REGIME_TRANSIENT:
        raise NotTransient(f"green_sum needs regime {REGIME_TRANSIENT}, got {model.regime}")
    if rel_tol <= 0.0:
        raise ValueError("rel_tol must be positive")
    law = model.law
    if isinstance(law, HeavyTailLaw):
        raise ValueError("green_sum requires a finite-support law")
    mean = law.mean()
    centered = float(np.abs(mean).max()) <= _CENTERING_TOL
    if law.d <= 2 and centered:
        raise NoConvergence("centered walks in d <= 2 are recurrent; the Green sum diverges")

    stage = 64
    p = np.zeros(1)
    lost = 0.0
    K = 0
    while True:
        target = min(stage, k_cap)
        p, lost, K = _return_series(law, target, max_elements, crop_tol=1e-15)
        tail, err = _fit_tail(p, K, law.d, centered)
        partial = float(p[1:].sum())
        g = partial + tail
        bound = err + lost + 1e-15 * max(g, 1.0)
        if g <= 0.0:
            return 0.0, bound
        if bound <= rel_tol * g or K >= k_cap or K < target:
            return g, bound
        stage *= 2


@functools.lru_cache(maxsize=64)
def _green_sum_cached(law: IncrementLaw, rel_tol: float) -> tuple[float, float]:
    probe = WalkModel(law=law, regime=REGIME_TRANSIENT)
    return green_sum(probe, rel_tol)


@functools.lru_cache(maxsize=16)
def _return_series_cached(law: IncrementLaw, k_target: int):
    p, lost, k = _return_series(law, k_target, 33_000_000, crop_tol=1e-15)
    return p, lost, k


def expected_lambda_ratio(model: WalkModel, n: int, series_k: int = 512) -> float:
    """E[Lambda_n] / a_n^2, exactly: E[Lambda_n] = n + 2 sum_{k<n} (n-k) P(S_k=0).

    Return probabilities are exact up to `series_k` and follow the fitted
    local-limit decay beyond, so the value is deterministic and good to many
    digits; it provides the noise-free trend the replicate means are checked
    against.
    """
    from .empirical import norming_value  # local import to avoid a cycle

    law = model.law
    if isinstance(law, HeavyTailLaw):
        raise ValueError("expected_lambda_ratio requires a finite-support law")
    p, _, K = _return_series_cached(law, min(series_k, max(n - 1, 1)))
    ks = np.arange(1, min(K, n - 1) + 1)
    total = float(((n - ks) * p[1 : ks.size + 1]).sum())
    if n - 1 > K:
        mean = law.mean()
        centered = float(np.abs(mean).max()) <= _CENTERING_TOL
        tail_k = np.arange(K + 1, n, dtype=np.float64)
        if centered:
            lo = max(K // 2, 1)
            kk = np.arange(lo, K + 1, dtype=np.float64)
            vals = p[lo : K + 1]
            nz = vals > 0
            if nz.any():
                design = np.column_stack([np.ones(nz.sum()), 1.0 / kk[nz]])
                coef, *_ = np.linalg.lstsq(design, vals[nz] * kk[nz] ** (law.d / 2.0),
                                           rcond=None)
                pk_tail = (coef[0] + coef[1] / tail_k) * tail_k ** (-law.d / 2.0)
                total += float(((n - tail_k) * np.maximum(pk_tail, 0.0)).sum())
        # drift walks: geometric decay, the truncated remainder is negligible
    lam = n + 2.0 * total
    return lam / norming_value(model.regime, n) ** 2


# ---------------------------------------------------------------------------
# model documents


def law_from_dict(doc: dict):
    """Parse the model JSON document format."""
    if "heavy_tail" in doc:
        if int(doc.get("d", 1)) != 1:
            raise ValueError("heavy-tail laws are one-dimensional")
        return HeavyTailLaw(C=doc["heavy_tail"]["C"])
    return IncrementLaw(d=doc["d"], support=doc["support"], probs=doc["probs"])


def model_from_dict(doc: dict, *, allow_periodic: bool = False) -> WalkModel:
    law = law_from_dict(doc)
    return build_model(
        law,
        doc.get("regime_hint"),
        allow_periodic=bool(doc.get("allow_periodic", False)) or allow_periodic,
    )
