import math

import numpy as np
import pytest

from conftest import make_path
from rwrs.empirical import (
    Norming,
    block_cross_sum,
    cross_intersection,
    empirical_sheet,
    empirical_sheet_reference,
    lambda_sup,
    norming_value,
    occupation_stats,
)
from rwrs.errors import DomainError, GridUnsorted
from rwrs.scenery import Scenery, evaluate_along
from rwrs.walk import sample_path


def test_occupation_hand_example():
    st = occupation_stats(make_path([1, 0, 1]), 3)
    assert st.counts() == {(1,): 2, (0,): 1}
    assert st.lambda_ == 5
    assert st.sup_count == 2
    assert st.distinct_sites == 2


def test_occupation_prefix_one():
    st = occupation_stats(make_path([4, 4, 4]), 1)
    assert st.lambda_ == 1 and st.sup_count == 1


def test_occupation_all_distinct():
    st = occupation_stats(make_path(list(range(1, 101))), 100)
    assert st.lambda_ == 100 and st.sup_count == 1


def test_occupation_invariants(lazy_planar):
    path = sample_path(lazy_planar, 5000, 17)
    st = occupation_stats(path, 5000)
    assert sum(st.counts().values()) == 5000
    assert st.lambda_ >= 5000
    assert st.sup_count**2 <= st.lambda_
    lam, sup, distinct = lambda_sup(path.positions)
    assert (lam, sup, distinct) == (st.lambda_, st.sup_count, st.distinct_sites)


def test_cross_intersection_examples():
    path = make_path([1, 0, 1])
    assert cross_intersection(path, 1 / 3, 1.0, 3) == 2  # N_1(1) * N_3(1)
    assert cross_intersection(path, 0.0, 1.0, 3) == 0
    assert cross_intersection(path, 1.0, 1.0, 3) == occupation_stats(path, 3).lambda_


def test_cross_intersection_lambda_consistency(lazy_planar):
    for seed in (1, 2, 3):
        path = sample_path(lazy_planar, 2000, seed)
        assert cross_intersection(path, 1.0, 1.0, 2000) == occupation_stats(path, 2000).lambda_


def test_block_cross_sum_brute():
    rng = np.random.default_rng(0)
    steps = rng.choice([-1, 0, 1], size=60)
    path = make_path(np.cumsum(steps))
    n = 60
    for a, b in ((0.2, 0.7), (0.0, 1.0), (0.5, 0.5)):
        ka, kb = math.floor(n * a), math.floor(n * b)
        brute = sum(
            1
            for k in range(1, ka + 1)
            for l in range(ka + 1, kb + 1)
            if path.positions[k - 1, 0] == path.positions[l - 1, 0]
        )
        assert block_cross_sum(path, a, b, n) == brute


def test_sheet_hand_example():
    sheet = empirical_sheet([0.3, 0.7, 0.3], [0.5], [1.0], Norming("A_TRANSIENT"))
    assert sheet.values[0, 0] == pytest.approx(0.5, abs=1e-15)


def test_sheet_boundary_columns():
    marks = np.random.default_rng(5).random(200)
    sheet = empirical_sheet(marks, [0.0, 0.5, 1.0], [0.25, 1.0], Norming("A_TRANSIENT"))
    assert np.all(sheet.values[2] == 0.0)  # s = 1 exactly
    assert np.all(sheet.values[0] == 0.0)  # s = 0 exactly
    zero_t = empirical_sheet(marks, [0.5], [0.0], Norming("A_TRANSIENT"))
    assert zero_t.values[0, 0] == 0.0


def test_sheet_matches_reference_on_random_instances():
    rng = np.random.default_rng(314)
    for _ in range(60):
        n = int(rng.integers(1, 201))
        marks = rng.random(n)
        gs = np.sort(rng.random(rng.integers(1, 24)))
        if rng.random() < 0.5:
            gs = np.unique(np.r_[0.0, gs, 1.0])
        if rng.random() < 0.5 and n > 2:
            # put grid points exactly on marks to exercise the tie convention
            gs = np.unique(np.r_[gs, marks[: int(rng.integers(1, min(n, 5)))]])
        gt = np.sort(rng.random(rng.integers(1, 24)))
        fast = empirical_sheet(marks, gs, gt, Norming("A_TRANSIENT"))
        ref = empirical_sheet_reference(marks, gs, gt)
        assert np.abs(fast.values - ref).max() <= 1e-12


def test_sheet_monotone_step_structure():
    rng = np.random.default_rng(8)
    marks = rng.random(300)
    gs = np.linspace(0.0, 1.0, 21)
    gt = np.array([0.3, 0.6, 1.0])
    sheet = empirical_sheet(marks, gs, gt, Norming("A_TRANSIENT"))
    n_at_t = np.floor(sheet.n * gt + 1e-9)
    counts = sheet.values + gs[:, None] * n_at_t[None, :]
    assert np.all(np.diff(counts, axis=0) >= -1e-9)


def test_sheet_z_partial():
    marks = np.array([0.1, 0.9, 0.5, 0.2])
    sheet = empirical_sheet(marks, [0.5], [0.25, 0.5, 1.0], Norming("A_TRANSIENT"))
    assert np.allclose(sheet.z_partial, [0.1, 1.0, 1.7], atol=1e-15)


def test_sheet_grid_validation():
    with pytest.raises(GridUnsorted):
        empirical_sheet([0.5], [0.9, 0.1], [1.0], Norming("A_TRANSIENT"))
    with pytest.raises(GridUnsorted):
        empirical_sheet([0.5], [0.1, 1.2], [1.0], Norming("A_TRANSIENT"))


def test_norming_values():
    assert norming_value("A_TRANSIENT", 4) == 2.0
    assert norming_value("B2_PLANAR", 8) == pytest.approx(math.sqrt(8 * math.log(8)), abs=1e-12)
    assert norming_value("B2_PLANAR", 8) == pytest.approx(4.0789, abs=5e-4)
    with pytest.raises(DomainError):
        norming_value("B1_CAUCHY", 1)
    assert Norming("A_TRANSIENT").value(9) == 3.0


def test_sup_count_growth_slows(lazy_planar):
    # recurrent walks: median of log(sup)/log(n) drifts toward 0
    medians = []
    for n in (10**3, 10**4, 10**5):
        vals = []
        for i in range(15):
            path = sample_path(lazy_planar, n, 50_000 + 97 * i)
            _, sup, _ = lambda_sup(path.positions)
            vals.append(math.log(sup) / math.log(n))
        medians.append(np.median(vals))
    assert medians[0] > medians[1] > medians[2]


def _expected_block_cross(law, n, a, b):
    # E sum_{k <= an < l <= bn} 1{S_k = S_l} = sum_d (#pairs at lag d) p_d
    from rwrs.walk import _return_series_cached

    p, _, K = _return_series_cached(law, 512)
    ka, kb = math.floor(n * a), math.floor(n * b)
    kk = np.arange(K // 2, K + 1, dtype=float)
    coef, *_ = np.linalg.lstsq(
        np.column_stack([np.ones_like(kk), 1.0 / kk]), p[K // 2 : K + 1] * kk, rcond=None
    )
    d = np.arange(1, kb, dtype=float)
    pd = np.where(d <= K, p[np.minimum(d.astype(int), K)], (coef[0] + coef[1] / d) / d)
    pairs = np.maximum(np.minimum(ka, kb - d) - np.maximum(1, ka + 1 - d) + 1, 0)
    return float((pairs * pd).sum())


def test_block_cross_normalized_decreases(lazy_planar):
    # same-site pairs across a time split are o(a_n^2): the exact expectation
    # decreases and the replicate means agree with it
    r_by_n = {10**3: 400, 10**4: 200, 10**5: 100}
    expected, means, ses = [], [], []
    for n, reps in r_by_n.items():
        a_sq = norming_value("B2_PLANAR", n) ** 2
        expected.append(_expected_block_cross(lazy_planar.law, n, 0.4, 0.8) / a_sq)
        vals = []
        for i in range(reps):
            path = sample_path(lazy_planar, n, 70_000 + 31 * i)
            vals.append(block_cross_sum(path, 0.4, 0.8, n) / a_sq)
        means.append(np.mean(vals))
        ses.append(np.std(vals, ddof=1) / math.sqrt(reps))
    assert expected[0] > expected[1] > expected[2]
    for mean, exp, se in zip(means, expected, ses):
        assert abs(mean - exp) <= 4 * se


def test_sheet_with_scenery_pipeline(lazy_planar):
    path = sample_path(lazy_planar, 500, 21)
    marks = evaluate_along(path, Scenery(seed=4, d=2))
    sheet = empirical_sheet(marks, np.linspace(0, 1, 11), np.linspace(0, 1, 6),
                            Norming(lazy_planar.regime))
    assert sheet.a_n == pytest.approx(math.sqrt(500 * math.log(500)))
    assert sheet.normalized().shape == (11, 6)
