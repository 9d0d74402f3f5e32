import numpy as np
import pytest

from rwrs.errors import (
    ConvolutionTooLarge,
    NoConvergence,
    NotAperiodic,
    NotTransient,
    RegimeUndetermined,
)
from rwrs.walk import (
    REGIME_CAUCHY,
    REGIME_PLANAR,
    REGIME_TRANSIENT,
    HeavyTailLaw,
    IncrementLaw,
    WalkModel,
    build_model,
    check_aperiodicity,
    expected_lambda_ratio,
    green_sum,
    law_from_dict,
    model_from_dict,
    return_probability,
    sample_path,
)


def test_law_validation():
    with pytest.raises(ValueError):
        IncrementLaw(1, [(1,), (1,)], [0.5, 0.5])  # duplicate support
    with pytest.raises(ValueError):
        IncrementLaw(1, [(1,), (-1,)], [0.6, 0.6])  # sums to 1.2
    with pytest.raises(ValueError):
        IncrementLaw(2, [(1,)], [1.0])  # dimension mismatch
    with pytest.raises(ValueError):
        IncrementLaw(1, [(1,), (-1,)], [1.0, 0.0])  # zero probability


def test_aperiodicity_examples():
    srw = IncrementLaw(1, [(1,), (-1,)], [0.5, 0.5])
    assert check_aperiodicity(srw) is False  # period 2
    lazy = IncrementLaw(1, [(1,), (-1,), (0,)], [1 / 3, 1 / 3, 1 / 3])
    assert check_aperiodicity(lazy) is True
    bipartite = IncrementLaw(2, [(1, 0), (-1, 0), (0, 1), (0, -1)], [0.25] * 4)
    assert check_aperiodicity(bipartite) is False


def test_aperiodicity_support_order_invariant():
    perms = [
        [(1, 0), (-1, 0), (0, 1), (0, -1), (0, 0)],
        [(0, 0), (0, -1), (0, 1), (-1, 0), (1, 0)],
        [(0, 1), (1, 0), (0, 0), (0, -1), (-1, 0)],
    ]
    flags = {check_aperiodicity(IncrementLaw(2, s, [0.2] * 5)) for s in perms}
    assert flags == {True}


def test_build_model_lazy_planar(lazy_planar):
    assert lazy_planar.regime == REGIME_PLANAR
    assert np.allclose(lazy_planar.covariance, np.diag([0.4, 0.4]), atol=1e-15)
    assert lazy_planar.A == pytest.approx(0.8, abs=1e-15)
    assert lazy_planar.theorem_flags == ()


def test_build_model_lazy_cubic(lazy_cubic):
    assert lazy_cubic.regime == REGIME_TRANSIENT
    assert lazy_cubic.green_value > 0
    assert lazy_cubic.green_error < 1e-3 * lazy_cubic.green_value


def test_build_model_rejections():
    with pytest.raises(RegimeUndetermined):
        build_model(IncrementLaw(1, [(0,)], [1.0]))  # does not generate Z
    lazy1 = IncrementLaw(1, [(1,), (-1,), (0,)], [1 / 3, 1 / 3, 1 / 3])
    with pytest.raises(RegimeUndetermined):
        build_model(lazy1)  # centered finite-variance d=1 is out of scope
    srw = IncrementLaw(1, [(1,), (-1,)], [0.5, 0.5])
    with pytest.raises(NotAperiodic):
        build_model(srw)
    with pytest.raises(RegimeUndetermined):
        build_model(IncrementLaw(1, [(1,), (0,)], [0.7, 0.3]), regime_hint=REGIME_PLANAR)


def test_periodic_override_flags():
    drift = build_model(IncrementLaw(1, [(1,)], [1.0]), allow_periodic=True)
    assert drift.regime == REGIME_TRANSIENT
    assert drift.green_value == 0.0
    assert any("periodic" in f for f in drift.theorem_flags)


def test_noncentered_planar_is_transient():
    law = IncrementLaw(2, [(1, 0), (0, 1), (0, -1), (0, 0)], [0.4, 0.2, 0.2, 0.2])
    model = build_model(law)
    assert model.regime == REGIME_TRANSIENT


def test_heavy_tail_law_regime():
    model = build_model(HeavyTailLaw(0.5))
    assert model.regime == REGIME_CAUCHY
    assert model.A > 0 and model.A_error is not None


def test_heavy_tail_normalization():
    law = HeavyTailLaw(0.5)
    assert law.k_min == 2
    # p0 plus the magnitude tail adds to one
    tail = law.tail_probability(law.k_min)
    assert law.p_zero + tail == pytest.approx(1.0, abs=1e-12)
    small = HeavyTailLaw(0.1)
    assert small.k_min == 1


def test_heavy_tail_sampler_frequencies():
    law = HeavyTailLaw(0.5)
    rng = np.random.default_rng(42)
    x = law.sample(200_000, rng)
    n = x.size

    def band(p):
        return 4 * np.sqrt(p * (1 - p) / n)

    assert abs((x == 0).mean() - law.p_zero) < band(law.p_zero)
    for k in (2, 3, 5):
        p = 0.5 / k**2
        assert abs((x == k).mean() - p) < band(p)
    p_tail = law.tail_probability(50)
    assert abs((np.abs(x) >= 50).mean() - p_tail) < band(p_tail)
    # symmetric
    assert abs((x > 0).mean() - (x < 0).mean()) < band(0.33)


def test_sample_path_deterministic(lazy_planar):
    a = sample_path(lazy_planar, 1000, 7)
    b = sample_path(lazy_planar, 1000, 7)
    assert np.array_equal(a.positions, b.positions)
    c = sample_path(lazy_planar, 1000, 8)
    assert not np.array_equal(a.positions, c.positions)


def test_sample_path_single_step(lazy_planar):
    p = sample_path(lazy_planar, 1, 3)
    assert tuple(p.positions[0]) in set(lazy_planar.law.support)


def test_sample_path_increment_frequencies(lazy_planar):
    n = 1_000_000
    path = sample_path(lazy_planar, n, 99)
    steps = np.diff(np.vstack([[0, 0], path.positions]), axis=0)
    support = lazy_planar.law.support_array
    sigma = np.sqrt(0.2 * 0.8 / n)
    for vec in support:
        freq = np.mean(np.all(steps == vec, axis=1))
        assert abs(freq - 0.2) < 3 * sigma


def test_return_probability_examples(lazy_cubic):
    bipartite = build_model(
        IncrementLaw(2, [(1, 0), (-1, 0), (0, 1), (0, -1)], [0.25] * 4),
        allow_periodic=True,
    )
    assert return_probability(bipartite, 2) == pytest.approx(0.25, abs=1e-15)
    lazy = build_model(IncrementLaw(2, [(1, 0), (-1, 0), (0, 1), (0, -1), (0, 0)], [0.2] * 5))
    assert return_probability(lazy, 1) == pytest.approx(0.2, abs=1e-15)  # laziness mass
    assert return_probability(lazy_cubic, 1) == pytest.approx(1 / 7, abs=1e-15)
    assert return_probability(lazy_cubic, 2) == pytest.approx(1 / 7, abs=1e-14)


def test_return_probability_caps(lazy_cubic):
    with pytest.raises(ConvolutionTooLarge):
        return_probability(lazy_cubic, 5000)
    with pytest.raises(ConvolutionTooLarge):
        return_probability(lazy_cubic, 2000)  # box too large in d=3


def test_return_probability_vs_monte_carlo(lazy_planar):
    # invariant: MC frequency of S_k = 0 within 4 sqrt(p(1-p)/R)
    k, reps = 4, 100_000
    p = return_probability(lazy_planar, k)
    rng = np.random.default_rng(11)
    moves = lazy_planar.law.support_array
    idx = rng.integers(0, len(moves), size=(reps, k))
    pos = moves[idx].sum(axis=1)
    freq = np.mean(np.all(pos == 0, axis=1))
    assert abs(freq - p) < 4 * np.sqrt(p * (1 - p) / reps)


def test_green_sum_requires_transient(lazy_planar, lazy_cubic):
    with pytest.raises(NotTransient):
        green_sum(lazy_planar, 1e-3)
    lazy1 = IncrementLaw(1, [(1,), (-1,), (0,)], [1 / 3, 1 / 3, 1 / 3])
    probe = WalkModel(law=lazy1, regime=REGIME_TRANSIENT)
    with pytest.raises(NoConvergence):
        green_sum(probe, 1e-3)


def test_green_sum_drift_walk(drift_walk):
    assert drift_walk.green_value == 0.0
    assert drift_walk.green_error < 1e-12


def test_green_sum_truncation_brackets(lazy_cubic):
    g_small, eb_small = green_sum(lazy_cubic, rel_tol=1e-9, k_cap=64)
    g_big, eb_big = green_sum(lazy_cubic, rel_tol=1e-9, k_cap=256)
    assert abs(g_small - g_big) <= eb_small + eb_big
    assert eb_big < eb_small


def test_green_sum_rel_tol_consistency(lazy_cubic):
    g1, e1 = green_sum(lazy_cubic, 1e-3)
    g2, e2 = green_sum(lazy_cubic, 1e-4)
    assert abs(g1 - g2) <= e1 + e2


def test_green_sum_partial_sums_monotone(lazy_cubic_law):
    from rwrs.walk import _return_series

    p, _, k = _return_series(lazy_cubic_law, 128, 10_000_000, 1e-15)
    assert np.all(p >= 0)
    assert np.all(np.diff(np.cumsum(p)) >= 0)
    assert k == 128


def test_green_sum_vs_monte_carlo_returns(lazy_cubic):
    # quick version of the long-horizon oracle; the acceptance suite runs a
    # larger one
    g, g_err = lazy_cubic.green_value, lazy_cubic.green_error
    rng = np.random.default_rng(2)
    moves = lazy_cubic.law.support_array.astype(np.int16)
    reps, length, batch = 30_000, 1500, 3000
    total = 0.0
    total2 = 0.0
    for _ in range(reps // batch):
        idx = rng.integers(0, len(moves), size=(batch, length))
        pos = moves[idx].cumsum(axis=1, dtype=np.int16)
        ret = np.all(pos == 0, axis=2).sum(axis=1).astype(np.float64)
        total += ret.sum()
        total2 += (ret**2).sum()
    mc_mean = total / reps
    mc_se = np.sqrt((total2 / reps - mc_mean**2) / reps)
    # the finite-horizon mean underestimates g by the residual tail
    from scipy.special import zeta

    tail_cap = 2 * 0.42 * float(zeta(1.5, length + 1))
    assert mc_mean - 3 * mc_se - g_err <= g <= mc_mean + 3 * mc_se + tail_cap + g_err


def test_expected_lambda_ratio_drift(drift_walk):
    # all sites distinct: Lambda_n = n exactly
    assert expected_lambda_ratio(drift_walk, 1000) == pytest.approx(1.0, abs=1e-12)


def test_expected_lambda_ratio_monotone(lazy_planar, lazy_cubic):
    c_b2 = 2.0 / (np.pi * lazy_planar.A)
    gaps = [abs(expected_lambda_ratio(lazy_planar, n) - c_b2) for n in (10**4, 10**5, 10**6)]
    assert gaps[0] > gaps[1] > gaps[2]
    c_a = 1.0 + 2.0 * lazy_cubic.green_value
    gaps = [abs(expected_lambda_ratio(lazy_cubic, n) - c_a) for n in (10**4, 10**5, 10**6)]
    assert gaps[0] > gaps[1] > gaps[2]


def test_model_documents(planar_doc):
    law = law_from_dict(planar_doc)
    assert isinstance(law, IncrementLaw)
    model = model_from_dict(planar_doc)
    assert model.regime == REGIME_PLANAR
    heavy = law_from_dict({"d": 1, "heavy_tail": {"C": 0.5}})
    assert isinstance(heavy, HeavyTailLaw)
    doc = {"d": 1, "support": [[1]], "probs": [1.0], "allow_periodic": True}
    assert model_from_dict(doc).regime == REGIME_TRANSIENT
