import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from krpo_lab import stats
from krpo_lab.stats import DegenerateVarianceError, compare_runs, paired_t_test_one_tailed, running_average


def mp_t_cdf(t, df):
    """Integrate the Student t density directly at 30 digits."""
    with mpmath.workdps(30):
        nu = mpmath.mpf(df)
        c = mpmath.gamma((nu + 1) / 2) / (mpmath.sqrt(nu * mpmath.pi) * mpmath.gamma(nu / 2))
        dens = lambda x: c * (1 + x * x / nu) ** (-(nu + 1) / 2)  # noqa: E731
        if t <= 0:
            return mpmath.quad(dens, [-mpmath.inf, t])
        return mpmath.mpf(1) / 2 + mpmath.quad(dens, [0, t])


def test_running_average_examples():
    assert running_average([1, 1, 1], 2) == [1.0, 1.0, 1.0]
    assert running_average([0, 1], 2) == [0.0, 0.5]
    assert running_average([3, 5, 7], 1) == [3.0, 5.0, 7.0]
    assert running_average([], 3) == []
    with pytest.raises(ValueError):
        running_average([1.0], 0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-10, 10), max_size=40), st.integers(1, 8))
def test_running_average_brute_force(series, window):
    out = running_average(series, window)
    for k, v in enumerate(out):
        chunk = series[max(0, k - window + 1) : k + 1]
        assert abs(v - sum(chunk) / len(chunk)) <= 1e-12 * max(1.0, max(abs(x) for x in chunk))


def test_smoothing_window():
    assert stats.smoothing_window(10) == 1
    assert stats.smoothing_window(500) == 10
    assert stats.smoothing_window(300) == 6


@pytest.mark.parametrize("a,b,x", [(0.5, 0.5, 0.3), (2.0, 3.0, 0.7), (50.0, 0.5, 0.99), (0.5, 50.0, 0.01), (1e-3, 1.0, 0.5), (10.0, 10.0, 0.5)])
def test_betainc_against_scipy(a, b, x):
    assert stats.betainc(a, b, x) == pytest.approx(special.betainc(a, b, x), rel=1e-12, abs=1e-15)


def test_betainc_edges():
    assert stats.betainc(2.0, 3.0, 0.0) == 0.0
    assert stats.betainc(2.0, 3.0, 1.0) == 1.0
    with pytest.raises(ValueError):
        stats.betainc(0.0, 1.0, 0.5)
    with pytest.raises(ValueError):
        stats.betainc(1.0, 1.0, 1.5)


@pytest.mark.parametrize("df", [1, 2, 3, 7, 30, 100])
@pytest.mark.parametrize("t", [-10.0, -3.3, -1.0, -0.2, 0.0, 0.4, 1.7, 4.0, 10.0])
def test_t_cdf_against_integrated_density(t, df):
    assert abs(stats.t_cdf(t, df) - float(mp_t_cdf(t, df))) <= 1e-8


@settings(max_examples=200, deadline=None)
@given(st.floats(-10, 10), st.integers(1, 100))
def test_t_cdf_sf_complement_and_symmetry(t, df):
    assert abs(stats.t_cdf(t, df) + stats.t_sf(t, df) - 1.0) <= 1e-12
    assert abs(stats.t_cdf(-t, df) - stats.t_sf(t, df)) <= 1e-12


def test_ttest_fixture():
    # d = [1, 2, 3]: mean 2, sd 1, t = 2 sqrt(3); the df=2 tail is 1/2 - t / (2 sqrt(t^2 + 2))
    res = paired_t_test_one_tailed([0, 0, 0], [1, 2, 3])
    assert res.df == 2
    assert res.t == pytest.approx(2 * math.sqrt(3), rel=1e-14)
    assert res.p == pytest.approx(0.5 - 2 * math.sqrt(3) / (2 * math.sqrt(14)), rel=1e-12)


def test_ttest_t_two_df_two():
    # d = [1 - s, 1, 1 + s] has sample sd s, so s = sqrt(3)/2 gives t = 2 with df = 2
    s = math.sqrt(3) / 2
    res = paired_t_test_one_tailed([0.0, 0.0, 0.0], [1 - s, 1.0, 1 + s])
    assert res.t == pytest.approx(2.0, rel=1e-14)
    assert res.p == pytest.approx(0.091751709536136983634, rel=1e-12)
    assert stats.t_sf(2.0, 2) == pytest.approx(0.091751709536136983634, rel=1e-14)


def test_ttest_degenerate_and_small():
    with pytest.raises(DegenerateVarianceError):
        paired_t_test_one_tailed([0.1, 0.2, 0.3], [0.1, 0.2, 0.3])
    with pytest.raises(DegenerateVarianceError):
        paired_t_test_one_tailed([0.0, 1.0], [0.5, 1.5])
    with pytest.raises(ValueError):
        paired_t_test_one_tailed([0.0], [1.0])


def test_ttest_strong_effect():
    rng = np.random.default_rng(0)
    a = rng.random(200)
    b = a + 0.1 + rng.normal(scale=1e-3, size=200)
    assert paired_t_test_one_tailed(a, b).p < 1e-6


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=3, max_size=30))
def test_ttest_antisymmetry(pairs):
    a = [x for x, _ in pairs]
    b = [y for _, y in pairs]
    try:
        fwd = paired_t_test_one_tailed(a, b)
    except DegenerateVarianceError:
        return
    rev = paired_t_test_one_tailed(b, a)
    assert rev.t == -fwd.t
    assert abs(fwd.p + rev.p - 1.0) <= 1e-12


def report(seed, acc, scores, final):
    return {"seed": seed, "final_accuracy": acc, "eval_scores": scores, "final_smoothed_reward": final}


def test_compare_identical_sets():
    runs = [report(s, 0.5, [1.0, 0.0, 0.5], 0.4) for s in (1, 2, 3)]
    cmp = compare_runs(runs, runs)
    assert all(r.accuracy_diff == 0 and r.final_reward_diff == 0 for r in cmp.rows)
    assert cmp.ttest is None and cmp.ttest_note
    assert cmp.to_csv().splitlines()[-1].startswith("ttest,n/a")


def test_compare_hand_computed():
    a = [report(1, 0.2, [0, 0, 0], 0.1), report(2, 0.4, [0, 0, 0], 0.3), report(3, 0.3, [0, 0, 0], 0.2)]
    b = [report(1, 0.3, [1, 1, 1], 0.2), report(2, 0.6, [1, 1, 1], 0.6), report(3, 0.6, [1, 1, 1], 0.5)]
    cmp = compare_runs(a, b, pairing="seed")
    assert [r.seed for r in cmp.rows] == [1, 2, 3]
    # diffs 0.1, 0.2, 0.3: mean 0.2, sd 0.1, t = 2 sqrt(3)
    assert cmp.ttest.t == pytest.approx(2 * math.sqrt(3), rel=1e-9)
    assert cmp.summary()["accuracy_diff"] == pytest.approx(0.2, rel=1e-12)
    assert cmp.summary()["final_reward_diff"] == pytest.approx(7 / 30, rel=1e-12)
    assert compare_runs(a, b, pairing="question").ttest_note == "degenerate variance"


def test_compare_errors_and_small_samples():
    with pytest.raises(ValueError):
        compare_runs([report(1, 0.1, [0], 0)], [report(2, 0.1, [0], 0)])
    with pytest.raises(ValueError):
        compare_runs([report(1, 0.1, [0], 0)], [report(1, 0.1, [0, 1], 0)])
    with pytest.raises(ValueError):
        compare_runs([report(1, 0, [0], 0)], [report(1, 0, [0], 0)], pairing="prompt")
    single = compare_runs([report(1, 0.1, [0, 1], 0)], [report(1, 0.3, [1, 1], 0)], pairing="seed")
    assert single.ttest is None and single.ttest_note == "insufficient pairs"
    assert single.to_dict()["ttest"] == "n/a"
