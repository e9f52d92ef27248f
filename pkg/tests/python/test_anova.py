"""One-way ANOVA and the F distribution"""

import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from loftsim.errors import DomainError
from loftsim.recon.anova import anova_oneway, f_cdf, f_survival


def test_hand_computed_f_statistic():
    result = anova_oneway([[1, 2, 3], [4, 5, 6]])
    assert result.f_statistic == pytest.approx(13.5)
    assert (result.df_between, result.df_within) == (1, 4)
    assert result.p_value == pytest.approx(f_survival(13.5, 1, 4))
    assert 0.01 < result.p_value < 0.05


def test_zero_within_variance():
    spread = anova_oneway([[1.0, 1.0], [2.0, 2.0]])
    assert spread.degenerate and math.isinf(spread.f_statistic) and spread.p_value == 0.0
    same = anova_oneway([[1.0, 1.0], [1.0, 1.0]])
    assert same.f_statistic == 0.0 and same.p_value == 1.0 and not same.degenerate


def test_invalid_groups():
    with pytest.raises(DomainError):
        anova_oneway([[1, 2, 3]])
    with pytest.raises(DomainError):
        anova_oneway([[1, 2], []])
    with pytest.raises(DomainError):
        anova_oneway([[1], [2]])
    with pytest.raises(DomainError):
        f_cdf(1.0, 0, 3)


samples = st.lists(st.floats(-100, 100, allow_nan=False), min_size=2, max_size=12)


@settings(max_examples=200, deadline=None)
@given(groups=st.lists(samples, min_size=2, max_size=4),
       shift=st.floats(-1e3, 1e3), scale=st.floats(0.01, 100))
def test_invariant_under_shift_and_scale(groups, shift, scale):
    assume(all(np.std(g) > 1e-2 for g in groups))
    base = anova_oneway(groups)
    moved = anova_oneway([[scale * x + shift for x in g] for g in groups])
    assert moved.f_statistic == pytest.approx(base.f_statistic, rel=1e-6, abs=1e-9)
    assert moved.p_value == pytest.approx(base.p_value, rel=1e-5, abs=1e-9)


@settings(max_examples=300, deadline=None)
@given(d1=st.integers(1, 20), d2=st.integers(1, 200),
       a=st.floats(0, 1e4, allow_nan=False), b=st.floats(0, 1e4, allow_nan=False))
def test_p_value_never_increases_with_f(d1, d2, a, b):
    low, high = sorted((a, b))
    assert f_survival(low, d1, d2) >= f_survival(high, d1, d2)


def test_p_value_follows_f_statistic():
    base = [[1.0, 2.0, 3.0], [2.0, 3.0, 4.0], [1.5, 2.5, 3.5]]
    previous = None
    for offset in (0.0, 0.5, 1.0, 2.0, 4.0):
        result = anova_oneway([base[0], [x + offset for x in base[1]], base[2]])
        assert result.p_value == pytest.approx(f_survival(result.f_statistic, 2, 6))
        if previous is not None:
            assert result.f_statistic >= previous.f_statistic
            assert result.p_value <= previous.p_value
        previous = result


@pytest.mark.parametrize("d1,d2", [(1, 4), (3, 20), (9, 190)])
def test_f_cdf_matches_monte_carlo(d1, d2):
    draws = np.random.default_rng(d1 * 100 + d2).f(d1, d2, 1_000_000)
    for q in (0.1, 0.25, 0.5, 0.75, 0.9):
        x = float(np.quantile(draws, q))
        assert f_cdf(x, d1, d2) == pytest.approx(q, abs=0.01)
        assert f_cdf(x, d1, d2) + f_survival(x, d1, d2) == pytest.approx(1.0)


def test_f_cdf_limits():
    assert f_cdf(0.0, 2, 5) == 0.0
    assert f_cdf(math.inf, 2, 5) == 1.0
    assert f_survival(-1.0, 2, 5) == 1.0
