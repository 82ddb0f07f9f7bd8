import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import small_chain

from claimsbacklog import RngState
from claimsbacklog.errors import DomainError, InputError, InstabilityError
from claimsbacklog.queueing import (
    heavy_traffic_approx,
    kingman_daley_bound,
    lindley_path,
    lindley_step,
    long_run_mean,
    max_representation,
    pollaczek_khintchine,
    stationary_mean_series,
    traffic_intensity,
)
from claimsbacklog.stochastics import sample_totals


@settings(max_examples=60, deadline=None)
@given(
    b0=st.integers(0, 50),
    reports=st.lists(st.integers(0, 40), min_size=1, max_size=25),
    c=st.integers(1, 30),
)
def test_lindley_matches_max_of_partial_sums(b0, reports, c):
    path = lindley_path(b0, np.array(reports), c)
    np.testing.assert_array_equal(path.backlog, max_representation(b0, path.increments))
    assert np.all(path.backlog >= 0)


def test_lindley_step_and_shape_check():
    np.testing.assert_array_equal(lindley_step(np.array([0, 5]), np.array([3, 1]), 4), [0, 2])
    with pytest.raises(InputError):
        lindley_path(0, np.array([1, 2]), np.array([1, 2, 3]))


def test_closed_forms_reference_values():
    # paper config: E[R] = 1000, Var[R] = 501000
    assert kingman_daley_bound(1000.0, 501_000.0, 1.2) == pytest.approx(1252.5)
    assert heavy_traffic_approx(1000.0, 501_000.0, 1200.0, 0.0) == pytest.approx(1252.5)
    assert kingman_daley_bound(1000.0, 1000.0, 1.2) == pytest.approx(2.5)
    assert pollaczek_khintchine(1000.0, 501_000.0 + 1e6, 2000.0) == pytest.approx(750.5)
    assert traffic_intensity(1000.0, 1200.0) == pytest.approx(1 / 1.2)


def test_closed_form_domains():
    with pytest.raises(DomainError):
        heavy_traffic_approx(10.0, 1.0, 10.0, 0.0)
    with pytest.raises(DomainError):
        kingman_daley_bound(10.0, 1.0, 1.0)
    with pytest.raises(DomainError):
        pollaczek_khintchine(10.0, 200.0, 9.0)
    with pytest.raises(DomainError):
        traffic_intensity(1.0, 0.0)


def test_series_and_long_run_mean_match_exact_chain(small):
    chain = small_chain(1.3)
    exact = chain.mean_backlog()

    def inc(gen, shape):
        return sample_totals(small, gen, shape) - 13

    s = stationary_mean_series(inc, K=400, n=40_000, rng=RngState(11))
    assert abs(s.value - exact) < 4 * s.se + 1e-3
    assert s.last_term < 1e-3
    lr = long_run_mean(lambda g, n: sample_totals(small, g, n), lambda g, n: np.full(n, 13.0),
                       chains=400, periods=2000, burn=300, rng=RngState(12))
    assert abs(lr.mean - exact) < 4 * lr.se


def test_series_rejects_unstable_increments():
    with pytest.raises(InstabilityError):
        stationary_mean_series(lambda g, shape: g.normal(0.5, 1.0, shape), K=10, n=50, rng=RngState(0))
    with pytest.raises(InputError):
        stationary_mean_series(lambda g, shape: g.normal(-1, 1.0, shape), K=0, n=5)
