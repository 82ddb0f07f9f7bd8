import numpy as np
import pytest
from oracles import small_chain

from claimsbacklog import RngState
from claimsbacklog.errors import EstimationError, InputError, InstabilityError
from claimsbacklog.estimation import (
    GTable,
    HTable,
    autocorrelation,
    backlog_diagnostics,
    burn_in_sampler,
    estimate_g,
    estimate_g_grid,
    estimate_h,
    estimate_h_family,
    ks_windows,
)

N = 100_000


@pytest.fixture(scope="module")
def chain():
    return small_chain(1.3)


def _within(est, se, exact, k=4.5, floor=2e-3):
    assert np.all(np.abs(est - exact) <= k * se + floor), np.max(np.abs(est - exact) / (se + 1e-12))


def test_stationary_g_matches_exact_chain(small, chain):
    g = estimate_g(small, 1.3, T=15, n=N, rng=RngState(1), burn=400)
    _within(g.values, g.se, chain.g_stationary(15))
    assert abs(g.total - chain.g_stationary(15).sum()) < 4.5 * g.total_se


@pytest.mark.parametrize("b", [0, 8, 13, 40])
def test_conditional_g_matches_exact_chain(small, chain, b):
    g = estimate_g(small, 1.3, T=12, n=N, rng=RngState(2), condition=b)
    _within(g.values, g.se, chain.g(b, 12))
    exact = chain.g(b, 13)
    _within(g.companion, g.companion_se, exact[:-1] - exact[1:])


def test_g0_is_mu_once_backlog_reaches_capacity(small):
    g = estimate_g(small, 1.3, T=3, n=2000, rng=RngState(3), condition=13)
    assert g.values[0] == pytest.approx(small.mu, rel=0.05)
    # b >= c: every new report spills, so F_1 = R_1 exactly
    g_hi = estimate_g(small, 1.3, T=3, n=2000, rng=RngState(3), condition=100)
    assert g_hi.se[0] > 0
    assert abs(g_hi.values[0] - small.mu) < 4 * g_hi.se[0]


@pytest.mark.parametrize("m", [0, 1, 2, 5])
def test_h_matches_exact_chain(small, chain, m):
    h = estimate_h(small, 20, m, 1.3, T=10, n=N, rng=RngState(4))
    _within(h.values, h.se, chain.h(20, m, 10))


def test_h_with_unit_delay_equals_conditional_g(small):
    rng = RngState(5)
    h = estimate_h(small, 17, 1, 1.3, T=8, n=5000, rng=rng)
    g = estimate_g(small, 1.3, T=8, n=5000, rng=rng, condition=17)
    np.testing.assert_allclose(h.values, g.values, rtol=1e-12)


def test_h_family_agrees_with_single_delays(small):
    fam = estimate_h_family(small, 10, 1.3, 3, 6, n=3000, rng=RngState(6))
    for m in range(4):
        single = estimate_h(small, 10, m, 1.3, T=6, n=3000, rng=RngState(6))
        np.testing.assert_allclose(fam.values[m], single.values, rtol=1e-12)
    assert fam.values.shape == (4, 6)


def test_grid_uses_common_random_numbers(paper):
    grid = estimate_g_grid(paper, [1.1, 1.2, 1.3], T=20, n=500, rng=RngState(7), burn=200)
    alone = estimate_g(paper, 1.2, T=20, n=500, rng=RngState(7), burn=200)
    np.testing.assert_array_equal(grid[1].values, alone.values)
    # more capacity means less spill-over on the same draws
    assert grid[0].total > grid[1].total > grid[2].total


def test_tables_round_trip(small, tmp_path):
    g = estimate_g(small, 1.3, T=5, n=200, rng=RngState(8), burn=50)
    g.to_csv(tmp_path / "g.csv")
    back = GTable.from_csv(tmp_path / "g.csv")
    np.testing.assert_allclose(back.values, g.values)
    np.testing.assert_allclose(back.companion, g.companion)
    assert back.eta == g.eta and back.seed == 8 and back.condition == "stationary"
    h = estimate_h(small, 4, 2, 1.3, T=5, n=200, rng=RngState(8))
    h.to_csv(tmp_path / "h.csv")
    hb = HTable.from_csv(tmp_path / "h.csv")
    np.testing.assert_allclose(hb.values, h.values)
    assert (hb.b, hb.m) == (4, 2)


def test_instability_and_input_errors(small):
    with pytest.raises(InstabilityError):
        estimate_g(small, 1.0, T=3, n=10)
    with pytest.raises(InstabilityError):
        burn_in_sampler(small, [1.2, 0.9], size=5)
    with pytest.raises(InputError):
        estimate_g(small, 1.2, T=0, n=10)
    with pytest.raises(InputError):
        estimate_h(small, 0, -1, 1.2, T=3, n=10)
    with pytest.raises(InputError):
        burn_in_sampler(small, 1.2, burn=0)


def test_burn_in_law_matches_stationary_distribution(small, chain):
    draws = burn_in_sampler(small, 1.3, burn=400, rng=RngState(9), size=50_000)
    emp = np.bincount(draws, minlength=60)[:60] / draws.size
    se = np.sqrt(chain.stationary[:60] * (1 - chain.stationary[:60]) / draws.size)
    assert np.all(np.abs(emp - chain.stationary[:60]) < 5 * se + 1e-4)
    assert ks_windows(small, 1.3, burn=200, n=3000, rng=RngState(10)) > 1e-3


def test_backlog_diagnostics_follow_exact_transient(small, chain):
    d = backlog_diagnostics(small, 1.3, T=15, n=N, rng=RngState(11))
    exact = np.array([chain.mean_backlog_after(0, t - 1) for t in d.t]) / small.mu
    assert d.rel_mean[0] == 0 and d.p_positive[0] == 0
    _within(d.rel_mean[1:], d.rel_mean_se[1:], exact[1:], floor=1e-4)
    p = d.plateau(10)
    assert set(p) == {"p_positive", "cond_mean", "rel_mean"}


def test_autocorrelation_shape_and_decay(small):
    acf = autocorrelation(small, 1.3, 30, n=20_000, rng=RngState(12))
    assert acf[0] == 1.0 and len(acf) == 31
    assert np.all(np.abs(acf) <= 1 + 1e-12)
    assert acf[1] > acf[10] and abs(acf[30]) < 0.1
    with pytest.raises(EstimationError):
        autocorrelation(small, 50.0, 3, n=5, rng=RngState(0))
