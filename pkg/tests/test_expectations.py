import numpy as np
import pytest
from oracles import small_chain

from claimsbacklog import RngState
from claimsbacklog.errors import InputError
from claimsbacklog.estimation import GTable
from claimsbacklog.expectations import (
    HistorySummary,
    HProvider,
    MonteCarloHProvider,
    backlog_profile,
    cond_backlog_expectation,
    cond_backlog_terms,
    processed_profile,
    processing_pattern,
    stationary_backlog_from_g,
    uncond_backlog_expectation,
    uncond_processed_expectation,
)
from claimsbacklog.processing import PeriodState, continue_from_state, simulate_focal_origin

ETA = 1.3


@pytest.fixture(scope="module")
def chain():
    return small_chain(ETA)


@pytest.fixture(scope="module")
def exact_g(chain):
    v = chain.g_stationary(121)
    nan = np.full(120, np.nan)
    return GTable(ETA, "stationary", v[:120], nan, v[:120] - v[1:], nan, n=0)


class ExactH(HProvider):
    def __init__(self, chain):
        self.chain = chain

    def family(self, b, eta, m_max, T):
        return np.stack([self.chain.h(int(b), m, T) for m in range(m_max + 1)])


def test_stationary_identities(small, chain, exact_g):
    assert stationary_backlog_from_g(exact_g) == pytest.approx(chain.mean_backlog(), rel=1e-9)
    assert backlog_profile(exact_g, small).sum() == pytest.approx(chain.mean_backlog(), rel=1e-9)
    assert processed_profile(exact_g, small).sum() == pytest.approx(small.mu, rel=1e-9)
    assert uncond_backlog_expectation(exact_g, small, 0) == 0.0


def test_per_delay_formulas_match_labeled_simulation(small, exact_g):
    cells = simulate_focal_origin(small, ETA, 12, n=100_000, rng=RngState(21), burn=400)
    n = cells.backlog.shape[0]
    for j in range(13):
        for sim, exact in ((cells.backlog[:, j], uncond_backlog_expectation(exact_g, small, j)),
                           (cells.processed[:, j], uncond_processed_expectation(exact_g, small, j))):
            se = sim.std(ddof=1) / np.sqrt(n)
            assert abs(sim.mean() - exact) < 4.5 * se + 1e-3, (j, sim.mean(), exact)


def test_formula_input_checks(small, exact_g):
    with pytest.raises(InputError):
        uncond_backlog_expectation(exact_g, small, -1)
    with pytest.raises(InputError):
        uncond_processed_expectation(exact_g, small, 500)


def test_processing_pattern_is_a_cdf(small, exact_g):
    cum = processing_pattern(small, [exact_g])[ETA]
    assert np.all(np.diff(cum) >= 0)
    assert cum[-1] == pytest.approx(1.0, abs=1e-6)


def test_history_summary(small):
    h = HistorySummary.zero_start(small, 1311)
    assert h.R == 1311 and h.B == 0
    assert h.reports == {0: 787, -1: 524}
    F, G, b_next = h.derived(13)
    assert (F, G, b_next) == (1298.0, 0.0, 1298.0)
    state = PeriodState(t=0, backlog={-3: 4, -2: 6, -1: 9}, reports={-1: 3, 0: 9}, capacity=13)
    hs = HistorySummary.from_state(state)
    assert (hs.B, hs.R) == (19, 12)
    with pytest.raises(InputError):
        HistorySummary(tau=0, reports={1: 3})
    with pytest.raises(InputError):
        HistorySummary(tau=0, reports={0: 1}, backlog={0: 2})
    with pytest.raises(InputError):
        HistorySummary(tau=0, reports={0: -1})


def test_horizon_sum_routes_agree(small):
    mc = MonteCarloHProvider(small, n=4000, seed=3)
    for b, T in ((0, 6), (25, 10)):
        pathwise = mc.horizon_sums(b, ETA, T)
        generic = HProvider.horizon_sums(mc, b, ETA, T)
        np.testing.assert_allclose(pathwise, generic, rtol=1e-10)


def test_horizon_sums_match_exact(small, chain):
    mc = MonteCarloHProvider(small, n=50_000, seed=4)
    s0, sm = mc.horizon_sums(30, ETA, 8)
    e0, em = HProvider.horizon_sums(ExactH(chain), 30, ETA, 8)
    assert s0 == pytest.approx(e0, rel=0.02)
    assert sm == pytest.approx(em, rel=0.02)


def test_conditional_formula_matches_resimulation(small, chain):
    state = PeriodState(t=0, backlog={-3: 4, -2: 6, -1: 9}, reports={-1: 3, 0: 9}, capacity=13)
    hist = HistorySummary.from_state(state)
    provider = ExactH(chain)
    K = 6
    sim = continue_from_state(small, state, K + 1, 100_000, RngState(22))
    lo = int(sim.origins[0])
    for i in range(-3, K + 1):
        for k in range(K + 1):
            if hist.tau - i + k < 0:
                continue
            a = cond_backlog_expectation(hist, provider, small, ETA, i, k)
            x = sim.backlog[:, i - lo, k + 1]
            se = x.std(ddof=1) / np.sqrt(x.size)
            assert abs(a - x.mean()) < 4.5 * se + 1e-3, (i, k, a, x.mean())
    future, new, carried = cond_backlog_terms(hist, provider, small, ETA, -3, 0)
    assert future == 0 and new == 0 and carried > 0
    with pytest.raises(InputError):
        cond_backlog_terms(hist, provider, small, ETA, 3, 1)
