from unittest import mock

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from claimsbacklog import RngState, processing
from claimsbacklog.errors import InputError, ParameterError
from claimsbacklog.processing import (
    PeriodState,
    axioms_check,
    compute_FG,
    continue_from_state,
    share_capacity_step,
    simulate_focal_origin,
    simulate_path,
    simulate_paths,
    split_uniform,
    state_at,
)


@settings(max_examples=200, deadline=None)
@given(b=st.integers(0, 500), r=st.integers(0, 500), c=st.integers(1, 400))
def test_spill_and_carry_reproduce_lindley(b, r, c):
    F, G = compute_FG(b, r, c)
    assert 0 <= F <= r
    assert 0.0 <= G < 1.0
    assert b * G + F == pytest.approx(max(b + r - c, 0), abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(
    counts=st.lists(st.lists(st.integers(0, 30), min_size=3, max_size=3), min_size=1, max_size=6),
    frac=st.floats(0.0, 1.0),
    seed=st.integers(0, 10_000),
)
def test_split_uniform_conserves_and_respects_bounds(counts, frac, seed):
    counts = np.array(counts)
    draws = np.floor(frac * counts.sum(axis=1)).astype(int)
    out = split_uniform(counts, draws, RngState(seed))
    np.testing.assert_array_equal(out.sum(axis=1), draws)
    assert np.all(out >= 0) and np.all(out <= counts)


def test_split_uniform_is_proportional_in_mean():
    counts = np.tile([[60, 30, 10]], (100_000, 1))
    out = split_uniform(counts, np.full(100_000, 40), RngState(3))
    np.testing.assert_allclose(out.mean(axis=0), [24, 12, 4], rtol=0.01)
    with pytest.raises(InputError):
        split_uniform(counts[:1], np.array([101]), RngState(0))


@settings(max_examples=100, deadline=None)
@given(
    backlog=st.lists(st.integers(0, 40), min_size=3, max_size=3),
    reports=st.lists(st.integers(0, 40), min_size=4, max_size=4),
    capacity=st.integers(1, 120),
    seed=st.integers(0, 1000),
)
def test_step_serves_backlog_first(backlog, reports, capacity, seed):
    t = 5
    state = PeriodState(t, {2 + k: v for k, v in enumerate(backlog)},
                        {t - j: v for j, v in enumerate(reports)}, capacity)
    res = share_capacity_step(state, RngState(seed))
    pb = sum(res.processed_backlog.values())
    pr = sum(res.processed_reports.values())
    assert pb == min(state.B, capacity)
    assert pb + pr == min(state.B + state.R, capacity)
    assert sum(res.next_backlog.values()) == max(state.B + state.R - capacity, 0)
    assert state.B * res.G + res.F == pytest.approx(sum(res.next_backlog.values()))
    for i in res.next_backlog:
        assert res.next_backlog[i] == state.backlog.get(i, 0) + state.reports.get(i, 0) \
            - res.processed_backlog[i] - res.processed_reports[i]
        assert res.next_backlog[i] >= 0


def test_period_state_validation():
    with pytest.raises(ParameterError):
        PeriodState(1, {}, {}, 0)
    with pytest.raises(InputError):
        PeriodState(1, {0: -1}, {}, 5)
    with pytest.raises(InputError):
        PeriodState(1, {}, {2: 1}, 5)
    with pytest.raises(InputError):
        PeriodState(1, {1: 3}, {}, 5)


@pytest.mark.parametrize("start", ["zero", "stationary", 2500])
def test_simulated_paths_satisfy_axioms(paper, start):
    path = simulate_paths(paper, 1.1, 40, start=start, n=20, rng=RngState(1), burn=300)
    assert axioms_check(path) == []
    assert path.backlog.shape == (20, len(path.origins), 41)


def test_corrupted_allocation_is_detected(paper):
    real = processing._allocate

    def leaky(backlog, reports, capacity, gen):
        pb, pr = real(backlog, reports, capacity, gen)
        pr = pr.copy()
        pr[:, 0] = np.maximum(pr[:, 0] - 1, 0)
        return pb, pr

    with mock.patch.object(processing, "_allocate", leaky):
        path = simulate_paths(paper, 1.2, 30, n=5, rng=RngState(2))
    kinds = {v.axiom for v in axioms_check(path)}
    assert "(4) aggregate" in kinds


def test_simulation_is_deterministic_and_exports(paper, tmp_path):
    a = simulate_path(paper, 1.2, 15, rng=RngState(9))
    b = simulate_path(paper, 1.2, 15, rng=RngState(9))
    np.testing.assert_array_equal(a.backlog, b.backlog)
    a.to_csv(tmp_path / "p.csv", header="seed=9")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "# seed=9" and lines[1].startswith("period,origin")
    delays, R, P, B = a.cell(3)
    assert delays[0] == 0 and B[0] == 0
    with pytest.raises(ParameterError):
        simulate_path(paper, 1.0, 5)
    with pytest.raises(InputError):
        simulate_paths(paper, 1.2, 5, start="full")


def test_state_round_trip_and_continuation(paper):
    path = simulate_paths(paper, 1.05, 30, n=1, rng=RngState(4))
    state = state_at(path, 20)
    assert state.B == path.agg_backlog[0, 19]
    fut = continue_from_state(paper, state, 5, n=50, rng=RngState(5))
    assert axioms_check(fut) == []
    # the recorded reports are replayed in the first period
    np.testing.assert_array_equal(fut.agg_reports[:, 0], state.R)
    np.testing.assert_array_equal(fut.agg_backlog[:, 0], state.B)
    with pytest.raises(InputError):
        state_at(path, 99)


def test_focal_origin_runs_off(small):
    cells = simulate_focal_origin(small, 1.3, 40, n=20_000, rng=RngState(6), burn=300)
    assert np.all(cells.backlog[:, 0] == 0)
    # every claim reported is eventually processed
    total_p = cells.processed.sum(axis=1)
    total_r = cells.reports.sum(axis=1)
    assert np.all(total_p <= total_r)
    assert total_p.mean() == pytest.approx(total_r.mean(), rel=1e-3)
