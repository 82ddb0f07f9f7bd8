"""Labeled capacity sharing between occurrence periods.

Each period the backlog is served first: a uniformly random subset of
``min(B_t, C_t)`` backlog claims is processed, then the leftover capacity
takes a uniformly random subset of the newly reported claims.  Per origin
this is a multivariate hypergeometric split, so every origin is processed
in proportion to its share in conditional expectation while the aggregate
``P_t = min(B_t + R_t, C_t)`` holds on every path.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np

from .errors import InputError, ParameterError
from .queueing import lindley_path
from .stochastics import ModelConfig, RngLike, as_generator, sample_negbin, sample_reporting_row


def compute_FG(b, r, c):
    """Spill-over ``F_t`` of new reports into the backlog and carry fraction ``G_t``.

    ``F = R 1{B > C} + (B + R - C) 1{B <= C < B + R}`` and
    ``G = (1 - C/B) 1{B > C}``, so that ``B_{t+1} = B_t G_t + F_t``.
    Works elementwise on arrays.
    """
    b = np.asarray(b)
    r = np.asarray(r)
    c = np.asarray(c)
    over = b > c
    mid = ~over & (b + r > c)
    F = np.where(over, r, np.where(mid, b + r - c, 0))
    G = np.where(over, 1.0 - c / np.where(over, b, 1), 0.0)
    if F.ndim == 0:
        return F.item(), float(G)
    return F, G


def split_uniform(counts, draws, rng: RngLike) -> np.ndarray:
    """Tally a uniformly random subset of pooled claims by class.

    ``counts`` has shape (n, K): claims per class for each of n independent
    rows.  Row r draws ``draws[r]`` claims without replacement; the result is
    multivariate hypergeometric, sampled class by class.
    """
    gen = as_generator(rng)
    counts = np.asarray(counts, dtype=np.int64)
    draws = np.asarray(draws, dtype=np.int64)
    total = counts.sum(axis=1)
    if np.any(draws > total) or np.any(draws < 0):
        raise InputError("cannot draw more claims than available")
    out = np.where((draws >= total)[:, None], counts, 0)
    rows = np.flatnonzero((draws > 0) & (draws < total))
    if rows.size == 0:
        return out
    sub = counts[rows]
    need = draws[rows].copy()
    left = total[rows].copy()
    res = np.zeros_like(sub)
    for k in range(sub.shape[1] - 1):
        col = sub[:, k]
        if not col.any():
            continue
        take = gen.hypergeometric(col, left - col, need)
        res[:, k] = take
        need -= take
        left -= col
    res[:, -1] = need
    out[rows] = res
    return out


def _allocate(backlog, reports, capacity, gen):
    """Vectorised backlog-first allocation; returns (P_B, P_R) per class."""
    bt = backlog.sum(axis=1)
    rt = reports.sum(axis=1)
    pb_total = np.minimum(bt, capacity)
    pb = np.zeros_like(backlog)
    live = np.flatnonzero(backlog.any(axis=0))
    if live.size:
        pb[:, live] = split_uniform(backlog[:, live], pb_total, gen)
    pr = split_uniform(reports, np.minimum(rt, capacity - pb_total), gen)
    return pb, pr


@dataclass
class PeriodState:
    """Per-origin state at the start of calendar period ``t``.

    ``backlog[i]`` is ``B[i, t-i]`` and ``reports[i]`` is ``R[i, t-i]``.
    """

    t: int
    backlog: Dict[int, int]
    reports: Dict[int, int]
    capacity: int

    def __post_init__(self):
        if self.capacity <= 0:
            raise ParameterError(f"capacity must be positive, got {self.capacity}")
        if any(v < 0 for v in self.backlog.values()) or any(v < 0 for v in self.reports.values()):
            raise InputError("counts must be nonnegative")
        if any(i > self.t for i in list(self.backlog) + list(self.reports)):
            raise InputError("origins cannot lie after the current period")
        if self.backlog.get(self.t, 0) != 0:
            raise InputError("the newest occurrence period cannot carry a backlog")

    @property
    def B(self) -> int:
        return int(sum(self.backlog.values()))

    @property
    def R(self) -> int:
        return int(sum(self.reports.values()))


@dataclass
class StepResult:
    processed_backlog: Dict[int, int]
    processed_reports: Dict[int, int]
    next_backlog: Dict[int, int]
    F: int
    G: float


def share_capacity_step(state: PeriodState, rng: RngLike = None) -> StepResult:
    """Process one period of ``state`` with the backlog-first rule."""
    gen = as_generator(rng)
    origins = sorted(set(state.backlog) | set(state.reports))
    b = np.array([[state.backlog.get(i, 0) for i in origins]], dtype=np.int64)
    r = np.array([[state.reports.get(i, 0) for i in origins]], dtype=np.int64)
    pb, pr = _allocate(b, r, state.capacity, gen)
    nxt = b + r - pb - pr
    F, G = compute_FG(state.B, state.R, state.capacity)
    return StepResult(
        processed_backlog={i: int(v) for i, v in zip(origins, pb[0])},
        processed_reports={i: int(v) for i, v in zip(origins, pr[0])},
        next_backlog={i: int(v) for i, v in zip(origins, nxt[0])},
        F=int(F),
        G=G,
    )


@dataclass
class SimPath:
    """A batch of ``n`` labeled trajectories over calendar periods.

    Arrays are indexed ``[replicate, origin, period]`` with origins given by
    ``origins`` and periods ``first_period .. first_period + T - 1``.
    ``backlog`` has one extra period slot holding the state after the last
    processed period.
    """

    config: ModelConfig
    capacity: int
    origins: np.ndarray
    first_period: int
    reports: np.ndarray
    backlog: np.ndarray
    processed_backlog: np.ndarray
    processed_reports: np.ndarray
    F: np.ndarray
    G: np.ndarray
    eta: Optional[float] = None

    @property
    def n(self) -> int:
        return self.reports.shape[0]

    @property
    def T(self) -> int:
        return self.reports.shape[2]

    @property
    def periods(self) -> np.ndarray:
        return np.arange(self.first_period, self.first_period + self.T)

    @property
    def processed(self) -> np.ndarray:
        return self.processed_backlog + self.processed_reports

    @property
    def agg_reports(self) -> np.ndarray:
        return self.reports.sum(axis=1)

    @property
    def agg_backlog(self) -> np.ndarray:
        return self.backlog.sum(axis=1)

    @property
    def agg_processed(self) -> np.ndarray:
        return self.processed.sum(axis=1)

    def cell(self, origin: int, replicate: int = 0):
        """Development-period view of one origin: ``(delays, R, P, B)``."""
        k = int(origin - self.origins[0])
        delays = self.periods - origin
        keep = delays >= 0
        return (
            delays[keep],
            self.reports[replicate, k, keep],
            self.processed[replicate, k, keep],
            self.backlog[replicate, k, :-1][keep],
        )

    def to_csv(self, path: Union[str, Path], replicate: int = 0, header: Optional[str] = None) -> None:
        """Columnar export: one row per (period, origin) with any activity."""
        path = Path(path)
        with path.open("w", newline="") as fh:
            if header:
                fh.write(f"# {header}\n")
            w = csv.writer(fh)
            w.writerow(["period", "origin", "R", "P_B", "P_R", "B", "C", "F", "G"])
            for s, t in enumerate(self.periods):
                for k, i in enumerate(self.origins):
                    r = self.reports[replicate, k, s]
                    b = self.backlog[replicate, k, s]
                    pb = self.processed_backlog[replicate, k, s]
                    pr = self.processed_reports[replicate, k, s]
                    if r or b or pb or pr:
                        w.writerow([t, i, r, pb, pr, b, self.capacity,
                                    self.F[replicate, s], f"{self.G[replicate, s]:.10g}"])


def _run_labeled(config, capacity, origins, backlog0, first_period, periods, gen, first_reports=None):
    n, n_orig = backlog0.shape
    J = config.J
    base = int(origins[0])
    shape = (n, n_orig, periods)
    reports = np.zeros(shape, dtype=np.int64)
    backlog = np.zeros((n, n_orig, periods + 1), dtype=np.int64)
    proc_b = np.zeros(shape, dtype=np.int64)
    proc_r = np.zeros(shape, dtype=np.int64)
    F = np.zeros((n, periods), dtype=np.int64)
    G = np.zeros((n, periods))
    cur = backlog0.astype(np.int64).copy()
    for s in range(periods):
        t = first_period + s
        cols = t - np.arange(J + 1) - base
        if s == 0 and first_reports is not None:
            rep = np.asarray(first_reports, dtype=np.int64)
        else:
            rep = sample_reporting_row(config, gen, size=n)
        valid = cols >= 0
        rep = rep[:, valid]
        cols = cols[valid]
        backlog[:, :, s] = cur
        pb, pr = _allocate(cur, rep, capacity, gen)
        reports[:, cols, s] = rep
        proc_b[:, :, s] = pb
        proc_r[:, cols, s] = pr
        F[:, s], G[:, s] = compute_FG(cur.sum(axis=1), rep.sum(axis=1), capacity)
        cur = cur - pb
        cur[:, cols] += rep - pr
    backlog[:, :, periods] = cur
    return reports, backlog, proc_b, proc_r, F, G


def simulate_paths(
    config: ModelConfig,
    eta: float,
    horizon: int,
    start: Union[int, str] = "zero",
    n: int = 1,
    rng: RngLike = None,
    burn: int = 1200,
) -> SimPath:
    """Simulate ``n`` labeled trajectories over periods ``1 .. horizon``.

    ``start`` is ``"zero"``, a fixed backlog count, or ``"stationary"`` (a
    burn-in draw per replicate).  A nonzero initial backlog is booked on a
    synthetic origin ``-J``, older than every origin that still reports.
    """
    if not eta > 1:
        raise ParameterError(f"capacity ratio must exceed 1, got {eta}")
    gen = as_generator(rng)
    capacity = config.capacity(eta)
    J = config.J
    origins = np.arange(-J, horizon + 1)
    b0 = np.zeros((n, len(origins)), dtype=np.int64)
    if start == "zero":
        pass
    elif start == "stationary":
        from .estimation import burn_in_sampler

        b0[:, 0] = burn_in_sampler(config, eta, burn=burn, rng=gen, size=n)
    elif isinstance(start, (int, np.integer)) and start >= 0:
        b0[:, 0] = int(start)
    else:
        raise InputError(f"unknown initial backlog spec {start!r}")
    arrays = _run_labeled(config, capacity, origins, b0, 1, horizon, gen)
    return SimPath(config, capacity, origins, 1, *arrays, eta=eta)


def simulate_path(config, eta, horizon, start="zero", rng=None, burn=1200) -> SimPath:
    return simulate_paths(config, eta, horizon, start=start, n=1, rng=rng, burn=burn)


def continue_from_state(
    config: ModelConfig, state: PeriodState, periods: int, n: int, rng: RngLike = None
) -> SimPath:
    """Resimulate ``n`` futures from a frozen period state.

    Period ``state.t`` is processed with the recorded reports (the random
    allocation is redrawn per replicate); later periods draw fresh reports.
    """
    gen = as_generator(rng)
    lo = min([state.t - config.J] + list(state.backlog) + list(state.reports))
    origins = np.arange(lo, state.t + periods)
    b0 = np.zeros((n, len(origins)), dtype=np.int64)
    for i, v in state.backlog.items():
        b0[:, i - lo] = v
    first = np.zeros((n, config.J + 1), dtype=np.int64)
    for j in range(config.J + 1):
        first[:, j] = state.reports.get(state.t - j, 0)
    arrays = _run_labeled(config, state.capacity, origins, b0, state.t, periods, gen, first_reports=first)
    return SimPath(config, state.capacity, origins, state.t, *arrays)


def state_at(path: SimPath, t: int, replicate: int = 0) -> PeriodState:
    """Extract the per-origin state at the start of period ``t``."""
    s = t - path.first_period
    if not 0 <= s < path.T:
        raise InputError(f"period {t} outside the simulated range")
    backlog = {int(i): int(v) for i, v in zip(path.origins, path.backlog[replicate, :, s]) if v}
    reports = {int(i): int(v) for i, v in zip(path.origins, path.reports[replicate, :, s]) if v}
    return PeriodState(t=t, backlog=backlog, reports=reports, capacity=path.capacity)


@dataclass(frozen=True)
class Violation:
    axiom: str
    replicate: int
    origin: Optional[int]
    period: Optional[int]
    detail: str


def axioms_check(path: SimPath, max_per_axiom: int = 10) -> List[Violation]:
    """Check a path against the processing axioms; an empty list means clean.

    Covered: nonnegativity and ``B[i, 0] = 0``; the per-origin recursion
    ``B[i, j+1] = B[i, j] + R[i, j] - P[i, j]``; processed parts bounded by
    what was available; ``P_t = min(B_t + R_t, C_t)``; conservation for
    origins that are fully reported and run off inside the window;
    ``B_{t+1} = B_t G_t + F_t``; and agreement of the aggregate with the
    unlabeled Lindley recursion.
    """
    out: List[Violation] = []
    R, B, PB, PR = path.reports, path.backlog, path.processed_backlog, path.processed_reports
    P = PB + PR
    periods = path.periods

    def add(axiom, mask, detail, per_origin=True):
        idx = np.argwhere(mask)
        for row in idx[:max_per_axiom]:
            if per_origin:
                r, k, s = row
                out.append(Violation(axiom, int(r), int(path.origins[k]), int(periods[min(s, path.T - 1)]), detail))
            else:
                r, s = row
                out.append(Violation(axiom, int(r), None, int(periods[s]), detail))

    for name, arr in (("R", R), ("B", B), ("P_B", PB), ("P_R", PR)):
        add("(1) nonnegativity", arr < 0, f"{name} < 0")
    newest = np.zeros(B.shape, dtype=bool)
    for s, t in enumerate(periods):
        k = t - path.origins[0]
        if 0 <= k < len(path.origins):
            newest[:, k, s] = True
    add("(1) empty start", newest & (B != 0), "B[i, 0] != 0")
    add("(3) recursion", B[:, :, 1:] != B[:, :, :-1] + R - P, "B[i,j+1] != B[i,j] + R[i,j] - P[i,j]")
    add("bounds", (PB > B[:, :, :-1]) | (PR > R), "processed more than available")
    bt = B[:, :, :-1].sum(axis=1)
    rt = R.sum(axis=1)
    pt = P.sum(axis=1)
    add("(4) aggregate", pt != np.minimum(bt + rt, path.capacity), "P_t != min(B_t + R_t, C_t)", per_origin=False)

    last = periods[-1]
    for k, i in enumerate(path.origins):
        if i < path.first_period or i + path.config.J > last:
            continue
        done = B[:, k, -1] == 0
        bad = done & (R[:, k, :].sum(axis=1) != P[:, k, :].sum(axis=1))
        for r in np.flatnonzero(bad)[:max_per_axiom]:
            out.append(Violation("(2) conservation", int(r), int(i), None, "sum R != sum P"))

    bnext = B.sum(axis=1)[:, 1:]
    add("F/G", ~np.isclose(bt * path.G + path.F, bnext, rtol=1e-12, atol=1e-6),
        "B_{t+1} != B_t G_t + F_t", per_origin=False)
    for r in range(path.n):
        lp = lindley_path(int(bt[r, 0]), rt[r], path.capacity).backlog
        if not np.array_equal(lp, B[r].sum(axis=0)):
            out.append(Violation("Lindley", r, None, None, "aggregate backlog differs from Lindley recursion"))
    return out


@dataclass
class FocalCells:
    """Development of one occurrence period in a stationary system.

    Arrays are ``[replicate, delay]`` for delays ``0 .. D``.
    """

    backlog: np.ndarray
    processed: np.ndarray
    reports: np.ndarray


def simulate_focal_origin(
    config: ModelConfig, eta: float, delays: int, n: int, rng: RngLike = None, burn: int = 1200
) -> FocalCells:
    """Direct labeled simulation of one origin against everyone else.

    The system is burnt in from empty, then a fresh occurrence period is
    tracked for ``delays + 1`` periods.  All other origins are pooled into a
    single class (their reports in each period are NegBin with the remaining
    shape), which is exact because allocation is exchangeable across claims.
    """
    from .estimation import burn_in_sampler

    gen = as_generator(rng)
    c = config.capacity(eta)
    other = burn_in_sampler(config, eta, burn=burn, rng=gen, size=n).astype(np.int64)
    focal = np.zeros(n, dtype=np.int64)
    out_b = np.zeros((n, delays + 1), dtype=np.int64)
    out_p = np.zeros((n, delays + 1), dtype=np.int64)
    out_r = np.zeros((n, delays + 1), dtype=np.int64)
    for j in range(delays + 1):
        if j <= config.J:
            r_f = sample_negbin(config.alphas[j], config.beta, gen, n)
            rest_shape = config.alpha - config.alphas[j]
            r_o = sample_negbin(rest_shape, config.beta, gen, n) if rest_shape > 0 else np.zeros(n, np.int64)
        else:
            r_f = np.zeros(n, dtype=np.int64)
            r_o = sample_negbin(config.alpha, config.beta, gen, n)
        b = np.stack([focal, other], axis=1)
        r = np.stack([r_f, r_o], axis=1)
        pb, pr = _allocate(b, r, c, gen)
        out_b[:, j] = focal
        out_r[:, j] = r_f
        out_p[:, j] = pb[:, 0] + pr[:, 0]
        nxt = b + r - pb - pr
        focal, other = nxt[:, 0], nxt[:, 1]
    return FocalCells(backlog=out_b, processed=out_p, reports=out_r)
