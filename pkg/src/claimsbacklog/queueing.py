"""Aggregate backlog recursion and single-server queue formulas.

The unlabeled backlog follows the Lindley recursion
``B[t+1] = max(B[t] + R[t] - C[t], 0)``.  This module holds the recursion,
its max-of-partial-sums representation, and the stationary-mean results
(series representation, heavy-traffic approximation, Kingman/Daley bound,
Pollaczek-Khintchine) used as validation targets.  Capacities may be real
valued here.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError, InputError, InstabilityError
from .stochastics import RngLike, as_generator


def lindley_step(b, r, c):
    return np.maximum(b + r - c, 0)


@dataclass(frozen=True)
class LindleySeries:
    b0: float
    backlog: np.ndarray  # B_0 .. B_T, length T+1
    increments: np.ndarray  # R_t - C_t, length T


def lindley_path(b0, reports, capacities) -> LindleySeries:
    reports = np.asarray(reports)
    capacities = np.asarray(capacities)
    if capacities.ndim == 0:
        capacities = np.full(reports.shape, capacities)
    if reports.shape != capacities.shape:
        raise InputError(f"reports {reports.shape} and capacities {capacities.shape} differ in length")
    out = np.empty(len(reports) + 1, dtype=np.result_type(reports, capacities, b0))
    out[0] = b0
    for t in range(len(reports)):
        out[t + 1] = max(out[t] + reports[t] - capacities[t], 0)
    return LindleySeries(b0=b0, backlog=out, increments=reports - capacities)


def max_representation(b0, increments) -> np.ndarray:
    """Backlog path from the max-of-partial-sums form, evaluated by brute force.

    ``B[t+1] = max(B0 + x_0 + .. + x_t, x_1 + .. + x_t, .., x_t, 0)``.
    """
    x = list(np.asarray(increments).tolist())
    out = [b0]
    for t in range(len(x)):
        cands = [b0 + sum(x[: t + 1]), 0]
        for s in range(1, t + 1):
            cands.append(sum(x[s : t + 1]))
        out.append(max(cands))
    return np.asarray(out)


def traffic_intensity(er: float, ec: float) -> float:
    if not ec > 0:
        raise DomainError("expected capacity must be positive")
    return er / ec


def heavy_traffic_approx(er: float, var_r: float, ec: float, var_c: float) -> float:
    """Heavy-traffic approximation ``E[C] rho^2 / (2(1-rho)) (cv_R^2 + cv_C^2)``."""
    rho = traffic_intensity(er, ec)
    if rho >= 1:
        raise DomainError(f"traffic intensity {rho:.4f} >= 1: no stationary backlog")
    if er == 0:
        return 0.0
    return ec * rho**2 / (2.0 * (1.0 - rho)) * (var_r / er**2 + var_c / ec**2)


def kingman_daley_bound(er: float, var_r: float, eta: float) -> float:
    """Upper bound ``Var[R] / (2 E[R] (eta - 1))`` for constant capacity ``eta E[R]``."""
    if not eta > 1:
        raise DomainError(f"capacity ratio must exceed 1, got {eta}")
    return var_r / (2.0 * er) / (eta - 1.0)


def pollaczek_khintchine(er: float, er2: float, c: float) -> float:
    """Exact stationary mean for exponential capacity with mean ``c``."""
    if er >= c:
        raise DomainError(f"E[R]={er} must be below the mean capacity {c}")
    if er == 0:
        return 0.0
    return er / (c - er) * er2 / (2.0 * er)


@dataclass(frozen=True)
class SeriesEstimate:
    value: float
    se: float
    last_term: float
    terms: np.ndarray


def stationary_mean_series(
    increment_sampler: Callable[[np.random.Generator, tuple], np.ndarray],
    K: int,
    n: int,
    rng: RngLike = None,
) -> SeriesEstimate:
    """Truncated series ``E[B] = sum_{k<=K} E[max(S_k, 0)] / k`` by Monte Carlo.

    ``increment_sampler(gen, shape)`` returns i.i.d. draws of ``R - C``.  Each
    of the ``n`` simulated walks contributes one unbiased draw of the
    truncated series, which gives the standard error.  ``last_term`` is the
    size of the k=K summand, a rough gauge of the truncation error.
    """
    if K < 1:
        raise InputError("truncation K must be at least 1")
    gen = as_generator(rng)
    x = np.asarray(increment_sampler(gen, (n, K)), dtype=float)
    m = x.mean()
    if m >= 0 and np.any(x != 0):
        raise InstabilityError(f"mean increment {m:.4g} >= 0: traffic intensity is not below 1")
    s = np.cumsum(x, axis=1)
    weights = 1.0 / np.arange(1, K + 1)
    per_walk = np.maximum(s, 0.0) @ weights
    terms = np.maximum(s, 0.0).mean(axis=0) * weights
    se = float(per_walk.std(ddof=1) / np.sqrt(n)) if n > 1 else float("nan")
    return SeriesEstimate(value=float(per_walk.mean()), se=se, last_term=float(terms[-1]), terms=terms)


@dataclass(frozen=True)
class LongRunMean:
    mean: float
    se: float
    periods: int


def long_run_mean(
    report_sampler: Callable[[np.random.Generator, int], np.ndarray],
    capacity_sampler: Callable[[np.random.Generator, int], np.ndarray],
    chains: int,
    periods: int,
    burn: int,
    rng: RngLike = None,
) -> LongRunMean:
    """Time-averaged backlog over ``chains`` independent Lindley chains.

    Chains start empty and discard ``burn`` periods; the standard error uses
    the spread of the per-chain averages.
    """
    gen = as_generator(rng)
    b = np.zeros(chains)
    acc = np.zeros(chains)
    for t in range(burn + periods):
        b = np.maximum(b + report_sampler(gen, chains) - capacity_sampler(gen, chains), 0.0)
        if t >= burn:
            acc += b
    per_chain = acc / periods
    return LongRunMean(
        mean=float(per_chain.mean()),
        se=float(per_chain.std(ddof=1) / np.sqrt(chains)),
        periods=chains * periods,
    )
