"""Capacity cost curves and their minimisation over the capacity ratio.

Linear model: ``kappa_g mu + kappa_b E[B] + kappa_c (c - mu)`` per period.
Inflating model: each claim processed at delay ``j`` costs
``kappa_g lambda_b^j``.  The conditional model averages the linear cost over
a finite planning horizon given an observed history.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import InputError, OptimizationError, ParameterError, TruncationWarning
from .estimation import GTable, estimate_g_grid
from .expectations import HistorySummary, HProvider
from .stochastics import ModelConfig, RngState

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class CostParams:
    kappa_g: float = 1.0
    kappa_b: float = 0.075
    kappa_c: float = 0.5
    lambda_b: float = 1.05

    def __post_init__(self):
        for name in ("kappa_g", "kappa_b", "kappa_c", "lambda_b"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ParameterError(f"{name} must be finite and nonnegative, got {v}")


def cost_linear(eta: float, EB: float, params: CostParams, config: ModelConfig) -> float:
    if not eta > 1:
        raise ParameterError(f"capacity ratio must exceed 1, got {eta}")
    if EB < 0:
        raise InputError("expected backlog must be nonnegative")
    c = config.capacity(eta)
    return params.kappa_g * config.mu + params.kappa_b * EB + params.kappa_c * (c - config.mu)


def cost_inflating(
    eta: float, processed: Sequence[float], backlog: Sequence[float], params: CostParams, config: ModelConfig,
    eps: float = 1e-3,
) -> float:
    """Delay-inflated cost from per-delay ``E[P_{i,j}]`` and ``E[B_{i,j}]``.

    The delay sum stops at the first ``j`` after the last reporting delay
    whose outgoing expected backlog ``E[B_{i,j+1}]`` is below ``eps * mu``;
    if none qualifies the whole profile is used and a
    :class:`TruncationWarning` is raised.
    """
    if params.lambda_b < 1:
        raise ParameterError("lambda_b must be at least 1")
    p = np.asarray(processed, dtype=float)
    b = np.asarray(backlog, dtype=float)
    stop = len(p)
    for j in range(config.J, len(p)):
        if j + 1 < len(b) and b[j + 1] < eps * config.mu:
            stop = j + 1
            break
    else:
        warnings.warn(f"residual backlog at delay {len(p) - 1} is {b[-1]:.4g} >= {eps} mu", TruncationWarning)
    weights = params.lambda_b ** np.arange(stop)
    c = config.capacity(eta)
    return float(params.kappa_g * (weights * p[:stop]).sum() + params.kappa_c * (c - config.mu))


def heavy_traffic_optimum(params: CostParams, ER: float, VarR: float) -> Tuple[float, float]:
    """Minimiser and minimum of ``kappa_g ER + kappa_b VarR/(2(c-ER)) + kappa_c (c-ER)``."""
    if not params.kappa_c > 0:
        raise ParameterError("kappa_c must be positive")
    c = ER + math.sqrt(VarR * params.kappa_b / (2.0 * params.kappa_c))
    return c, params.kappa_g * ER + math.sqrt(2.0 * params.kappa_b * params.kappa_c * VarR)


def runoff_matrix(history: HistorySummary, config: ModelConfig, T: int) -> np.ndarray:
    """Expected reports per origin (rows ``tau-J .. tau+T``) and period (columns ``tau .. tau+T``).

    Column 0 holds the observed ``R_{i, tau-i}``; later columns the expected
    future reports ``mu_{tau+col-i}``.
    """
    if T < 1:
        raise InputError("planning horizon must be at least 1")
    tau, J = history.tau, config.J
    M = np.zeros((T + J + 1, T + 1))
    for r in range(T + J + 1):
        i = tau - J + r
        M[r, 0] = history.reports.get(i, 0)
        for col in range(1, T + 1):
            d = tau + col - i
            if 0 <= d <= J:
                M[r, col] = config.mus[d]
    return M


def cost_conditional_linear(
    eta: float, T: int, history: HistorySummary, provider: HProvider, params: CostParams, config: ModelConfig
) -> float:
    """Average per-period linear cost over ``(tau, tau+T]`` given the history."""
    if T < 1:
        raise InputError("planning horizon must be at least 1")
    c = config.capacity(eta)
    F, G, b_next = history.derived(c)
    base = params.kappa_g * config.mu + params.kappa_c * (c - config.mu)
    if params.kappa_b == 0:
        return base
    s0, sm = provider.horizon_sums(b_next, eta, T)
    backlog = history.B * G * s0 + F * s0 + sm
    return base + params.kappa_b * backlog / T


@dataclass
class OptimizationResult:
    eta_star: float
    cost: float
    curve: List[Tuple[float, float]]
    bracket: Tuple[float, float]
    iterations: int
    method: str = "grid+golden"

    def curve_to_csv(self, path, se: Optional[Sequence[float]] = None, header: str = "") -> None:
        with Path(path).open("w") as fh:
            if header:
                fh.write(header)
            fh.write("eta,cost,se\n")
            for k, (e, v) in enumerate(self.curve):
                s = "" if se is None else f"{se[k]:.6g}"
                fh.write(f"{e:.6f},{v:.10g},{s}\n")

    def to_json(self, path, **extra) -> None:
        d = {"eta_star": self.eta_star, "cost": self.cost, "method": self.method,
             "bracket": list(self.bracket), "iterations": self.iterations, **extra}
        Path(path).write_text(json.dumps(d, indent=2, sort_keys=True))


def golden_section(f: Callable[[float], float], a: float, b: float, tol: float = 1e-4, max_iter: int = 200):
    """Golden-section search for a minimum of ``f`` on ``[a, b]``.

    Returns ``(x, f(x), iterations, evaluations)`` where ``evaluations`` is a
    list of every ``(x, f(x))`` computed.
    """
    evals = []

    def fx(x):
        v = f(x)
        evals.append((x, v))
        return v

    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = fx(c), fx(d)
    it = 0
    while b - a > tol and it < max_iter:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = fx(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = fx(d)
        it += 1
    x, v = min(evals, key=lambda e: (e[1], e[0]))
    return x, v, it, evals


def optimize_eta(
    cost: Callable[[float], float],
    bracket: Tuple[float, float] = (1.05, 1.50),
    step: float = 0.005,
    tol: float = 1e-4,
) -> OptimizationResult:
    """Grid scan followed by golden-section refinement between the grid
    neighbours of the best grid point.

    Ties go to the smallest ``eta``; the returned optimum is the best of all
    evaluated points.
    """
    lo, hi = bracket
    if not lo < hi:
        raise InputError("bracket must satisfy lo < hi")

    def safe(e):
        v = float(cost(e))
        if not np.isfinite(v):
            raise OptimizationError(f"cost is not finite at eta={e}", eta=e)
        return v

    n = int(round((hi - lo) / step))
    grid = lo + step * np.arange(n + 1)
    values = [safe(float(e)) for e in grid]
    k = int(np.argmin(values))
    a = grid[max(k - 1, 0)]
    b = grid[min(k + 1, n)]
    _, _, iters, evals = golden_section(safe, float(a), float(b), tol)
    pts = [(float(e), v) for e, v in zip(grid, values)] + evals
    best = min(pts, key=lambda e: (e[1], e[0]))
    curve = sorted(set(pts))
    return OptimizationResult(eta_star=best[0], cost=best[1], curve=curve, bracket=(float(a), float(b)),
                              iterations=iters)


class MonteCarloGSource:
    """Stationary ``g`` tables by Monte Carlo, cached per capacity ratio.

    All ratios replay the same random stream (common random numbers), so
    cost curves built from it are smooth in ``eta``.
    """

    def __init__(self, config: ModelConfig, T: int = 240, n: int = 20_000, seed: int = 0, burn: int = 1200):
        self.config, self.T, self.n, self.seed, self.burn = config, T, n, seed, burn
        self._cache: dict = {}

    def prefetch(self, etas) -> None:
        todo = [float(e) for e in etas if round(float(e), 12) not in self._cache]
        if todo:
            for g in estimate_g_grid(self.config, todo, self.T, self.n, RngState(self.seed), burn=self.burn):
                self._cache[round(g.eta, 12)] = g

    def table(self, eta: float) -> GTable:
        self.prefetch([eta])
        return self._cache[round(float(eta), 12)]


class NetGSource:
    """Stationary ``g`` from a single-input (``eta``) sequence net.

    The companion sequence follows from ``g_j - g_{j+1}``, with the value
    past the last step taken as 0.
    """

    def __init__(self, net):
        self.net = net

    def prefetch(self, etas) -> None:
        pass

    def table(self, eta: float) -> GTable:
        v = self.net.predict(np.array([[eta]]))[0]
        comp = v - np.append(v[1:], 0.0)
        nan = np.full_like(v, np.nan)
        return GTable(eta=float(eta), condition="stationary", values=v, se=nan, companion=comp,
                      companion_se=nan, n=0)


def unconditional_cost(source, params: CostParams, config: ModelConfig, model: str = "linear"):
    """Cost function of ``eta`` for the linear or delay-inflating model."""
    from .expectations import backlog_profile, processed_profile

    if model not in ("linear", "inflating"):
        raise InputError(f"unknown cost model {model!r}")

    def cost(eta):
        g = source.table(eta)
        if model == "linear":
            return cost_linear(eta, max(g.total, 0.0), params, config)
        return cost_inflating(eta, processed_profile(g, config), backlog_profile(g, config), params, config)

    return cost
