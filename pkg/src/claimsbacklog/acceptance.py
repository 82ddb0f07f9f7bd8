"""Acceptance checks, one function per criterion.

Each check returns a :class:`CriterionResult` with the measured numbers, the
tolerance used and the wall time.  ``quick=True`` cuts replicate counts and
widens statistical tolerances (the result is flagged); it is meant for smoke
runs, not for sign-off.
"""

from __future__ import annotations

import contextlib
import json
import time
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional
from unittest import mock

import numpy as np

from . import costing, estimation, expectations, processing, queueing, stochastics
from .approximator.datasets import build_dataset_g
from .approximator.network import gradient_check
from .approximator.training import TrainConfig, new_net, train
from .errors import TruncationWarning
from .stochastics import ModelConfig, RngState


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    seconds: float
    budget: float
    details: Dict = field(default_factory=dict)
    widened: bool = False

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        flag = " [widened tolerance]" if self.widened else ""
        return f"criterion {self.number} {mark}: {self.name} ({self.seconds:.1f}s / {self.budget:.0f}s){flag}"


def _bad_allocate(real):
    """Allocation that leaves one newly reported claim of the oldest reporting
    origin unprocessed whenever it would have been served."""

    def alloc(backlog, reports, capacity, gen):
        pb, pr = real(backlog, reports, capacity, gen)
        pr = pr.copy()
        pr[:, 0] = np.maximum(pr[:, 0] - 1, 0)
        return pb, pr

    return alloc


def axioms(quick: bool = False, corrupt: bool = False, seed: int = 1) -> CriterionResult:
    """1000 labeled paths across the capacity grid; zero violations expected."""
    t0 = time.perf_counter()
    cfg = ModelConfig.paper()
    etas = np.round(np.arange(1.05, 1.5001, 0.05), 2)
    per_eta = 10 if quick else 100
    counts = {}
    patch = mock.patch.object(processing, "_allocate", _bad_allocate(processing._allocate)) if corrupt \
        else contextlib.nullcontext()
    with patch:
        for k, eta in enumerate(etas):
            start = "zero" if k % 2 == 0 else "stationary"
            path = processing.simulate_paths(cfg, float(eta), 60, start=start, n=per_eta,
                                             rng=RngState(seed, k), burn=300)
            for v in processing.axioms_check(path):
                counts[v.axiom] = counts.get(v.axiom, 0) + 1
    dt = time.perf_counter() - t0
    passed = not counts and (dt < 60 or quick)
    return CriterionResult(1, "processing axioms on labeled paths", passed, dt, 60,
                           {"paths": per_eta * len(etas), "violations": counts}, quick)


def queue_oracles(quick: bool = False, seed: int = 2) -> CriterionResult:
    t0 = time.perf_counter()
    cfg = ModelConfig.paper()
    gen_totals = lambda g, n: stochastics.sample_totals(cfg, g, n)
    chains, periods = (200, 500) if quick else (1000, 1000)
    tol = 0.05 if quick else 0.02
    # exponential capacity with mean 2000 (rho = 0.5)
    cmean = 2000.0
    er, er2 = cfg.mu, cfg.variance + cfg.mu**2
    pk = queueing.pollaczek_khintchine(er, er2, cmean)
    exp_run = queueing.long_run_mean(gen_totals, lambda g, n: g.exponential(cmean, n), chains, periods, 300,
                                     RngState(seed, 0))
    # constant capacity at eta = 1.2
    c = cfg.capacity(1.2)
    kd = queueing.kingman_daley_bound(cfg.mu, cfg.variance, 1.2)
    const_run = queueing.long_run_mean(gen_totals, lambda g, n: np.full(n, float(c)), chains // 2, periods * 2,
                                       2000, RngState(seed, 1))
    # Poisson reports, constant capacity 1.2 mu
    pois_run = queueing.long_run_mean(lambda g, n: g.poisson(cfg.mu, n), lambda g, n: np.full(n, float(c)),
                                      chains // 4, periods, 200, RngState(seed, 2))
    rel = abs(exp_run.mean - pk) / pk
    checks = {
        "pk_rel_error": rel <= tol,
        "kingman_bound": const_run.mean <= kd + 3 * const_run.se,
        "poisson_small": pois_run.mean < 5,
    }
    dt = time.perf_counter() - t0
    details = {
        "pk": pk, "exp_mean": exp_run.mean, "exp_se": exp_run.se, "pk_rel_error": rel, "tol": tol,
        "const_mean": const_run.mean, "const_se": const_run.se, "kingman_daley": kd,
        "poisson_mean": pois_run.mean, "checks": checks,
    }
    return CriterionResult(2, "queueing oracles (PK, Kingman/Daley, Poisson)", all(checks.values()) and (dt < 120 or quick),
                           dt, 120, details, quick)


def split_linearity(quick: bool = False, seed: int = 3) -> CriterionResult:
    t0 = time.perf_counter()
    cfg = ModelConfig.paper()
    n = 100_000 if quick else 1_000_000
    tol = 0.05 if quick else 0.02
    res = stochastics.conditional_split_slope(cfg, n, RngState(seed))
    target = cfg.mus / cfg.mu
    rel = np.abs(res.slopes - target) / target
    dt = time.perf_counter() - t0
    return CriterionResult(3, "conditional split slopes", bool(np.all(rel <= tol)) and (dt < 60 or quick), dt, 60,
                           {"slopes": res.slopes.tolist(), "se": res.se.tolist(), "target": target.tolist(),
                            "max_rel_error": float(rel.max()), "tol": tol}, quick)


def unconditional_formulas(quick: bool = False, seed: int = 4) -> CriterionResult:
    """Assembled E[B_ij], E[P_ij] versus a direct labeled simulation (small instance)."""
    t0 = time.perf_counter()
    cfg = ModelConfig.small()
    eta = 1.3
    # 4 x 10^5 replicates: at 10^5 the smallest cells above the floor carry a
    # relative standard error near 2%, so a 5% band would be only ~2.5 sigma wide
    n = 20_000 if quick else 400_000
    tol = 0.10 if quick else 0.05
    g = estimation.estimate_g(cfg, eta, T=40, n=n, rng=RngState(seed, 0), burn=400)
    eb = expectations.backlog_profile(g, cfg)
    ep = expectations.processed_profile(g, cfg)
    D = 15
    direct = processing.simulate_focal_origin(cfg, eta, D, n, RngState(seed, 1), burn=400)
    db = direct.backlog.mean(axis=0)
    dp = direct.processed.mean(axis=0)
    floor = 0.02 * cfg.mu
    cells = []
    for name, a, d in (("B", eb, db), ("P", ep, dp)):
        for j in range(D + 1):
            if max(a[j], d[j]) > floor:
                cells.append((name, j, float(a[j]), float(d[j]), abs(a[j] - d[j]) / d[j]))
    worst = max(c[4] for c in cells)
    total_p = float(ep.sum())
    cons = abs(total_p - cfg.mu) / cfg.mu
    dt = time.perf_counter() - t0
    passed = worst <= tol and cons <= 0.02 and (dt < 120 or quick)
    return CriterionResult(4, "unconditional per-delay formulas vs direct simulation", passed, dt, 120,
                           {"cells": cells, "worst_rel_error": worst, "sum_P": total_p,
                            "sum_P_rel_error": cons, "tol": tol}, quick)


FROZEN_STATE = processing.PeriodState(t=0, backlog={-3: 4, -2: 6, -1: 9}, reports={-1: 3, 0: 9}, capacity=13)


def conditional_formulas(quick: bool = False, seed: int = 5) -> CriterionResult:
    """Conditional E[B_{i, tau-i+k+1}] from h versus resimulating the frozen state."""
    t0 = time.perf_counter()
    cfg = ModelConfig.small()
    eta = 1.3
    n = 20_000 if quick else 400_000  # see unconditional_formulas
    tol = 0.10 if quick else 0.05
    hist = expectations.HistorySummary.from_state(FROZEN_STATE)
    provider = expectations.MonteCarloHProvider(cfg, n=n, seed=seed)
    K = 8
    sim = processing.continue_from_state(cfg, FROZEN_STATE, K + 1, n, RngState(seed, 1))
    lo = int(sim.origins[0])
    floor = 0.02 * cfg.mu
    cells = []
    for i in range(-3, K + 1):
        for k in range(K + 1):
            if hist.tau - i + k < 0:
                continue
            a = expectations.cond_backlog_expectation(hist, provider, cfg, eta, i, k)
            d = float(sim.backlog[:, i - lo, k + 1].mean())
            if max(a, d) > floor:
                cells.append((i, k, a, d, abs(a - d) / d))
    worst = max(c[4] for c in cells)
    dt = time.perf_counter() - t0
    return CriterionResult(5, "conditional formulas vs resimulation", worst <= tol and (dt < 180 or quick), dt, 180,
                           {"cells": cells, "worst_rel_error": worst, "tol": tol}, quick)


def backlog_figures(quick: bool = False, seed: int = 6) -> CriterionResult:
    t0 = time.perf_counter()
    cfg = ModelConfig.paper()
    n = 2000 if quick else 10_000
    widen = 1.5 if quick else 1.0
    d12 = estimation.backlog_diagnostics(cfg, 1.2, 120, n, RngState(seed, 0))
    d11 = estimation.backlog_diagnostics(cfg, 1.1, 120, n, RngState(seed, 1))
    p12 = d12.plateau(80)
    p11 = d11.plateau(100)
    acf = estimation.autocorrelation(cfg, 1.2, 40, n, RngState(seed, 2))
    bound = []
    for k, eta in enumerate((1.05, 1.2, 1.5)):
        c = cfg.capacity(eta)
        for b in (c, c + 500, c + 3000):
            g = estimation.estimate_g(cfg, eta, T=2, n=n, rng=RngState(seed, 10 + k), condition=b)
            bound.append((eta, b, float(g.values[0]), float(g.se[0])))
    checks = {
        "cond_mean_1.2": abs(p12["cond_mean"] - 1600) <= 160 * widen,
        "mean_1.2": abs(p12["rel_mean"] * cfg.mu - 1000) <= 100 * widen,
        "mean_1.1": abs(p11["rel_mean"] - 2.0) <= 0.3 * widen,
        "autocorr_lag40": abs(acf[40]) < 0.1 * widen,
        "g0_at_least_mu": all(v >= cfg.mu - 3 * s for _, _, v, s in bound),
    }
    dt = time.perf_counter() - t0
    return CriterionResult(6, "backlog diagnostics and g_0 bound", all(checks.values()) and (dt < 300 or quick), dt, 300,
                           {"eta_1.2": p12, "eta_1.1": p11, "autocorr_40": float(acf[40]), "g0": bound,
                            "checks": checks}, quick)


def approximator(quick: bool = False, seed: int = 7, train_cfg: Optional[TrainConfig] = None,
                 samples: int = 3000, paths: int = 256) -> CriterionResult:
    """Train the (b, eta) net and compare with Monte Carlo on a 10 x 3 grid."""
    t0 = time.perf_counter()
    cfg = ModelConfig.paper()
    if quick:
        samples, paths = 400, 32
    data = build_dataset_g(cfg, samples, rng=RngState(seed, 0), start="mixed", paths_per_sample=paths,
                           b_range=(0.0, 6000.0))
    net = new_net(data, seed=seed)
    tc = train_cfg or (TrainConfig(epochs=3, warmup_epochs=3) if quick else TrainConfig(seed=seed))
    res = train(net, data, tc)
    x = net.normalize(data.inputs[:16])
    grad_err = gradient_check(net, x, data.targets[:16] / net.scale, eps=1e-5, n_params=60, seed=seed)
    etas = np.round(np.arange(1.05, 1.5001, 0.05), 2)
    floor = 0.05 * cfg.mu
    worst = 0.0
    cells = []
    for k, b in enumerate((0, 1000, 5000)):
        # 10^5 reference paths: at 10^4 the small b = 0 entries carry a 5%
        # standard error, half the tolerance band
        tables = estimation.estimate_g_grid(cfg, etas, T=net.T, n=2000 if quick else 100_000,
                                            rng=RngState(seed, 100 + k), condition=b)
        pred = net.predict(np.column_stack([np.full(len(etas), b), etas]))
        for g, p in zip(tables, pred):
            err = np.where(g.values > floor, np.abs(p - g.values) / np.maximum(g.values, 1e-12) / 0.10,
                           np.abs(p - g.values) / floor)
            j = int(np.argmax(err))
            cells.append((b, g.eta, j, float(g.values[j]), float(p[j]), float(err[j])))
            worst = max(worst, float(err[j]))
    checks = {
        "grid_agreement": worst <= (2.0 if quick else 1.0),
        "gradient_check": grad_err < 1e-4,
        "heldout_improvement": res.improvement >= 0.5,
    }
    dt = time.perf_counter() - t0
    return CriterionResult(7, "sequence-net approximation", all(checks.values()) and (dt < 900 or quick), dt, 900,
                           {"worst_scaled_error": worst, "grad_rel_error": grad_err,
                            "improvement": res.improvement, "best_epoch": res.best_epoch,
                            "cells": cells, "checks": checks}, quick)


def unconditional_optima(quick: bool = False, seed: int = 8) -> CriterionResult:
    t0 = time.perf_counter()
    cfg = ModelConfig.paper()
    params = costing.CostParams()
    n = 4000 if quick else 20_000
    widen = 2.0 if quick else 1.0
    src = costing.MonteCarloGSource(cfg, T=240, n=n, seed=seed)
    src.prefetch(1.05 + 0.005 * np.arange(91))
    lin = costing.optimize_eta(costing.unconditional_cost(src, params, cfg, "linear"))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", TruncationWarning)
        inf = costing.optimize_eta(costing.unconditional_cost(src, params, cfg, "inflating"))
    truncated = sum(issubclass(w.category, TruncationWarning) for w in caught)
    c_ht, cost_ht = costing.heavy_traffic_optimum(params, cfg.mu, cfg.variance)
    checks = {
        "linear_eta": abs(lin.eta_star - 1.203) <= 0.03 * widen,
        "linear_cost": abs(lin.cost - 1175) / 1175 <= 0.02 * widen,
        "inflating_eta": abs(inf.eta_star - 1.190) <= 0.03 * widen,
        "heavy_traffic_eta": abs(c_ht / cfg.mu - 1.194) < 5e-4,
    }
    dt = time.perf_counter() - t0
    return CriterionResult(8, "unconditional optimal capacity ratios", all(checks.values()) and (dt < 300 or quick),
                           dt, 300, {"linear": (lin.eta_star, lin.cost), "inflating": (inf.eta_star, inf.cost),
                                     "heavy_traffic": (c_ht / cfg.mu, cost_ht), "truncation_warnings": truncated,
                                     "checks": checks}, quick)


TABLE_1 = ((36, 1.068, 1152.0), (60, 1.149, 1164.0), (120, 1.176, 1172.0))


def conditional_optima(quick: bool = False, seed: int = 9, provider=None) -> CriterionResult:
    t0 = time.perf_counter()
    cfg = ModelConfig.paper()
    params = costing.CostParams()
    widen = 2.0 if quick else 1.0
    provider = provider or expectations.MonteCarloHProvider(cfg, n=2000 if quick else 10_000, seed=seed)
    hist = expectations.HistorySummary.zero_start(cfg, 1310)
    rows = []
    checks = {}
    for T, eta_ref, cost_ref in TABLE_1:
        r = costing.optimize_eta(lambda e: costing.cost_conditional_linear(e, T, hist, provider, params, cfg))
        rows.append((T, r.eta_star, r.cost))
        checks[f"T={T}_eta"] = abs(r.eta_star - eta_ref) <= 0.05 * widen
        checks[f"T={T}_cost"] = abs(r.cost - cost_ref) / cost_ref <= 0.02 * widen
    etas = [r[1] for r in rows]
    checks["monotone"] = all(a < b for a, b in zip(etas, etas[1:])) and etas[-1] < 1.203 + 0.03
    dt = time.perf_counter() - t0
    return CriterionResult(9, "finite-horizon optima (zero start, R_tau = 1310)",
                           all(checks.values()) and (dt < 600 or quick), dt, 600,
                           {"rows": rows, "reference": TABLE_1, "checks": checks}, quick)


CRITERIA: Dict[int, Callable[..., CriterionResult]] = {
    1: axioms,
    2: queue_oracles,
    3: split_linearity,
    4: unconditional_formulas,
    5: conditional_formulas,
    6: backlog_figures,
    7: approximator,
    8: unconditional_optima,
    9: conditional_optima,
}


def run_all(quick: bool = False, only=None, corrupt: bool = False, log=print) -> List[CriterionResult]:
    out = []
    for k, fn in CRITERIA.items():
        if only and k not in only:
            continue
        res = fn(quick=quick, corrupt=corrupt) if k == 1 else fn(quick=quick)
        if log:
            log(res.line())
        out.append(res)
    return out


def report_json(results: List[CriterionResult]) -> str:
    def clean(o):
        if isinstance(o, (np.floating, np.integer)):
            return o.item()
        if isinstance(o, np.bool_):
            return bool(o)
        if isinstance(o, np.ndarray):
            return o.tolist()
        return str(o)

    payload = {
        "passed": all(r.passed for r in results),
        "widened_tolerance": any(r.widened for r in results),
        "criteria": [asdict(r) for r in results],
    }
    return json.dumps(payload, indent=2, default=clean)
