"""Monte Carlo estimates of the expectation sequences behind backlog costs.

With ``B_1 = b`` (fixed, or drawn from the stationary law by burn-in):

* ``g_j(b; eta) = E[F_1 G_2 ... G_{j+1} | B_1 = b]``
* ``h_j(b, 0; eta) = E[G_1 ... G_j | B_1 = b]``
* ``h_j(b, m; eta) = E[F_m G_{m+1} ... G_{m+j} | B_1 = b]`` for ``m >= 1``

All estimators only need the aggregate backlog, so they run the unlabeled
Lindley recursion vectorised over replicates.  Passing the same
:class:`RngState` for different capacity ratios reuses the same reporting
draws (common random numbers), which keeps curves in ``eta`` smooth.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import stats

from .errors import EstimationError, InputError, InstabilityError
from .processing import compute_FG
from .stochastics import ModelConfig, RngLike, RngState, as_generator, sample_totals

Condition = Union[str, int]


def _replayable(rng: RngLike) -> Callable[[], np.random.Generator]:
    """Factory returning a generator in the same start state on every call."""
    if isinstance(rng, np.random.Generator):
        start = rng.bit_generator.state

        def make():
            rng.bit_generator.state = start
            return rng

        return make
    if rng is None:
        rng = RngState(int(np.random.SeedSequence().generate_state(1, np.uint64)[0]))
    state = rng if isinstance(rng, RngState) else RngState(int(rng))
    return state.generator


def _check_eta(eta):
    if not np.all(np.asarray(eta) > 1):
        raise InstabilityError(f"capacity ratio must exceed 1 for a stationary backlog, got {eta}")


def burn_in_sampler(config: ModelConfig, eta, burn: int = 1200, rng: RngLike = None, size=None):
    """Backlog after ``burn`` Lindley steps from an empty system.

    ``eta`` may be an array broadcastable against ``size`` (one capacity
    ratio per draw).
    """
    _check_eta(eta)
    if burn < 1:
        raise InputError("burn-in must be at least one period")
    gen = as_generator(rng)
    n = 1 if size is None else int(size)
    c = np.rint(np.asarray(eta, dtype=float) * config.mu)
    b = np.zeros(np.broadcast_shapes(np.shape(c), (n,)))
    for _ in range(burn):
        b = np.maximum(b + sample_totals(config, gen, n) - c, 0.0)
    b = b.astype(np.int64)
    return int(b[0]) if size is None else b


def ks_windows(config: ModelConfig, eta: float, burn: int = 1200, n: int = 2000, rng: RngLike = None) -> float:
    """KS p-value between backlogs after ``burn`` and after ``2 * burn`` periods.

    Two independent sets of chains are used so the samples are independent.
    """
    gen = as_generator(rng)
    a = burn_in_sampler(config, eta, burn, gen, n)
    b = burn_in_sampler(config, eta, 2 * burn, gen, n)
    return float(stats.ks_2samp(a, b).pvalue)


def _write_table(path, columns: dict, header: dict) -> None:
    path = Path(path)
    names = list(columns)
    rows = zip(*(np.asarray(columns[k]) for k in names))
    with path.open("w") as fh:
        fh.write(",".join(names) + "\n")
        for row in rows:
            fh.write(",".join(f"{v:.12g}" if isinstance(v, (float, np.floating)) else str(v) for v in row) + "\n")
    path.with_suffix(".json").write_text(json.dumps(header, indent=2, sort_keys=True))


def _read_table(path):
    path = Path(path)
    data = np.genfromtxt(path, delimiter=",", names=True)
    header = json.loads(path.with_suffix(".json").read_text())
    return data, header


@dataclass
class GTable:
    """``g_j`` for ``j = 0 .. T-1`` at one capacity ratio.

    ``companion[j]`` is ``E[F_1 G_2..G_{j+1} (1 - G_{j+2})]``, the probability
    mass of those claims processed in the next period; ``total`` is the
    replicate mean of ``sum_j F_1 G_2..G_{j+1}`` (equal to ``sum(values)``).
    """

    eta: float
    condition: Condition
    values: np.ndarray
    se: np.ndarray
    companion: np.ndarray
    companion_se: np.ndarray
    n: int
    total_se: float = float("nan")
    seed: Optional[int] = None

    @property
    def T(self) -> int:
        return len(self.values)

    @property
    def total(self) -> float:
        return float(self.values.sum())

    @property
    def tail_mass(self) -> float:
        return float(self.values[-1] / max(self.values[0], 1e-12))

    def header(self) -> dict:
        return {"kind": "g", "eta": self.eta, "condition": self.condition, "n": self.n,
                "seed": self.seed, "total_se": self.total_se}

    def to_csv(self, path) -> None:
        _write_table(path, {"j": np.arange(self.T), "value": self.values, "se": self.se,
                            "companion": self.companion, "companion_se": self.companion_se},
                     self.header())

    @classmethod
    def from_csv(cls, path) -> "GTable":
        d, h = _read_table(path)
        return cls(eta=h["eta"], condition=h["condition"], values=d["value"], se=d["se"],
                   companion=d["companion"], companion_se=d["companion_se"], n=h["n"],
                   total_se=h.get("total_se", float("nan")), seed=h.get("seed"))


@dataclass
class HTable:
    eta: float
    b: int
    m: int
    values: np.ndarray
    se: np.ndarray
    n: int
    seed: Optional[int] = None

    @property
    def T(self) -> int:
        return len(self.values)

    def to_csv(self, path) -> None:
        _write_table(path, {"j": np.arange(self.T), "value": self.values, "se": self.se},
                     {"kind": "h", "eta": self.eta, "b": self.b, "m": self.m, "n": self.n, "seed": self.seed})

    @classmethod
    def from_csv(cls, path) -> "HTable":
        d, h = _read_table(path)
        return cls(eta=h["eta"], b=h["b"], m=h["m"], values=d["value"], se=d["se"], n=h["n"], seed=h.get("seed"))


def _seed_of(rng) -> Optional[int]:
    if isinstance(rng, RngState):
        return rng.seed
    if isinstance(rng, (int, np.integer)):
        return int(rng)
    return None


def estimate_g_grid(
    config: ModelConfig,
    etas: Sequence[float],
    T: int = 120,
    n: int = 10_000,
    rng: RngLike = None,
    condition: Condition = "stationary",
    burn: int = 1200,
    chunk: int = 16,
) -> list:
    """:func:`estimate_g` over several capacity ratios with shared report draws.

    Every ratio sees the identical reporting sequence, so the result for one
    ratio does not depend on which other ratios are evaluated alongside it.
    """
    etas = [float(e) for e in etas]
    _check_eta(etas)
    if T < 1:
        raise InputError("T must be at least 1")
    make = _replayable(rng)
    out = []
    for lo in range(0, len(etas), chunk):
        sub = np.asarray(etas[lo : lo + chunk])
        gen = make()
        c = np.rint(sub * config.mu)[:, None]
        if condition == "stationary":
            b = np.zeros((len(sub), n))
            for _ in range(burn):
                b = np.maximum(b + sample_totals(config, gen, n) - c, 0.0)
        else:
            b = np.full((len(sub), n), float(condition))
        s1 = np.zeros((len(sub), T))
        s2 = np.zeros((len(sub), T))
        c1 = np.zeros((len(sub), T))
        c2 = np.zeros((len(sub), T))
        total = np.zeros((len(sub), n))
        x = None
        for j in range(T + 1):
            r = sample_totals(config, gen, n)
            f, g = compute_FG(b, r, c)
            b = np.maximum(b + r - c, 0.0)
            if x is None:
                x = f.astype(float)
            else:
                comp = x * (1.0 - g)
                c1[:, j - 1] = comp.mean(axis=1)
                c2[:, j - 1] = (comp**2).mean(axis=1)
                if j == T:
                    break
                x = x * g
            s1[:, j] = x.mean(axis=1)
            s2[:, j] = (x**2).mean(axis=1)
            total += x
        scale = np.sqrt(max(n - 1, 1))
        for k, eta in enumerate(sub):
            out.append(GTable(
                eta=float(eta),
                condition=condition if condition == "stationary" else int(condition),
                values=s1[k],
                se=np.sqrt(np.maximum(s2[k] - s1[k] ** 2, 0.0)) / scale,
                companion=c1[k],
                companion_se=np.sqrt(np.maximum(c2[k] - c1[k] ** 2, 0.0)) / scale,
                n=n,
                total_se=float(total[k].std(ddof=1) / np.sqrt(n)) if n > 1 else float("nan"),
                seed=_seed_of(rng),
            ))
    return out


def estimate_g(
    config: ModelConfig,
    eta: float,
    T: int = 120,
    n: int = 10_000,
    rng: RngLike = None,
    condition: Condition = "stationary",
    burn: int = 1200,
) -> GTable:
    """Estimate ``g_j(b; eta)`` (fixed ``b``) or ``g_j(eta)`` (stationary start)."""
    return estimate_g_grid(config, [eta], T, n, rng, condition, burn)[0]


def fg_paths(config: ModelConfig, eta: float, b: int, periods: int, n: int, rng: RngLike = None):
    """``(F, G)`` arrays of shape (n, periods) for periods ``1..periods`` from ``B_1 = b``."""
    _check_eta(eta)
    gen = as_generator(rng)
    c = float(config.capacity(eta))
    bt = np.full(n, float(b))
    F = np.empty((n, periods))
    G = np.empty((n, periods))
    for t in range(periods):
        r = sample_totals(config, gen, n)
        F[:, t], G[:, t] = compute_FG(bt, r, c)
        bt = np.maximum(bt + r - c, 0.0)
    return F, G


def _h_from_paths(F, G, m, T):
    n = F.shape[0]
    if m == 0:
        x = np.concatenate([np.ones((n, 1)), np.cumprod(G[:, : T - 1], axis=1)], axis=1)
    else:
        tail = G[:, m : m + T - 1]
        x = F[:, m - 1 : m] * np.concatenate([np.ones((n, 1)), np.cumprod(tail, axis=1)], axis=1)
    mean = x.mean(axis=0)
    se = x.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.full(T, np.nan)
    return mean, se


def estimate_h(
    config: ModelConfig, b: int, m: int, eta: float, T: int = 120, n: int = 10_000, rng: RngLike = None
) -> HTable:
    """Estimate ``h_j(b, m; eta)``, ``j = 0..T-1``.

    For ``m >= 1`` the first ``m - 1`` periods are run as a delay before the
    ``F``-led product starts; ``m = 0`` drops ``F`` and starts the ``G``
    product in period 1.
    """
    if m < 0:
        raise InputError("delay m must be nonnegative")
    F, G = fg_paths(config, eta, b, max(m, 1) + T - 1, n, rng)
    mean, se = _h_from_paths(F, G, m, T)
    return HTable(eta=float(eta), b=int(b), m=int(m), values=mean, se=se, n=n, seed=_seed_of(rng))


@dataclass
class HFamily:
    """``h_k(b, m; eta)`` for ``m = 0..m_max`` (rows) and ``k = 0..T-1`` (columns)."""

    eta: float
    b: int
    values: np.ndarray
    se: np.ndarray
    n: int


def estimate_h_family(
    config: ModelConfig, b: int, eta: float, m_max: int, T: int, n: int = 10_000, rng: RngLike = None
) -> HFamily:
    """All delays ``m <= m_max`` from one set of simulated paths."""
    F, G = fg_paths(config, eta, b, max(m_max, 1) + T - 1, n, rng)
    vals = np.empty((m_max + 1, T))
    ses = np.empty((m_max + 1, T))
    for m in range(m_max + 1):
        vals[m], ses[m] = _h_from_paths(F, G, m, T)
    return HFamily(eta=float(eta), b=int(b), values=vals, se=ses, n=n)


def autocorrelation(config: ModelConfig, eta: float, max_lag: int, n: int = 10_000, rng: RngLike = None) -> np.ndarray:
    """``Corr(B_2, B_{2+s} | B_1 = 0)`` for ``s = 0..max_lag`` across ``n`` paths."""
    _check_eta(eta)
    gen = as_generator(rng)
    c = float(config.capacity(eta))
    b = np.zeros(n)
    rows = []
    for _ in range(max_lag + 1):
        b = np.maximum(b + sample_totals(config, gen, n) - c, 0.0)
        rows.append(b)
    x = np.asarray(rows)
    x0 = x[0] - x[0].mean()
    if not np.any(x0):
        raise EstimationError("B_2 has zero sample variance; autocorrelation undefined")
    xs = x - x.mean(axis=1, keepdims=True)
    den = np.sqrt((x0**2).sum() * (xs**2).sum(axis=1))
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = (xs @ x0) / den
    corr[0] = 1.0
    return corr


@dataclass
class BacklogDiagnostics:
    """Per-period statistics of ``B_t`` from zero-start paths (``t = 1..T``)."""

    t: np.ndarray
    p_positive: np.ndarray
    p_positive_se: np.ndarray
    cond_mean: np.ndarray
    cond_mean_se: np.ndarray
    rel_mean: np.ndarray
    rel_mean_se: np.ndarray

    def plateau(self, start: int) -> dict:
        """Averages over periods ``t >= start``."""
        k = self.t >= start
        return {
            "p_positive": float(np.nanmean(self.p_positive[k])),
            "cond_mean": float(np.nanmean(self.cond_mean[k])),
            "rel_mean": float(np.nanmean(self.rel_mean[k])),
        }


def backlog_diagnostics(config: ModelConfig, eta: float, T: int = 120, n: int = 10_000, rng: RngLike = None) -> BacklogDiagnostics:
    _check_eta(eta)
    gen = as_generator(rng)
    c = float(config.capacity(eta))
    b = np.zeros(n)
    path = [b]
    for _ in range(T - 1):
        b = np.maximum(b + sample_totals(config, gen, n) - c, 0.0)
        path.append(b)
    x = np.asarray(path)
    pos = x > 0
    p = pos.mean(axis=1)
    cnt = pos.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        cm = np.where(cnt > 0, (x * pos).sum(axis=1) / cnt, np.nan)
        cvar = np.where(cnt > 1, ((x - cm[:, None]) ** 2 * pos).sum(axis=1) / (cnt - 1), np.nan)
        cm_se = np.sqrt(cvar / cnt)
    return BacklogDiagnostics(
        t=np.arange(1, T + 1),
        p_positive=p,
        p_positive_se=np.sqrt(p * (1 - p) / n),
        cond_mean=cm,
        cond_mean_se=cm_se,
        rel_mean=x.mean(axis=1) / config.mu,
        rel_mean_se=x.std(axis=1, ddof=1) / np.sqrt(n) / config.mu,
    )
