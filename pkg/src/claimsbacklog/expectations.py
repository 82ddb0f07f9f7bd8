"""Per-origin backlog and processing expectations assembled from g/h sequences.

Unconditional (stationary) values combine the reporting pattern ``mu_j / mu``
with ``g_j(eta)``; conditional values given a frozen history combine it with
``h_j(b, m; eta)``.  The conditional side takes an :class:`HProvider`, so the
same assembly runs on Monte Carlo tables or on fitted networks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Sequence, Tuple

import numpy as np

from .errors import InputError
from .estimation import GTable, estimate_h_family, fg_paths
from .processing import PeriodState, compute_FG
from .stochastics import ModelConfig, RngState


def _need(table: GTable, length: int) -> None:
    if table.T < length:
        raise InputError(f"table has {table.T} entries, need at least {length}")


def uncond_backlog_expectation(g: GTable, config: ModelConfig, j: int) -> float:
    """Stationary ``E[B_{i,j}] = sum_{k=1}^{min(j, J+1)} (mu_{k-1}/mu) g_{j-k}``."""
    if j < 0:
        raise InputError("delay must be nonnegative")
    if j == 0:
        return 0.0
    _need(g, j)
    w = config.mus / config.mu
    return float(sum(w[k - 1] * g.values[j - k] for k in range(1, min(j, config.J + 1) + 1)))


def uncond_processed_expectation(g: GTable, config: ModelConfig, j: int) -> float:
    """Stationary ``E[P_{i,j}]``.

    Backlog carried in from reporting delay ``k - 1`` is processed at delay
    ``j`` with weight ``E[F_1 G_2..G_{j-k+1} (1 - G_{j-k+2})]`` (the companion
    sequence); new reports at delay ``j <= J`` are processed on arrival unless
    they spill over, contributing ``(mu_j/mu)(mu - g_0)``.
    """
    if j < 0:
        raise InputError("delay must be nonnegative")
    _need(g, max(j, 1))
    w = config.mus / config.mu
    val = sum(w[k - 1] * g.companion[j - k] for k in range(1, min(j, config.J + 1) + 1))
    if j <= config.J:
        val += w[j] * (config.mu - g.values[0])
    return float(val)


def backlog_profile(g: GTable, config: ModelConfig) -> np.ndarray:
    """``E[B_{i,j}]`` for ``j = 0 .. T``."""
    return np.array([uncond_backlog_expectation(g, config, j) for j in range(g.T + 1)])


def processed_profile(g: GTable, config: ModelConfig) -> np.ndarray:
    """``E[P_{i,j}]`` for ``j = 0 .. T``."""
    return np.array([uncond_processed_expectation(g, config, j) for j in range(g.T + 1)])


def stationary_backlog_from_g(g: GTable) -> float:
    """``E[B] = sum_j g_j``: the per-origin backlogs summed over delays."""
    return g.total


def processing_pattern(config: ModelConfig, tables: Sequence[GTable]) -> Dict[float, np.ndarray]:
    """Cumulative expected proportion of an origin's claims processed by each delay."""
    out = {}
    for g in tables:
        p = np.clip(processed_profile(g, config), 0.0, None)
        cum = np.cumsum(p) / config.mu
        out[g.eta] = np.minimum(np.maximum.accumulate(cum), 1.0)
    return out


@dataclass
class HistorySummary:
    """Observed per-origin state at reference period ``tau``.

    ``reports[i] = R_{i, tau-i}`` and ``backlog[i] = B_{i, tau-i}``.
    """

    tau: int
    reports: Dict[int, int]
    backlog: Dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        self.reports = {int(i): int(v) for i, v in self.reports.items() if v}
        self.backlog = {int(i): int(v) for i, v in self.backlog.items() if v}
        if any(v < 0 for v in list(self.reports.values()) + list(self.backlog.values())):
            raise InputError("counts must be nonnegative")
        if any(i > self.tau for i in self.reports) or any(i >= self.tau for i in self.backlog):
            raise InputError("reports need origin <= tau and backlogs origin < tau")

    @property
    def R(self) -> int:
        return int(sum(self.reports.values()))

    @property
    def B(self) -> int:
        return int(sum(self.backlog.values()))

    def derived(self, capacity: float) -> Tuple[float, float, float]:
        """``(F_tau, G_tau, B_{tau+1})`` under a constant capacity."""
        F, G = compute_FG(self.B, self.R, capacity)
        return float(F), float(G), float(max(self.B + self.R - capacity, 0))

    @classmethod
    def from_state(cls, state: PeriodState) -> "HistorySummary":
        return cls(tau=state.t, reports=dict(state.reports), backlog=dict(state.backlog))

    @classmethod
    def zero_start(cls, config: ModelConfig, R_tau: int, tau: int = 0) -> "HistorySummary":
        """Empty ingoing backlog with ``R_tau`` reports split by the reporting pattern.

        The split uses largest remainders of ``R_tau * mu_j / mu``; only the
        total enters the aggregate cost.
        """
        share = R_tau * config.mus / config.mu
        counts = np.floor(share).astype(int)
        left = int(R_tau - counts.sum())
        counts[np.argsort(-(share - counts), kind="stable")[:left]] += 1
        return cls(tau=tau, reports={tau - j: int(v) for j, v in enumerate(counts)})


class HProvider:
    """Source of ``h_k(b, m; eta)``.

    Subclasses implement :meth:`family`; :meth:`horizon_sums` has a generic
    implementation on top of it.
    """

    def family(self, b: float, eta: float, m_max: int, T: int) -> np.ndarray:
        """Array of shape (m_max+1, T) with entry ``[m, k] = h_k(b, m; eta)``."""
        raise NotImplementedError

    def horizon_sums(self, b: float, eta: float, T: int) -> Tuple[float, float]:
        """``(sum_{k<T} h_k(b,0), sum_{m=1}^T sum_{k=0}^{T-m} h_k(b,m))``."""
        h = self.family(b, eta, T, T)
        s0 = float(h[0, :T].sum())
        sm = float(sum(h[m, : T - m + 1].sum() for m in range(1, T + 1)))
        return s0, sm


class MonteCarloHProvider(HProvider):
    """Monte Carlo ``h`` from ``n`` simulated paths per ``(b, eta)``.

    Every call replays the same random stream, so results at different
    ``eta`` or ``b`` share reporting draws.
    """

    def __init__(self, config: ModelConfig, n: int = 10_000, seed: int = 0):
        self.config = config
        self.n = n
        self.seed = seed
        self._cache: dict = {}

    def family(self, b, eta, m_max, T):
        key = ("family", float(b), float(eta), m_max, T)
        if key not in self._cache:
            fam = estimate_h_family(self.config, int(round(b)), eta, m_max, T, self.n, RngState(self.seed))
            self._cache[key] = fam.values
        return self._cache[key]

    def horizon_sums(self, b, eta, T):
        """Pathwise evaluation in O(nT).

        With ``x_s = x_{s-1} G_s + F_s`` and ``x_0 = 0``, the double sum over
        ``m`` and ``k`` equals ``sum_{s<=T} x_s`` on every path.
        """
        key = ("sums", float(b), float(eta), T)
        if key not in self._cache:
            F, G = fg_paths(self.config, eta, int(round(b)), T, self.n, RngState(self.seed))
            prod = np.concatenate([np.ones((self.n, 1)), np.cumprod(G[:, : T - 1], axis=1)], axis=1)
            x = np.zeros(self.n)
            acc = np.zeros(self.n)
            for s in range(T):
                x = x * G[:, s] + F[:, s]
                acc += x
            self._cache[key] = (float(prod.sum(axis=1).mean()), float(acc.mean()))
        return self._cache[key]


class NetHProvider(HProvider):
    """``h`` from two fitted sequence nets (``m = 0`` and ``m >= 1``)."""

    def __init__(self, net_zero, net_delay):
        self.net_zero = net_zero
        self.net_delay = net_delay

    def family(self, b, eta, m_max, T):
        if T > self.net_zero.T or T > self.net_delay.T:
            raise InputError(f"horizon {T} exceeds the network sequence length")
        out = np.empty((m_max + 1, T))
        out[0] = self.net_zero.predict(np.array([[b, eta]]))[0, :T]
        if m_max >= 1:
            x = np.array([[b, eta, m] for m in range(1, m_max + 1)], dtype=float)
            out[1:] = self.net_delay.predict(x)[:, :T]
        return out


def cond_backlog_terms(
    history: HistorySummary, provider: HProvider, config: ModelConfig, eta: float, i: int, k: int
) -> Tuple[float, float, float]:
    """The future-report, newly-reported and carried-backlog parts of
    ``E[B_{i, tau-i+k+1} | history]`` under constant capacity."""
    tau = history.tau
    if tau - i + k < 0:
        raise InputError("need tau - i + k >= 0")
    F, G, b_next = history.derived(config.capacity(eta))
    h = provider.family(b_next, eta, k, k + 1)
    w = config.mus / config.mu
    future = 0.0
    for m in range(1, k + 1):
        d = tau - i + m
        if 0 <= d <= config.J:
            future += w[d] * h[m, k - m]
    new = 0.0
    if 0 <= tau - i <= config.J and history.R > 0:
        new = history.reports.get(i, 0) / history.R * F * h[0, k]
    carried = history.backlog.get(i, 0) * G * h[0, k] if i <= tau else 0.0
    return float(future), float(new), float(carried)


def cond_backlog_expectation(
    history: HistorySummary, provider: HProvider, config: ModelConfig, eta: float, i: int, k: int
) -> float:
    """``E[B_{i, tau-i+k+1} | history]`` for origin ``i`` and ``k >= 0``."""
    return sum(cond_backlog_terms(history, provider, config, eta, i, k))
