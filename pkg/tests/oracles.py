"""Exact reference values for small instances, computed without simulation.

The aggregate backlog is a Markov chain on the integers, so every
expectation sequence (``g``, ``h``, the stationary law) follows from a
truncated transition matrix and backward recursions.  Nothing here shares
code with the package beyond the model parameters.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import stats


@dataclass
class BacklogChain:
    """Lindley chain ``B' = max(B + R - c, 0)`` with ``R ~ NegBin(alpha, beta)``.

    States are truncated at ``n_states - 1`` and reports at ``n_reports - 1``;
    both cut-offs carry negligible mass for the instances used in tests.
    """

    alpha: float
    beta: float
    c: int
    n_states: int = 1500
    n_reports: int = 400

    @cached_property
    def pmf(self) -> np.ndarray:
        p = stats.nbinom.pmf(np.arange(self.n_reports), self.alpha, self.beta / (1.0 + self.beta))
        return p / p.sum()

    @cached_property
    def _grid(self):
        x = np.arange(self.n_states)[:, None]
        r = np.arange(self.n_reports)[None, :]
        nxt = np.minimum(np.maximum(x + r - self.c, 0), self.n_states - 1)
        over = x > self.c
        spill = np.where(over, r, np.maximum(x + r - self.c, 0))
        carry = np.where(x > self.c, 1.0 - self.c / np.maximum(x, 1), 0.0)[:, 0]
        return nxt, spill.astype(float), carry

    def expect_next(self, f: np.ndarray) -> np.ndarray:
        """``E[f(B') | B = x]`` for every state ``x``."""
        nxt, _, _ = self._grid
        return f[nxt] @ self.pmf

    @cached_property
    def stationary(self) -> np.ndarray:
        nxt, _, _ = self._grid
        P = np.zeros((self.n_states, self.n_states))
        rows = np.repeat(np.arange(self.n_states), self.n_reports)
        np.add.at(P, (rows, nxt.ravel()), np.tile(self.pmf, self.n_states))
        A = P.T - np.eye(self.n_states)
        A[-1] = 1.0
        rhs = np.zeros(self.n_states)
        rhs[-1] = 1.0
        pi = np.linalg.solve(A, rhs)
        return np.clip(pi, 0.0, None) / np.clip(pi, 0.0, None).sum()

    def carry_products(self, T: int) -> np.ndarray:
        """``u[k, x] = E[G_1 .. G_k | B_1 = x]`` for ``k = 0 .. T``."""
        _, _, carry = self._grid
        u = np.empty((T + 1, self.n_states))
        u[0] = 1.0
        for k in range(1, T + 1):
            u[k] = carry * self.expect_next(u[k - 1])
        return u

    def spill_products(self, T: int) -> np.ndarray:
        """``w[j, x] = E[F_1 G_2 .. G_{j+1} | B_1 = x]`` for ``j = 0 .. T-1``."""
        nxt, spill, _ = self._grid
        u = self.carry_products(T)
        return np.stack([(spill * u[j][nxt]) @ self.pmf for j in range(T)])

    def g(self, b: int, T: int) -> np.ndarray:
        return self.spill_products(T)[:, b]

    def g_stationary(self, T: int) -> np.ndarray:
        return self.spill_products(T) @ self.stationary

    def h(self, b: int, m: int, T: int) -> np.ndarray:
        """``h_k(b, m)`` for ``k = 0 .. T-1``."""
        if m == 0:
            return self.carry_products(T - 1)[:, b]
        w = self.spill_products(T)
        for _ in range(m - 1):
            w = np.stack([self.expect_next(row) for row in w])
        return w[:, b]

    def mean_backlog(self) -> float:
        return float(np.arange(self.n_states) @ self.stationary)

    def mean_backlog_after(self, b: int, periods: int) -> float:
        f = np.arange(self.n_states, dtype=float)
        for _ in range(periods):
            f = self.expect_next(f)
        return float(f[b])


def small_chain(eta: float = 1.3) -> BacklogChain:
    """The mu = 10 instance with shapes (1.2, 0.8) and beta = 0.2."""
    return BacklogChain(alpha=2.0, beta=0.2, c=int(round(eta * 10)))
