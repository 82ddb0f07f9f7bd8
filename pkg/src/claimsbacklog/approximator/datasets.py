"""Training sets of simulated F/G product sequences.

Each sample has inputs ``(b, eta)``, ``(b, eta, m)`` or ``(eta,)`` and a
target sequence of length ``T``:

* ``"g"``: ``F_1 G_2 .. G_{j+1}`` from ``B_1 = b``
* ``"h0"``: ``G_1 .. G_j`` (empty product 1 at ``j = 0``)
* ``"hm"``: ``F_m G_{m+1} .. G_{m+j}`` after ``m - 1`` delay periods

Targets may average several independent paths per input point
(``paths_per_sample``), which lowers label noise without changing the
regression function.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from ..errors import InputError
from ..estimation import burn_in_sampler
from ..processing import compute_FG
from ..stochastics import ModelConfig, RngLike, as_generator, sample_totals

_STARTS = ("stationary", "zero", "mixed", "uniform")


@dataclass
class Dataset:
    inputs: np.ndarray
    targets: np.ndarray
    kind: str
    scale: float
    domain: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.inputs) != len(self.targets):
            raise InputError("inputs and targets differ in length")

    def __len__(self) -> int:
        return len(self.inputs)

    @property
    def T(self) -> int:
        return self.targets.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.inputs[idx], self.targets[idx], self.kind, self.scale, dict(self.domain))

    def split(self, frac: float, rng: RngLike = None) -> Tuple["Dataset", "Dataset"]:
        """Random ``(train, validation)`` split with ``frac`` of samples held out."""
        perm = as_generator(rng).permutation(len(self))
        k = int(round(frac * len(self)))
        return self.subset(perm[k:]), self.subset(perm[:k])


def _spread(gen, b_range, n):
    """Backlogs on ``b_range`` with density decreasing in ``b`` (square of a uniform).

    Small backlogs, where g changes fastest, get most of the samples.
    """
    lo, hi = b_range
    return np.round(lo + (hi - lo) * gen.uniform(0.0, 1.0, n) ** 2)


def _initial_backlog(config, etas, start, gen, b_range, burn):
    n = len(etas)
    if start == "zero":
        return np.zeros(n)
    if start == "uniform":
        return _spread(gen, b_range, n)
    stat = burn_in_sampler(config, etas, burn=burn, rng=gen, size=n).reshape(-1).astype(float)
    if start == "stationary":
        return stat
    # mixed: a quarter stationary, a quarter empty, half uniform
    kind = gen.integers(0, 4, n)
    uni = _spread(gen, b_range, n)
    return np.where(kind == 0, stat, np.where(kind == 1, 0.0, uni))


def simulate_products(config, b, etas, delays, T, gen, paths=1, carry_only=False):
    """Averaged product sequences for per-sample ``(b, eta, m)``.

    Returns shape (len(b), T).  With ``carry_only`` the sequence is
    ``G_1 .. G_j`` and ``delays`` is ignored.
    """
    n = len(b)
    rows = np.repeat(np.arange(n), paths)
    bt = np.asarray(b, dtype=float)[rows]
    c = np.rint(np.asarray(etas, dtype=float) * config.mu)[rows]
    m = np.zeros(n, dtype=int) if carry_only else np.asarray(delays, dtype=int)
    if not carry_only and np.any(m < 1):
        raise InputError("delays must be at least 1")
    out = np.zeros((n, T))
    x = np.ones(n * paths)
    if carry_only:
        out[:, 0] = 1.0
    steps = (T - 1) if carry_only else int(m.max()) + T - 1
    mr = m[rows]
    for s in range(1, steps + 1):
        r = sample_totals(config, gen, n * paths)
        f, g = compute_FG(bt, r, c)
        bt = np.maximum(bt + r - c, 0.0)
        x = np.where(mr == s, f, x * g)
        j = s - m
        ok = (j >= 0) & (j < T)
        if np.any(ok):
            mean = x.reshape(n, paths).mean(axis=1)
            out[ok, j[ok]] = mean[ok]
    return out


def _domain(b, etas, delays=None):
    d = {"b": (0.0, float(max(np.max(b), 1.0))), "eta": (float(np.min(etas)), float(np.max(etas)))}
    if delays is not None:
        d["m"] = (float(np.min(delays)), float(np.max(delays)))
    return d


def build_dataset_g(
    config: ModelConfig,
    n: int,
    eta_range: Tuple[float, float] = (1.05, 1.50),
    rng: RngLike = None,
    T: int = 120,
    start: str = "stationary",
    paths_per_sample: int = 1,
    b_range: Tuple[float, float] = (0.0, 10_000.0),
    burn: int = 1200,
    unconditional: bool = False,
) -> Dataset:
    """Samples of ``F_1 G_2 .. G_{j+1}`` at uniform random capacity ratios.

    With ``unconditional`` the inputs are ``eta`` only and every path gets
    its own stationary start, so targets estimate ``g_j(eta)``.
    """
    if start not in _STARTS:
        raise InputError(f"unknown start {start!r}")
    if not eta_range[0] > 1:
        raise InputError("capacity ratios must exceed 1")
    gen = as_generator(rng)
    etas = gen.uniform(*eta_range, n)
    if unconditional:
        rows = np.repeat(etas, paths_per_sample)
        b = _initial_backlog(config, rows, "stationary", gen, b_range, burn)
        y = simulate_products(config, b, rows, np.ones(len(rows), int), T, gen, 1)
        y = y.reshape(n, paths_per_sample, T).mean(axis=1)
        dom = {"eta": (float(eta_range[0]), float(eta_range[1]))}
        return Dataset(etas[:, None], y, "g_uncond", config.mu, dom)
    b = _initial_backlog(config, etas, start, gen, b_range, burn)
    y = simulate_products(config, b, etas, np.ones(n, int), T, gen, paths_per_sample)
    dom = _domain(b, eta_range)
    return Dataset(np.column_stack([b, etas]), y, "g", config.mu, dom)


def build_dataset_h(
    config: ModelConfig,
    n: int,
    m_range: Tuple[int, int] = (1, 120),
    eta_range: Tuple[float, float] = (1.05, 1.50),
    rng: RngLike = None,
    T: int = 120,
    start: str = "mixed",
    paths_per_sample: int = 1,
    b_range: Tuple[float, float] = (0.0, 10_000.0),
    burn: int = 1200,
) -> Dataset:
    """Samples of ``h``-type sequences.

    ``m_range = (0, 0)`` builds the carry-only (``m = 0``) set with inputs
    ``(b, eta)``; otherwise delays are drawn uniformly from ``m_range`` and
    inputs are ``(b, eta, m)``.
    """
    if start not in _STARTS:
        raise InputError(f"unknown start {start!r}")
    gen = as_generator(rng)
    etas = gen.uniform(*eta_range, n)
    b = _initial_backlog(config, etas, start, gen, b_range, burn)
    if m_range == (0, 0):
        y = simulate_products(config, b, etas, None, T, gen, paths_per_sample, carry_only=True)
        return Dataset(np.column_stack([b, etas]), y, "h0", 1.0, _domain(b, eta_range))
    if m_range[0] < 1:
        raise InputError("delays for the F-led set must be at least 1")
    m = gen.integers(m_range[0], m_range[1] + 1, n)
    y = simulate_products(config, b, etas, m, T, gen, paths_per_sample)
    return Dataset(np.column_stack([b, etas, m]), y, "hm", config.mu, _domain(b, eta_range, m_range))
