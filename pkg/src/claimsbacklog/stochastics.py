"""Seeded sampling for the Gamma-Poisson (negative binomial) reporting model.

Reported claim counts ``R[i, j]`` (occurrence period ``i``, reporting delay
``j``) are independent ``NegBin(alpha_j, beta)`` variables.  Because all
delays share the scale ``beta``, a calendar-period total ``R_t`` is again
negative binomial with shape ``sum(alpha_j)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import EstimationError, ParameterError

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngState:
    """Counter-based random stream: a Philox generator keyed by (seed, stream).

    Two equal ``RngState`` values always produce bit-identical draws, so a
    sampler handed an ``RngState`` is a pure function of it.  Replicates get
    their own stream via :meth:`child`, which does not depend on how many
    draws any other stream consumed.
    """

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        key = ((self.stream & _MASK64) << 64) | (self.seed & _MASK64)
        return np.random.Generator(np.random.Philox(key=key))

    def child(self, index: int) -> "RngState":
        ss = np.random.SeedSequence([self.seed & _MASK64, self.stream & _MASK64, int(index)])
        return RngState(self.seed, int(ss.generate_state(1, np.uint64)[0]))


RngLike = Union[np.random.Generator, RngState, int, None]


def as_generator(rng: RngLike) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngState):
        return rng.generator()
    if rng is None:
        return np.random.default_rng()
    return RngState(int(rng)).generator()


@dataclass(frozen=True)
class ModelConfig:
    """Negative binomial reporting model.

    Attributes:
        alphas: per-delay shapes ``alpha_0 .. alpha_J``.
        beta: shared scale (rate of the Gamma mixing variable).
    """

    alphas: tuple
    beta: float
    mus: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        alphas = tuple(float(a) for a in self.alphas)
        if len(alphas) == 0:
            raise ParameterError("need at least one reporting delay")
        if any(not a > 0 for a in alphas):
            raise ParameterError(f"all shapes must be positive, got {alphas}")
        if not self.beta > 0:
            raise ParameterError(f"beta must be positive, got {self.beta}")
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "mus", np.asarray(alphas) / self.beta)

    @classmethod
    def paper(cls) -> "ModelConfig":
        """J=3, alpha=2 split as (500, 300, 150, 50)/1000, beta=2/1000."""
        return cls(alphas=(1.0, 0.6, 0.3, 0.1), beta=0.002)

    @classmethod
    def small(cls) -> "ModelConfig":
        """Small over-dispersed instance (mu=10, J=1) used by brute-force oracles."""
        return cls(alphas=(1.2, 0.8), beta=0.2)

    @property
    def J(self) -> int:
        return len(self.alphas) - 1

    @property
    def alpha(self) -> float:
        return float(sum(self.alphas))

    @property
    def mu(self) -> float:
        return float(self.mus.sum())

    @property
    def variance(self) -> float:
        return self.mu * (1.0 + 1.0 / self.beta)

    @property
    def cv(self) -> float:
        return float(np.sqrt(1.0 / self.mu + (1.0 / self.beta) / self.mu))

    def capacity(self, eta: float) -> int:
        """Constant per-period capacity ``round(eta * mu)``."""
        return int(round(eta * self.mu))


def sample_gamma(shape, rate, rng: RngLike = None, size=None):
    """Gamma(shape, rate) draws; mean ``shape / rate``."""
    if np.any(np.asarray(shape) <= 0) or np.any(np.asarray(rate) <= 0):
        raise ParameterError("gamma shape and rate must be positive")
    return as_generator(rng).gamma(shape, 1.0 / np.asarray(rate, dtype=float), size)


def sample_poisson(mean, rng: RngLike = None, size=None):
    if np.any(np.asarray(mean) < 0):
        raise ParameterError("poisson mean must be nonnegative")
    return as_generator(rng).poisson(mean, size)


def sample_negbin(shape, scale, rng: RngLike = None, size=None):
    """Negative binomial counts drawn as a Gamma(shape, scale)-mixed Poisson.

    Mean ``shape/scale`` and variance ``(shape/scale) * (1 + 1/scale)``.
    """
    gen = as_generator(rng)
    lam = sample_gamma(shape, scale, gen, size)
    return gen.poisson(lam).astype(np.int64)


def sample_reporting_row(config: ModelConfig, rng: RngLike = None, size=None) -> np.ndarray:
    """One occurrence period's reports ``R[i, 0..J]``; shape ``size + (J+1,)``."""
    gen = as_generator(rng)
    shape = (config.J + 1,) if size is None else tuple(np.atleast_1d(size)) + (config.J + 1,)
    lam = gen.gamma(np.asarray(config.alphas), 1.0 / config.beta, shape)
    return gen.poisson(lam).astype(np.int64)


def sample_totals(config: ModelConfig, rng: RngLike = None, size=None) -> np.ndarray:
    """Calendar-period totals ``R_t ~ NegBin(sum alpha_j, beta)``."""
    return sample_negbin(config.alpha, config.beta, rng, size)


@dataclass(frozen=True)
class SplitSlopes:
    slopes: np.ndarray
    se: np.ndarray
    n: int


def conditional_split_slope(config: ModelConfig, n: int, rng: RngLike = None) -> SplitSlopes:
    """Regress each ``R[i, j]`` on the row total through the origin.

    Under the shared-scale model the conditional mean is linear,
    ``E[R_ij | R_t] = (mu_j / mu) R_t``, so the slopes estimate ``mu_j / mu``.
    """
    rows = sample_reporting_row(config, rng, size=n).astype(float)
    total = rows.sum(axis=1)
    sxx = float(np.dot(total, total))
    if sxx == 0.0:
        raise EstimationError("all sampled totals are zero; slope undefined")
    slopes = rows.T @ total / sxx
    resid = rows - np.outer(total, slopes)
    dof = max(n - 1, 1)
    se = np.sqrt((resid**2).sum(axis=0) / dof / sxx)
    return SplitSlopes(slopes=slopes, se=se, n=n)
