"""Mini-batch training of :class:`SequenceNet` on a square loss."""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from ..errors import InputError, TrainingError
from .datasets import Dataset
from .network import Normalization, SequenceNet


@dataclass
class TrainConfig:
    """Optimiser settings.

    With ``warmup_epochs > 0`` the net is first fitted to the leading
    ``warmup_T`` entries of each target (the recurrent weights do not depend
    on the unroll length), then to the full sequences.  ``rel_floor``
    (normalised scale) and ``rel_tol`` weight the square loss by the allowed
    error, ``rel_tol`` relative above the floor and the floor itself below
    it; ``rel_floor=None`` gives the plain square loss.
    """

    epochs: int = 300
    batch_size: int = 64
    step_size: float = 3e-3
    optimizer: str = "adam"  # or "momentum"
    momentum: float = 0.9
    decay_every: int = 100
    decay: float = 0.5
    clip: float = 1.0
    val_frac: float = 0.1
    seed: int = 0
    warmup_epochs: int = 150
    warmup_T: int = 10
    warmup_step_size: float = 1e-2
    rel_floor: Optional[float] = None
    rel_tol: float = 0.10

    def __post_init__(self):
        for name in ("step_size", "momentum", "decay", "clip", "val_frac"):
            if not np.isfinite(getattr(self, name)):
                raise InputError(f"{name} must be finite")
        if self.rel_floor is not None and not self.rel_floor > 0:
            raise InputError("rel_floor must be positive or None")
        if not self.rel_tol > 0:
            raise InputError("rel_tol must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise InputError("epochs and batch size must be positive")
        if self.optimizer not in ("adam", "momentum"):
            raise InputError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class TrainResult:
    net: SequenceNet
    history: List[Tuple[int, float, float]]  # (epoch, train loss, validation loss)
    initial_val_loss: float
    best_val_loss: float
    best_epoch: int

    @property
    def improvement(self) -> float:
        """Relative reduction of the validation loss versus the untrained net."""
        return 1.0 - self.best_val_loss / self.initial_val_loss

    def history_to_csv(self, path, header: str = "") -> None:
        with Path(path).open("w") as fh:
            if header:
                fh.write(header)
            fh.write("epoch,train_loss,val_loss\n")
            for e, tr, va in self.history:
                fh.write(f"{e},{tr:.10g},{va:.10g}\n")


def new_net(data: Dataset, hidden: int = 32, seed: int = 0, mu: Optional[float] = None) -> SequenceNet:
    """Untrained net sized for ``data``, normalisation set from its domain."""
    mu = mu or (data.scale if data.scale != 1.0 else 1000.0)
    m_scale = float(data.domain.get("m", (0, data.T))[1]) or 1.0
    norm = Normalization(b_scale=mu, m_scale=m_scale)
    return SequenceNet(data.inputs.shape[1], hidden, data.T, data.scale, norm, seed, dict(data.domain))


def _fit(net, xt, yt, xv, yv, epochs, lr, cfg, rng, log, phase):
    """Run ``epochs`` of mini-batch descent; returns history and the best parameters."""
    fl = cfg.rel_floor
    best_theta, best_val, best_epoch = net.theta.copy(), net.loss(xv, yv, floor=fl, tol=cfg.rel_tol), 0
    history = [(0, net.loss(xt, yt, floor=fl, tol=cfg.rel_tol), best_val)]
    m1 = np.zeros(net.size)
    m2 = np.zeros(net.size)
    step = 0
    for epoch in range(1, epochs + 1):
        if cfg.decay_every and epoch > 1 and (epoch - 1) % cfg.decay_every == 0:
            lr *= cfg.decay
        perm = rng.permutation(len(xt))
        tot = 0.0
        for lo in range(0, len(xt), cfg.batch_size):
            idx = perm[lo : lo + cfg.batch_size]
            loss, g = net.loss_and_grad(xt[idx], yt[idx], floor=fl, tol=cfg.rel_tol)
            if not np.isfinite(loss) or not np.all(np.isfinite(g)):
                raise TrainingError(f"non-finite loss in {phase} epoch {epoch}",
                                    {"phase": phase, "epoch": epoch, "step": step, "step_size": lr,
                                     "history": history})
            norm = np.linalg.norm(g)
            if norm > cfg.clip:
                g *= cfg.clip / norm
            step += 1
            if cfg.optimizer == "adam":
                m1 = 0.9 * m1 + 0.1 * g
                m2 = 0.999 * m2 + 0.001 * g * g
                upd = (m1 / (1 - 0.9**step)) / (np.sqrt(m2 / (1 - 0.999**step)) + 1e-8)
                net.theta -= lr * upd
            else:
                m1 = cfg.momentum * m1 - lr * g
                net.theta += m1
            tot += loss * len(idx)
        val = net.loss(xv, yv, floor=fl, tol=cfg.rel_tol)
        if not np.isfinite(val):
            raise TrainingError(f"non-finite validation loss in {phase} epoch {epoch}",
                                {"phase": phase, "epoch": epoch, "history": history})
        history.append((epoch, tot / len(xt), val))
        if log:
            log(f"{phase} epoch {epoch}: train {tot / len(xt):.5g} val {val:.5g}")
        if val < best_val:
            best_theta, best_val, best_epoch = net.theta.copy(), val, epoch
    return history, best_theta, best_val, best_epoch


def train(net: SequenceNet, data: Dataset, cfg: TrainConfig = TrainConfig(), log=None) -> TrainResult:
    """Fit ``net`` to ``data``; returns the parameters with the lowest validation loss.

    The recorded history and the selection of the best parameters refer to
    the full-length stage.  Raises :class:`TrainingError` if the loss
    becomes non-finite.
    """
    if len(data) == 0:
        raise InputError("empty dataset")
    if data.T != net.T:
        raise InputError(f"target length {data.T} differs from net length {net.T}")
    rng = np.random.default_rng(cfg.seed)
    train_set, val_set = data.split(cfg.val_frac, rng) if cfg.val_frac > 0 else (data, data)
    xt, yt = net.normalize(train_set.inputs), train_set.targets / net.scale
    xv, yv = net.normalize(val_set.inputs), val_set.targets / net.scale

    initial = net.loss(xv, yv, floor=cfg.rel_floor, tol=cfg.rel_tol)
    # start the readout bias at the mean target so early steps fit the shape
    net.views(net.theta)[4][0] = float(yt.mean())
    T = net.T
    if cfg.warmup_epochs > 0 and cfg.warmup_T < T:
        short = cfg.warmup_T
        net.T = short
        try:
            _, theta, _, _ = _fit(net, xt, yt[:, :short], xv, yv[:, :short], cfg.warmup_epochs,
                                  cfg.warmup_step_size, replace(cfg, decay_every=0), rng, log, "warm-up")
        finally:
            net.T = T
        net.theta = theta
    history, theta, best_val, best_epoch = _fit(net, xt, yt, xv, yv, cfg.epochs, cfg.step_size, cfg, rng, log, "full")
    net.theta = theta
    return TrainResult(net, history, initial, best_val, best_epoch)
