"""A gated recurrent sequence model written directly in numpy.

The input vector (normalised) is fed at every unrolled step; each step emits
one scalar through a linear readout.  Outputs live on a normalised scale and
are multiplied by ``scale`` (``mu`` for backlog-sized targets, 1 for pure
carry-fraction products) when predicting.

Gradients are computed by hand with backpropagation through time.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from ..errors import DomainWarning, InputError

# input columns are (b, eta, m); width 1 nets take eta only
_NAMES = {1: ("eta",), 2: ("b", "eta"), 3: ("b", "eta", "m")}


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def relative_weights(y, floor, tol=0.10):
    """Per-entry weights ``(floor / tolerance(y))**2``.

    The tolerance is ``tol * |y|`` where ``|y| > floor`` and ``floor``
    otherwise, so a weighted square loss scores every entry by its error in
    units of the allowed error: relative above the floor, absolute below.
    """
    a = np.abs(y)
    return np.where(a > floor, (floor / (tol * np.maximum(a, floor))) ** 2, 1.0)


@dataclass
class Normalization:
    b_scale: float
    eta_shift: float = 1.0
    eta_scale: float = 0.5
    m_scale: float = 120.0

    def apply(self, inputs: np.ndarray, names) -> np.ndarray:
        out = np.empty_like(inputs, dtype=float)
        for k, name in enumerate(names):
            col = inputs[:, k].astype(float)
            if name == "b":
                out[:, k] = col / self.b_scale
            elif name == "eta":
                out[:, k] = (col - self.eta_shift) / self.eta_scale
            else:
                out[:, k] = col / self.m_scale
        return out


class SequenceNet:
    """GRU cell of width ``hidden`` unrolled ``T`` steps with a scalar readout.

    Parameters sit in one flat vector ``theta``; the weight matrices are
    views into it.
    """

    def __init__(self, in_dim: int, hidden: int = 32, T: int = 120, scale: float = 1.0,
                 norm: Optional[Normalization] = None, seed: int = 0, domain: Optional[dict] = None):
        if in_dim not in _NAMES:
            raise InputError("input width must be 1, 2 or 3")
        self.in_dim = in_dim
        self.hidden = hidden
        self.T = T
        self.scale = float(scale)
        self.norm = norm or Normalization(b_scale=5000.0, m_scale=float(T))
        self.domain = dict(domain or {})
        H, d = hidden, in_dim
        self._shapes = [("W", (3 * H, d)), ("U", (3 * H, H)), ("b", (3 * H,)), ("wo", (H,)), ("bo", (1,))]
        self.size = sum(int(np.prod(s)) for _, s in self._shapes)
        self.theta = np.zeros(self.size)
        rng = np.random.default_rng(seed)
        W, U, _, wo, _ = self.views(self.theta)
        W[:] = rng.uniform(-1, 1, W.shape) * np.sqrt(6.0 / (d + H))
        for k in range(3):
            q, _ = np.linalg.qr(rng.standard_normal((H, H)))
            U[k * H : (k + 1) * H] = q
        wo[:] = rng.uniform(-1, 1, H) * np.sqrt(6.0 / (H + 1))

    @property
    def names(self):
        return _NAMES[self.in_dim]

    def views(self, theta):
        out, k = [], 0
        for _, shape in self._shapes:
            n = int(np.prod(shape))
            out.append(theta[k : k + n].reshape(shape))
            k += n
        return out

    # -- core maps on normalised inputs -------------------------------------

    def _forward(self, x, theta=None, keep=False):
        theta = self.theta if theta is None else theta
        W, U, b, wo, bo = self.views(theta)
        H = self.hidden
        N = x.shape[0]
        xw = x @ W.T + b
        h = np.zeros((N, H))
        y = np.empty((N, self.T))
        cache = [] if keep else None
        Uzr = U[: 2 * H]
        Un = U[2 * H :]
        for t in range(self.T):
            a = xw[:, : 2 * H] + h @ Uzr.T
            z = _sigmoid(a[:, :H])
            r = _sigmoid(a[:, H:])
            rh = r * h
            n = np.tanh(xw[:, 2 * H :] + rh @ Un.T)
            h_new = (1.0 - z) * n + z * h
            if keep:
                cache.append((h, z, r, n))
            h = h_new
            y[:, t] = h @ wo + bo[0]
        return y, cache

    def loss_and_grad(self, x, target, theta=None, floor=None, tol=0.10):
        """Mean squared error on the normalised scale and its gradient.

        With ``floor`` the squared errors are weighted by
        :func:`relative_weights` of the current prediction.  The weights are
        held constant in the gradient (they never see the noisy target, so
        the fit still aims at the conditional mean).
        """
        theta = self.theta if theta is None else theta
        W, U, b, wo, bo = self.views(theta)
        H = self.hidden
        N = x.shape[0]
        y, cache = self._forward(x, theta, keep=True)
        diff = y - target
        w = 1.0 if floor is None else relative_weights(y, floor, tol)
        loss = float(np.mean(w * diff**2))
        dy = 2.0 * w * diff / diff.size
        grad = np.zeros_like(theta)
        gW, gU, gb, gwo, gbo = self.views(grad)
        Uz, Ur, Un = U[:H], U[H : 2 * H], U[2 * H :]
        dxw = np.zeros((N, 3 * H))
        dh = np.zeros((N, H))
        for t in range(self.T - 1, -1, -1):
            h_prev, z, r, n = cache[t]
            h_t = (1.0 - z) * n + z * h_prev
            gwo += h_t.T @ dy[:, t]
            gbo += dy[:, t].sum()
            dh = dh + dy[:, t : t + 1] * wo
            dn = dh * (1.0 - z)
            dz = dh * (h_prev - n)
            dh_prev = dh * z
            dan = dn * (1.0 - n * n)
            rh = r * h_prev
            gU[2 * H :] += dan.T @ rh
            drh = dan @ Un
            dr = drh * h_prev
            dh_prev += drh * r
            daz = dz * z * (1.0 - z)
            dar = dr * r * (1.0 - r)
            gU[:H] += daz.T @ h_prev
            gU[H : 2 * H] += dar.T @ h_prev
            dh_prev += daz @ Uz + dar @ Ur
            dxw[:, :H] += daz
            dxw[:, H : 2 * H] += dar
            dxw[:, 2 * H :] += dan
            dh = dh_prev
        gW += dxw.T @ x
        gb += dxw.sum(axis=0)
        return loss, grad

    def loss(self, x, target, theta=None, floor=None, weights=None, tol=0.10) -> float:
        """Square loss; ``weights`` fixes the weights, ``floor`` derives them from the prediction."""
        y, _ = self._forward(x, theta)
        if weights is None:
            weights = 1.0 if floor is None else relative_weights(y, floor, tol)
        return float(np.mean(weights * (y - target) ** 2))

    # -- user-facing --------------------------------------------------------

    def normalize(self, inputs) -> np.ndarray:
        inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
        if inputs.shape[1] != self.in_dim:
            raise InputError(f"expected {self.in_dim} input columns, got {inputs.shape[1]}")
        return self.norm.apply(inputs, self.names)

    def check_domain(self, inputs) -> bool:
        """Warn (and return False) if any input lies outside the trained range."""
        inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
        bad = []
        for k, name in enumerate(self.names):
            lo, hi = self.domain.get(name, (-np.inf, np.inf))
            col = inputs[:, k]
            if np.any(col < lo - 1e-9) or np.any(col > hi + 1e-9):
                bad.append(f"{name} outside [{lo:g}, {hi:g}]")
        if bad:
            warnings.warn("input outside the trained domain: " + "; ".join(bad), DomainWarning, stacklevel=3)
        return not bad

    def predict(self, inputs) -> np.ndarray:
        """Predicted sequences, shape (N, T), on the target scale."""
        x = self.normalize(inputs)
        self.check_domain(inputs)
        y, _ = self._forward(x)
        return self.scale * y

    def to_dict(self) -> dict:
        return {
            "format": "sequence-net/1",
            "in_dim": self.in_dim,
            "hidden": self.hidden,
            "T": self.T,
            "scale": self.scale,
            "norm": vars(self.norm),
            "domain": {k: list(v) for k, v in self.domain.items()},
            "theta": self.theta.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SequenceNet":
        net = cls(d["in_dim"], d["hidden"], d["T"], d["scale"], Normalization(**d["norm"]),
                  domain={k: tuple(v) for k, v in d["domain"].items()})
        theta = np.asarray(d["theta"], dtype=float)
        if theta.shape != (net.size,):
            raise InputError("parameter vector does not match the architecture header")
        net.theta = theta
        return net

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "SequenceNet":
        return cls.from_dict(json.loads(Path(path).read_text()))


def gradient_check(net: SequenceNet, x, target, eps: float = 1e-5, n_params: int = 40, seed: int = 0) -> float:
    """Largest relative error between the analytic gradient and central
    differences over a random subset of parameters (normalised inputs)."""
    if not 1e-7 <= eps <= 1e-3:
        raise InputError("perturbation must lie in [1e-7, 1e-3]")
    _, grad = net.loss_and_grad(x, target)
    rng = np.random.default_rng(seed)
    idx = rng.choice(net.size, size=min(n_params, net.size), replace=False)
    worst = 0.0
    for k in idx:
        th = net.theta.copy()
        th[k] += eps
        up = net.loss(x, target, th)
        th[k] -= 2 * eps
        dn = net.loss(x, target, th)
        num = (up - dn) / (2 * eps)
        den = max(abs(num), abs(grad[k]), 1e-8)
        worst = max(worst, abs(num - grad[k]) / den)
    return worst
