"""Small SGD harness, gradient checker and the sine-regression demo.

The demo fits ``y = sin(pi x / 2) + sin(pi x) + sin(2 pi x)`` with two
networks of equal width: a dense baseline and one whose hidden 64 -> 64
map is an STP-dense layer storing a quarter of the weights.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import autograd as ad
from .layers import dense_forward, stp_dense_forward


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""


# ---------------------------------------------------------------------------
# data and loss
# ---------------------------------------------------------------------------


def sine_target(x):
    x = np.asarray(x, dtype=np.float64)
    return np.sin(0.5 * np.pi * x) + np.sin(np.pi * x) + np.sin(2 * np.pi * x)


def sine_dataset(n_train=512, n_test=256, x_range=(-2.0, 2.0), seed=0):
    """Uniform samples of the three-sine target, as ``(n, 1)`` column arrays.

    Returns ``((x_train, y_train), (x_test, y_test))``.
    """
    lo, hi = map(float, x_range)
    if not hi > lo:
        raise ValueError(f"empty range {x_range}")
    if n_train < 1 or n_test < 1:
        raise ValueError("need at least one train and one test point")
    rng = np.random.default_rng(seed)
    x_tr = rng.uniform(lo, hi, size=(n_train, 1))
    x_te = rng.uniform(lo, hi, size=(n_test, 1))
    return (x_tr, sine_target(x_tr)), (x_te, sine_target(x_te))


def mse_loss(pred, target):
    """Mean squared error and its gradient ``2 (pred - target) / count``."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    diff = pred - target
    return float(np.mean(diff**2)), 2.0 * diff / diff.size


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------


@dataclass
class TrainState:
    """Parameters, gradients and momentum-SGD settings.

    ``lr_schedule`` is a list of ``(epoch, rate)`` pairs; the rate of the
    last pair whose epoch is ``<=`` the current epoch applies.
    """

    params: list
    grads: list | None = None
    lr_schedule: list = field(default_factory=lambda: [(0, 0.1)])
    momentum: float = 0.9
    weight_decay: float = 1e-4
    seed: int = 0
    velocity: list | None = None
    epoch: int = 0

    def __post_init__(self):
        self.params = [np.asarray(p, dtype=np.float64) for p in self.params]
        if not self.lr_schedule or any(r <= 0 for _, r in self.lr_schedule):
            raise ValueError("learning rates must be positive")
        self.lr_schedule = sorted((int(e), float(r)) for e, r in self.lr_schedule)
        if self.grads is not None and [np.shape(g) for g in self.grads] != [p.shape for p in self.params]:
            raise ValueError("gradients do not match parameter shapes")

    @property
    def lr(self):
        rate = self.lr_schedule[0][1]
        for e, r in self.lr_schedule:
            if e <= self.epoch:
                rate = r
        return rate


def sgd_step(state: TrainState) -> TrainState:
    """One momentum step: ``v = mu v + g + wd w``; ``w = w - lr v``."""
    if state.grads is None:
        raise ValueError("sgd_step needs populated gradients")
    vel = state.velocity or [np.zeros_like(p) for p in state.params]
    new_v, new_p = [], []
    for w, g, v in zip(state.params, state.grads, vel):
        v = state.momentum * v + g + state.weight_decay * w
        new_v.append(v)
        new_p.append(w - state.lr * v)
    return replace(state, params=new_p, velocity=new_v, grads=None)


# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Dense:
    """``y = x W^T + b`` with W stored O x I."""

    n_in: int
    n_out: int

    def init(self, rng):
        W = rng.normal(0.0, 1.0 / math.sqrt(self.n_in), size=(self.n_out, self.n_in))
        return [W, np.zeros(self.n_out)]

    def __call__(self, x, W, b):
        return dense_forward(x, W, b)

    def weight_count(self):
        return self.n_in * self.n_out


@dataclass(frozen=True)
class STPDense:
    """``y = x ⋉ W + b``: input ``n*p``, stored weight ``p x q``, output ``n*q``."""

    n: int
    p: int
    q: int

    def init(self, rng):
        W = rng.normal(0.0, 1.0 / math.sqrt(self.p), size=(self.p, self.q))
        return [W, np.zeros(self.n * self.q)]

    def __call__(self, x, W, b):
        return stp_dense_forward(x, W, b)

    def weight_count(self):
        return self.p * self.q


@dataclass(frozen=True)
class Tanh:
    def init(self, rng):
        return []

    def __call__(self, x):
        return ad.tanh(x)

    def weight_count(self):
        return 0


class Sequential:
    """A stack of layers sharing one flat parameter list."""

    def __init__(self, layers):
        self.layers = list(layers)

    def init(self, seed=0):
        rng = np.random.default_rng(seed)
        return [p for layer in self.layers for p in layer.init(rng)]

    def forward(self, params, x):
        i = 0
        for layer in self.layers:
            k = 0 if isinstance(layer, Tanh) else 2
            x = layer(x, *params[i : i + k])
            i += k
        return x

    def param_count(self, params):
        return int(sum(np.size(p) for p in params))

    def loss_and_grads(self, params, x, y):
        pred, pull = _forward_with_pull(lambda *ps: self.forward(ps, x), params)
        loss, g = mse_loss(pred, y)
        return loss, pull(g)


def _forward_with_pull(fn, params):
    leaves = [ad.Var(p) for p in params]
    out = fn(*leaves)

    def pull(g):
        for v in leaves:
            v.grad = None
        out.backward(g)
        return [np.zeros_like(v.value) if v.grad is None else v.grad for v in leaves]

    return out.value, pull


def base_net(width=64):
    return Sequential([Dense(1, width), Tanh(), Dense(width, width), Tanh(), Dense(width, 1)])


def stp_net(width=64, n=2):
    """Same widths as :func:`base_net`, hidden map replaced by an STP-dense layer."""
    if width % n:
        raise ValueError(f"width {width} not divisible by n={n}")
    return Sequential(
        [Dense(1, width), Tanh(), STPDense(n, width // n, width // n), Tanh(), Dense(width, 1)]
    )


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


def fit(model, dataset, epochs, state: TrainState, batch_size=64):
    """Minibatch momentum SGD; returns ``(history, state)``.

    ``history`` holds one ``(epoch, train_mse, test_mse)`` tuple per epoch,
    measured on the full splits after the epoch's updates.  A non-finite
    loss raises :class:`DivergenceError`.
    """
    (x_tr, y_tr), (x_te, y_te) = dataset
    history = []
    rng = np.random.default_rng(state.seed)
    n = len(x_tr)
    # overflow is reported through the loss check, not as warnings
    with np.errstate(over="ignore", invalid="ignore"):
        for ep in range(epochs):
            state = replace(state, epoch=ep)
            order = rng.permutation(n)
            for start in range(0, n, batch_size):
                idx = order[start : start + batch_size]
                loss, grads = model.loss_and_grads(state.params, x_tr[idx], y_tr[idx])
                if not np.isfinite(loss):
                    raise DivergenceError(f"non-finite loss at epoch {ep}")
                state = sgd_step(replace(state, grads=grads))
            tr = mse_loss(ad.value(model.forward(state.params, x_tr)), y_tr)[0]
            te = mse_loss(ad.value(model.forward(state.params, x_te)), y_te)[0]
            if not (np.isfinite(tr) and np.isfinite(te)):
                raise DivergenceError(f"non-finite loss at epoch {ep}")
            history.append((ep + 1, tr, te))
    return history, state


def write_history(path, history):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "train_mse", "test_mse"])
        for ep, tr, te in history:
            w.writerow([ep, repr(float(tr)), repr(float(te))])


@dataclass
class SineRun:
    seed: int
    base_history: list
    stp_history: list
    base_params: int
    stp_params: int
    base_hidden: int
    stp_hidden: int

    @property
    def base_test(self):
        return self.base_history[-1][2] if self.base_history else float("nan")

    @property
    def stp_test(self):
        return self.stp_history[-1][2] if self.stp_history else float("nan")


def demo_sine(seed=0, epochs=2000, lr=0.01, momentum=0.9, weight_decay=1e-4,
              width=64, n=2, batch_size=64, out_dir=None):
    """Train the base and STP networks on the same data and initial seed."""
    data = sine_dataset(seed=seed)
    runs = {}
    for name, model in (("base", base_net(width)), ("stp", stp_net(width, n))):
        params = model.init(seed)
        state = TrainState(params, lr_schedule=[(0, lr), (int(epochs * 0.75), lr * 0.1)],
                           momentum=momentum, weight_decay=weight_decay, seed=seed)
        hist, state = fit(model, data, epochs, state, batch_size)
        runs[name] = (model, hist, params)
        if out_dir is not None:
            Path(out_dir).mkdir(parents=True, exist_ok=True)
            write_history(Path(out_dir) / f"{name}_loss_seed{seed}.csv", hist)
    (bm, bh, bp), (sm, sh, spar) = runs["base"], runs["stp"]
    return SineRun(
        seed, bh, sh,
        bm.param_count(bp), sm.param_count(spar),
        bm.layers[2].weight_count(), sm.layers[2].weight_count(),
    )


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------


@dataclass
class GradCheckReport:
    name: str
    errors: list
    tol: float

    @property
    def max_error(self):
        return max(self.errors) if self.errors else 0.0

    @property
    def passed(self):
        return self.max_error < self.tol

    def __str__(self):
        blocks = ", ".join(f"{e:.2e}" for e in self.errors)
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: max rel err {self.max_error:.2e} [{blocks}]"


def grad_check(fn, inputs, tol=1e-5, step=1e-5, seed=0, name="op"):
    """Compare reverse-mode gradients with central differences.

    The scalar probed is ``sum(g * fn(*inputs))`` for a fixed random
    cotangent ``g``.  Each input block gets the error
    ``max|analytic - numeric| / max(max|numeric|, max|analytic|)``.
    """
    inputs = [np.array(x, dtype=np.float64) for x in inputs]
    rng = np.random.default_rng(seed)
    out = ad.value(fn(*inputs))
    g = rng.normal(size=np.shape(out))
    _, grads = ad.vjp(fn, inputs, g)

    def scalar(xs):
        return float(np.sum(g * ad.value(fn(*xs))))

    errors = []
    for k, x in enumerate(inputs):
        num = np.zeros_like(x)
        for idx in np.ndindex(*x.shape):
            xs = list(inputs)
            xp, xm = x.copy(), x.copy()
            xp[idx] += step
            xm[idx] -= step
            xs[k] = xp
            fp = scalar(xs)
            xs[k] = xm
            num[idx] = (fp - scalar(xs)) / (2 * step)
        ana = np.asarray(grads[k])
        scale = max(np.abs(num).max(initial=0.0), np.abs(ana).max(initial=0.0), 1e-300)
        errors.append(float(np.abs(ana - num).max(initial=0.0) / scale))
    return GradCheckReport(name, errors, tol)
