"""Adam with bias correction and a reduce-on-plateau learning-rate rule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import ShapeError


class NonFiniteGradient(FloatingPointError):
    pass


@dataclass
class AdamState:
    """Moment buffers for one parameter tensor.

    ``n`` and ``s`` are the first and second moment estimates, ``t`` the
    number of steps taken so far.
    """

    n: np.ndarray
    s: np.ndarray
    t: int = 0
    eta: float = 0.002
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, w: np.ndarray, **hyper) -> "AdamState":
        return cls(np.zeros_like(w), np.zeros_like(w), **hyper)

    def copy(self) -> "AdamState":
        return AdamState(self.n.copy(), self.s.copy(), self.t, self.eta, self.beta1, self.beta2, self.eps)


def adam_step(state: AdamState, w: np.ndarray, g: np.ndarray, name: str = "param"):
    """One bias-corrected Adam update; returns ``(w_new, state_new)``.

    Inputs are not modified.
    """
    if not (w.shape == g.shape == state.n.shape == state.s.shape):
        raise ShapeError(f"adam shapes differ for {name}: w {list(w.shape)}, g {list(g.shape)}, "
                         f"moments {list(state.n.shape)}")
    if not np.all(np.isfinite(g)):
        raise NonFiniteGradient(f"non-finite gradient for parameter {name}")
    b1, b2 = state.beta1, state.beta2
    t = state.t + 1
    n = b1 * state.n + (1.0 - b1) * g
    s = b2 * state.s + (1.0 - b2) * (g * g)
    n_hat = n / (1.0 - b1 ** t)
    s_hat = s / (1.0 - b2 ** t)
    w_new = (w - state.eta * n_hat / (np.sqrt(s_hat) + state.eps)).astype(w.dtype, copy=False)
    new = AdamState(n.astype(w.dtype, copy=False), s.astype(w.dtype, copy=False), t,
                    state.eta, b1, b2, state.eps)
    return w_new, new


@dataclass
class LrSchedule:
    """Halve-on-plateau rule monitoring a higher-is-better metric."""

    factor: float = 0.5
    patience: int = 3
    min_lr: float = 1e-5
    best_metric: float = field(default=float("-inf"))
    epochs_since_improve: int = 0

    def __post_init__(self):
        if not 0.0 < self.factor < 1.0:
            raise ValueError("factor must be in (0, 1)")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.min_lr < 0:
            raise ValueError("min_lr must be >= 0")

    def as_dict(self) -> dict:
        return {
            "factor": self.factor,
            "patience": self.patience,
            "min_lr": self.min_lr,
            "best_metric": self.best_metric,
            "epochs_since_improve": self.epochs_since_improve,
        }


def lr_on_epoch_end(sched: LrSchedule, eta: float, metric: float):
    """Return ``(eta_new, sched_new)`` after observing one epoch's metric."""
    if metric > sched.best_metric:
        new = LrSchedule(sched.factor, sched.patience, sched.min_lr, metric, 0)
        return eta, new
    waited = sched.epochs_since_improve + 1
    if waited >= sched.patience:
        eta = max(eta * sched.factor, sched.min_lr)
        waited = 0
    return eta, LrSchedule(sched.factor, sched.patience, sched.min_lr, sched.best_metric, waited)
