"""Central finite-difference verification of every backward pass."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .network import Network
from .tensor import Prng

STREAM_GRADCHECK = 30


@dataclass
class GradCheckReport:
    max_rel_error: float
    per_param: dict[str, float] = field(default_factory=dict)
    checked: dict[str, int] = field(default_factory=dict)
    kinks_skipped: int = 0

    def passed(self, tol: float = 1e-5) -> bool:
        return self.max_rel_error < tol


def relative_error(analytic: float, numeric: float) -> float:
    scale = max(abs(analytic), abs(numeric))
    if scale == 0.0:
        return 0.0
    return abs(analytic - numeric) / scale


def _signature(caches) -> list[bytes]:
    """Branch decisions (ReLU masks, pool argmaxes) of one forward pass."""
    sig = []
    for c in caches:
        if "mask" in c.data and c.data["mask"] is not None and c.data["mask"].dtype == bool:
            sig.append(np.packbits(c.data["mask"]).tobytes())
        elif "argmax" in c.data:
            sig.append(c.data["argmax"].tobytes())
    return sig


def gradient_check(net: Network, x: np.ndarray, t: np.ndarray, eps: float = 1e-5,
                   samples: int = 50, extremes: int = 10, seed: int = 0) -> GradCheckReport:
    """Compare analytic gradients with ``(L(w+eps) - L(w-eps)) / (2 eps)``.

    The network must be double precision. Dropout runs in training mode with
    the same mask on every evaluation. Per parameter tensor, the ``extremes``
    coordinates with the largest analytic gradient plus random ones (at least
    ``samples`` in total, or all of them for small tensors) are probed.
    Coordinates whose perturbation flips a ReLU or max-pool decision sit on
    a kink of the loss and are replaced by fresh random coordinates.
    """
    if net.dtype != np.float64:
        raise ValueError("gradient_check needs a double-precision network")
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)

    def run(with_grad=False):
        prng = Prng(seed, (STREAM_GRADCHECK,))
        logits, caches = net.forward(x, train=True, prng=prng)
        loss = nn.xent_unchecked(nn.softmax(logits), t)
        if not with_grad:
            return loss, _signature(caches)
        sig = _signature(caches)
        grads = net.backward(nn.softmax_xent_grad(logits, t), caches)
        return loss, sig, grads

    _, base_sig, grads = run(with_grad=True)
    pick = Prng(seed, (STREAM_GRADCHECK, 1))
    report = GradCheckReport(0.0)

    for label, param, grad in zip(net.param_labels(), net.parameters(), grads):
        flat_p = param.reshape(-1)
        flat_g = grad.reshape(-1)
        size = flat_p.size
        want = min(size, max(samples, extremes))
        top = list(np.argsort(-np.abs(flat_g), kind="stable")[: min(extremes, size)])
        pool = [int(i) for i in pick.permutation(size) if i not in set(top)]
        queue = [int(i) for i in top] + pool
        worst = 0.0
        done = 0
        for idx in queue:
            if done >= want:
                break
            orig = flat_p[idx]
            flat_p[idx] = orig + eps
            lp, sig_p = run()
            flat_p[idx] = orig - eps
            lm, sig_m = run()
            flat_p[idx] = orig
            if sig_p != base_sig or sig_m != base_sig:
                report.kinks_skipped += 1
                continue
            numeric = (lp - lm) / (2 * eps)
            worst = max(worst, relative_error(float(flat_g[idx]), numeric))
            done += 1
        report.per_param[label] = worst
        report.checked[label] = done
        report.max_rel_error = max(report.max_rel_error, worst)
    return report
