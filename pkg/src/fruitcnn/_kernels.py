"""Hot loops for convolution lowering and max pooling.

Each kernel exists twice: a numba ``@njit`` loop nest and a vectorised numpy
version. The numba path is used when numba imports and the environment
variable ``FRUITCNN_DISABLE_NUMBA`` is unset (or ``0``). Both paths write
disjoint output slots in a fixed order, so results are bit-reproducible.
"""

from __future__ import annotations

import os

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

try:
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

_DISABLED = os.environ.get("FRUITCNN_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")


# ---------------------------------------------------------------- numpy path

def _im2col_np(xp, kh, kw, stride, ho, wo):
    n, c = xp.shape[:2]
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, : (ho - 1) * stride + 1 : stride, : (wo - 1) * stride + 1 : stride]
    # (N, C, Ho, Wo, kh, kw) -> (N, Ho, Wo, C, kh, kw)
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * ho * wo, c * kh * kw)


def _col2im_np(cols, n, c, hp, wp, kh, kw, stride, ho, wo):
    out = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    g = cols.reshape(n, ho, wo, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    for u in range(kh):
        for v in range(kw):
            out[:, :, u : u + stride * ho : stride, v : v + stride * wo : stride] += g[:, :, u, v]
    return out


def _maxpool_fwd_np(x, ph, pw, stride, ho, wo, pad_top, pad_left):
    n, c, h, w = x.shape
    hp = (ho - 1) * stride + ph
    wp = (wo - 1) * stride + pw
    xp = np.full((n, c, hp, wp), -np.inf, dtype=x.dtype)
    rows = min(h, hp - pad_top)
    cols = min(w, wp - pad_left)
    xp[:, :, pad_top : pad_top + rows, pad_left : pad_left + cols] = x[:, :, :rows, :cols]
    win = sliding_window_view(xp, (ph, pw), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :ho, :wo]
    win = win.reshape(n, c, ho, wo, ph * pw)
    k = win.argmax(axis=-1)
    out = np.take_along_axis(win, k[..., None], axis=-1)[..., 0]
    i = np.arange(ho).reshape(1, 1, ho, 1)
    j = np.arange(wo).reshape(1, 1, 1, wo)
    r = i * stride + k // pw - pad_top
    q = j * stride + k % pw - pad_left
    plane = (np.arange(n).reshape(n, 1, 1, 1) * c + np.arange(c).reshape(1, c, 1, 1)) * (h * w)
    return np.ascontiguousarray(out), (plane + r * w + q).astype(np.int64)


def _maxpool_bwd_np(grad_out, argidx, size):
    flat = np.bincount(argidx.ravel(), weights=grad_out.ravel().astype(np.float64), minlength=size)
    return flat.astype(grad_out.dtype)


# ---------------------------------------------------------------- numba path

def _im2col_loops(xp, kh, kw, stride, ho, wo):
    n, c = xp.shape[0], xp.shape[1]
    cols = np.empty((n * ho * wo, c * kh * kw), dtype=xp.dtype)
    for b in range(n):
        for i in range(ho):
            for j in range(wo):
                row = (b * ho + i) * wo + j
                col = 0
                for ch in range(c):
                    for u in range(kh):
                        for v in range(kw):
                            cols[row, col] = xp[b, ch, i * stride + u, j * stride + v]
                            col += 1
    return cols


def _col2im_loops(cols, n, c, hp, wp, kh, kw, stride, ho, wo):
    out = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    for b in range(n):
        for i in range(ho):
            for j in range(wo):
                row = (b * ho + i) * wo + j
                col = 0
                for ch in range(c):
                    for u in range(kh):
                        for v in range(kw):
                            out[b, ch, i * stride + u, j * stride + v] += cols[row, col]
                            col += 1
    return out


def _maxpool_fwd_loops(x, ph, pw, stride, ho, wo, pad_top, pad_left):
    n, c, h, w = x.shape
    out = np.empty((n, c, ho, wo), dtype=x.dtype)
    arg = np.empty((n, c, ho, wo), dtype=np.int64)
    for b in range(n):
        for ch in range(c):
            base = (b * c + ch) * h * w
            for i in range(ho):
                for j in range(wo):
                    best = -np.inf
                    best_idx = -1
                    for u in range(ph):
                        r = i * stride + u - pad_top
                        if r < 0 or r >= h:
                            continue
                        for v in range(pw):
                            q = j * stride + v - pad_left
                            if q < 0 or q >= w:
                                continue
                            val = x[b, ch, r, q]
                            if best_idx < 0 or val > best:
                                best = val
                                best_idx = base + r * w + q
                    out[b, ch, i, j] = best
                    arg[b, ch, i, j] = best_idx
    return out, arg


def _maxpool_bwd_loops(grad_out, argidx, size):
    flat = np.zeros(size, dtype=grad_out.dtype)
    g = grad_out.ravel()
    a = argidx.ravel()
    for k in range(g.size):
        flat[a[k]] += g[k]
    return flat


NUMPY_KERNELS = {
    "im2col": _im2col_np,
    "col2im": _col2im_np,
    "maxpool_fwd": _maxpool_fwd_np,
    "maxpool_bwd": _maxpool_bwd_np,
}

if HAVE_NUMBA:
    NUMBA_KERNELS = {
        "im2col": njit(cache=True)(_im2col_loops),
        "col2im": njit(cache=True)(_col2im_loops),
        "maxpool_fwd": njit(cache=True)(_maxpool_fwd_loops),
        "maxpool_bwd": njit(cache=True)(_maxpool_bwd_loops),
    }
else:  # pragma: no cover
    NUMBA_KERNELS = None

_active = "numba" if HAVE_NUMBA and not _DISABLED else "numpy"


def backend() -> str:
    return _active


def set_backend(name: str) -> str:
    """Switch kernels at runtime; returns the previous backend name."""
    global _active
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    prev, _active = _active, name
    return prev


def _table():
    return NUMBA_KERNELS if _active == "numba" else NUMPY_KERNELS


def im2col(xp, kh, kw, stride, ho, wo):
    return _table()["im2col"](np.ascontiguousarray(xp), kh, kw, stride, ho, wo)


def col2im(cols, n, c, hp, wp, kh, kw, stride, ho, wo):
    return _table()["col2im"](np.ascontiguousarray(cols), n, c, hp, wp, kh, kw, stride, ho, wo)


def maxpool_forward(x, ph, pw, stride, ho, wo, pad_top, pad_left):
    return _table()["maxpool_fwd"](np.ascontiguousarray(x), ph, pw, stride, ho, wo, pad_top, pad_left)


def maxpool_backward(grad_out, argidx, size):
    return _table()["maxpool_bwd"](np.ascontiguousarray(grad_out), np.ascontiguousarray(argidx), size)
