"""Time the numba kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--batch 15] [--size 100] [--repeat 5]

Shapes follow the first conv/pool stage of a case network on RGB input.
Each numba kernel is called once before timing so JIT compilation is excluded.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from fruitcnn import _kernels, nn
from fruitcnn.tensor import Prng, uniform_fill


def _cases(batch: int, size: int, filters: int):
    prng = Prng(0, (99,))
    x = uniform_fill(prng, (batch, 3, size, size), -1, 1, "single")
    conv = nn.Conv2D(uniform_fill(prng, (filters, 3, 3, 3), -0.3, 0.3, "single"),
                     np.zeros(filters, np.float32))
    act = uniform_fill(prng, (batch, filters, size, size), -1, 1, "single")
    pool = nn.MaxPool2D()

    ho = wo = size
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols = _kernels.im2col(xp, 3, 3, 1, ho, wo)
    y, cache = conv.forward(x)
    p, pcache = pool.forward(act)
    gp = np.ones_like(p)

    def conv_bwd():
        _, c = conv.forward(x)
        conv.backward(y, c)

    def pool_bwd():
        _, c = pool.forward(act)
        pool.backward(gp, c)

    return {
        "im2col": lambda: _kernels.im2col(xp, 3, 3, 1, ho, wo),
        "col2im": lambda: _kernels.col2im(cols, batch, 3, size + 2, size + 2, 3, 3, 1, ho, wo),
        "maxpool fwd": lambda: pool.forward(act),
        "maxpool fwd+bwd": pool_bwd,
        "conv fwd": lambda: conv.forward(x),
        "conv fwd+bwd": conv_bwd,
    }


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=15)
    ap.add_argument("--size", type=int, default=100)
    ap.add_argument("--filters", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    backends = ["numpy"] + (["numba"] if _kernels.HAVE_NUMBA else [])
    results: dict[str, dict[str, float]] = {}
    previous = _kernels.backend()
    try:
        for name in backends:
            _kernels.set_backend(name)
            for label, fn in _cases(args.batch, args.size, args.filters).items():
                fn()  # warm-up / JIT compile
                best = min(timeit.repeat(fn, number=1, repeat=args.repeat))
                results.setdefault(label, {})[name] = best
    finally:
        _kernels.set_backend(previous)

    print(f"batch {args.batch}, {args.size}x{args.size}, {args.filters} filters, best of {args.repeat}")
    print(f"{'kernel':<18}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}")
    for label, t in results.items():
        nb = t.get("numba")
        row = f"{label:<18}{t['numpy'] * 1e3:>10.2f}"
        row += f"{nb * 1e3:>10.2f}{t['numpy'] / nb:>8.2f}x" if nb else f"{'n/a':>10}"
        print(row)


if __name__ == "__main__":
    main()
