"""Array helpers, seeded random streams and the FNT1 dump format.

Tensors are plain ``numpy.ndarray`` objects in C (row-major) order. Image
batches use NCHW layout. Precision is carried by the array dtype: ``single``
(float32) for training and ``double`` (float64) for gradient checks.
"""

from __future__ import annotations

import io
import struct
from typing import BinaryIO, Sequence

import numpy as np

WIDTHS = {"single": np.float32, "double": np.float64}
_WIDTH_CODES = {4: np.dtype("<f4"), 8: np.dtype("<f8")}
FNT1_MAGIC = b"FNT1"

_INDEX_MAX = np.iinfo(np.intp).max


class ShapeError(ValueError):
    pass


def dtype_for(width: str) -> np.dtype:
    try:
        return np.dtype(WIDTHS[width])
    except KeyError:
        raise ValueError(f"unknown precision {width!r}; expected 'single' or 'double'") from None


def check_shape(shape: Sequence[int]) -> tuple[int, ...]:
    """Validate extents and return the shape as a tuple.

    Every extent must be a positive integer and the element count must fit
    the platform index type.
    """
    dims = tuple(int(d) for d in shape)
    if not dims:
        raise ShapeError("shape must have at least one dimension")
    count = 1
    for d in dims:
        if d < 1:
            raise ShapeError(f"invalid extent {d} in shape {list(dims)}")
        count *= d
        if count > _INDEX_MAX:
            raise ShapeError(f"element count of shape {list(dims)} overflows the index type")
    return dims


def new_tensor(shape: Sequence[int], fill: float = 0.0, width: str = "double") -> np.ndarray:
    return np.full(check_shape(shape), fill, dtype=dtype_for(width))


def elementwise(op: str, a: np.ndarray, b) -> np.ndarray:
    """Apply ``add``, ``sub``, ``mul`` or ``scale`` without broadcasting.

    Tensor-tensor ops require identical shapes; ``scale`` takes a scalar.
    """
    a = np.asarray(a)
    if op == "scale":
        if np.ndim(b) != 0:
            raise ShapeError("scale expects a scalar factor")
        return a * a.dtype.type(b)
    b = np.asarray(b)
    if b.ndim == 0:
        b = np.full_like(a, b)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {list(a.shape)} vs {list(b.shape)}")
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    raise ValueError(f"unknown elementwise op {op!r}")


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {list(a.shape)} and {list(b.shape)}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {list(a.shape)} x {list(b.shape)}")
    return a @ b


class Prng:
    """Counter-based random stream (Philox-4x64 keyed through SeedSequence).

    A stream is identified by ``seed`` plus an optional tuple of integer
    stream ids, so ``Prng(7).spawn(3)`` and ``Prng(7, (3,))`` produce the same
    numbers. Streams never share state; give each consumer its own.
    """

    algorithm = "philox4x64-10"

    def __init__(self, seed: int, stream: Sequence[int] = ()):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.stream = tuple(int(s) for s in stream)
        seq = np.random.SeedSequence([self.seed, *self.stream])
        self._gen = np.random.Generator(np.random.Philox(seq))

    def spawn(self, *ids: int) -> "Prng":
        return Prng(self.seed, self.stream + tuple(ids))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def random(self, shape, dtype=np.float64) -> np.ndarray:
        return self._gen.random(shape, dtype=dtype)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def integers(self, lo: int, hi: int, size=None):
        return self._gen.integers(lo, hi, size=size)

    def normal(self, size, scale: float = 1.0) -> np.ndarray:
        return self._gen.normal(0.0, scale, size=size)

    def get_state(self) -> dict:
        st = self._gen.bit_generator.state
        inner = st["state"]
        return {
            "seed": self.seed,
            "stream": list(self.stream),
            "counter": [int(v) for v in inner["counter"]],
            "key": [int(v) for v in inner["key"]],
            "buffer": [int(v) for v in st["buffer"]],
            "buffer_pos": int(st["buffer_pos"]),
            "has_uint32": int(st["has_uint32"]),
            "uinteger": int(st["uinteger"]),
        }

    @classmethod
    def from_state(cls, state: dict) -> "Prng":
        prng = cls(state["seed"], state["stream"])
        prng._gen.bit_generator.state = {
            "bit_generator": "Philox",
            "state": {
                "counter": np.array(state["counter"], dtype=np.uint64),
                "key": np.array(state["key"], dtype=np.uint64),
            },
            "buffer": np.array(state["buffer"], dtype=np.uint64),
            "buffer_pos": state["buffer_pos"],
            "has_uint32": state["has_uint32"],
            "uinteger": state["uinteger"],
        }
        return prng


def uniform_fill(prng: Prng, shape: Sequence[int], lo: float, hi: float,
                 width: str = "double") -> np.ndarray:
    """Draw i.i.d. U[lo, hi) samples in the requested precision."""
    if not lo < hi:
        raise ValueError(f"uniform_fill needs lo < hi, got lo={lo}, hi={hi}")
    shape = check_shape(shape)
    dtype = dtype_for(width)
    u = prng.random(shape)  # float64 in [0, 1)
    out = (lo + (hi - lo) * u).astype(dtype)
    # rounding to the target width can land exactly on hi
    top = np.nextafter(dtype.type(hi), dtype.type(lo))
    return np.minimum(out, top)


def write_tensor(fh: BinaryIO, t: np.ndarray) -> None:
    """Write one tensor in FNT1 layout.

    ``"FNT1"``, width byte (4|8), rank byte, rank x u32 LE dims, then the raw
    little-endian elements in row-major order.
    """
    t = np.asarray(t)
    code = t.dtype.itemsize
    if t.dtype.kind != "f" or code not in _WIDTH_CODES:
        raise TypeError(f"cannot dump dtype {t.dtype}")
    if t.ndim > 255:
        raise ShapeError("rank above 255 not representable")
    fh.write(FNT1_MAGIC)
    fh.write(struct.pack("<BB", code, t.ndim))
    fh.write(struct.pack(f"<{t.ndim}I", *t.shape))
    fh.write(np.ascontiguousarray(t, dtype=_WIDTH_CODES[code]).tobytes())


def _read_exact(fh: BinaryIO, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise EOFError(f"truncated tensor stream: wanted {n} bytes, got {len(buf)}")
    return buf


def read_tensor(fh: BinaryIO) -> np.ndarray:
    magic = _read_exact(fh, 4)
    if magic != FNT1_MAGIC:
        raise ValueError(f"bad tensor magic {magic!r}")
    code, rank = struct.unpack("<BB", _read_exact(fh, 2))
    if code not in _WIDTH_CODES:
        raise ValueError(f"bad width code {code}")
    dims = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank)) if rank else ()
    shape = check_shape(dims) if rank else ()
    dt = _WIDTH_CODES[code]
    count = int(np.prod(shape, dtype=np.int64)) if rank else 1
    data = np.frombuffer(_read_exact(fh, count * dt.itemsize), dtype=dt)
    return data.reshape(shape).astype(dt.newbyteorder("="))


def dumps(t: np.ndarray) -> bytes:
    buf = io.BytesIO()
    write_tensor(buf, t)
    return buf.getvalue()


def loads(raw: bytes) -> np.ndarray:
    return read_tensor(io.BytesIO(raw))
