"""FRCK checkpoint files.

Layout: ``b"FRCK"``, u32 version, u32 header length (little-endian), a UTF-8
JSON header, then every parameter tensor in layer order followed by the Adam
first and second moments for each parameter, all in FNT1 format.
"""

from __future__ import annotations

import io
import json
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

from .network import Network, NetworkSpec, build_network
from .optim import AdamState, LrSchedule
from .tensor import Prng, read_tensor, write_tensor
from .trainer import EpochRecord, TrainConfig, TrainHistory, TrainState, STREAM_DROPOUT

MAGIC = b"FRCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    net: Network
    config: TrainConfig
    state: TrainState
    class_names: list[str]


def _header(net: Network, cfg: TrainConfig, state: TrainState, class_names) -> dict:
    return {
        "format": "fruitcnn-checkpoint",
        "network": net.spec.as_dict(),
        "class_names": list(class_names),
        "config": cfg.as_dict(),
        "epoch": state.epoch,
        "eta": state.eta,
        "schedule": state.schedule.as_dict(),
        "adam_steps": [st.t for st in net.adam],
        "prng": {
            "algorithm": Prng.algorithm,
            "seed": cfg.seed,
            "dropout_stream": [STREAM_DROPOUT, state.epoch + 1],
        },
        "history": state.history.as_rows(zero_seconds=cfg.deterministic),
    }


def dumps(net: Network, cfg: TrainConfig, state: TrainState, class_names) -> bytes:
    header = json.dumps(_header(net, cfg, state, class_names), sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<II", VERSION, len(header)))
    buf.write(header)
    for p in net.parameters():
        write_tensor(buf, p)
    for st in net.adam:
        write_tensor(buf, st.n)
        write_tensor(buf, st.s)
    return buf.getvalue()


def save_checkpoint(net: Network, cfg: TrainConfig, state: TrainState, class_names, path) -> Path:
    """Write atomically (temp file + rename)."""
    path = Path(path)
    raw = dumps(net, cfg, state, class_names)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(raw)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def loads(raw: bytes) -> Checkpoint:
    fh = io.BytesIO(raw)
    if fh.read(4) != MAGIC:
        raise CheckpointError("not a checkpoint: bad magic")
    head = fh.read(8)
    if len(head) != 8:
        raise CheckpointError("truncated checkpoint header")
    version, hlen = struct.unpack("<II", head)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    blob = fh.read(hlen)
    if len(blob) != hlen:
        raise CheckpointError("truncated checkpoint header")
    try:
        h = json.loads(blob.decode("utf-8"))
        spec = NetworkSpec.from_dict(h["network"])
        cfg = TrainConfig(**h["config"])
        sched = LrSchedule(**h["schedule"])
        history = TrainHistory([EpochRecord(**r) for r in h["history"]])
        steps = h["adam_steps"]
    except (UnicodeDecodeError, ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"malformed checkpoint header: {exc}") from exc

    net = build_network(spec, seed=0)
    try:
        params = [read_tensor(fh) for _ in net.parameters()]
        moments = [(read_tensor(fh), read_tensor(fh)) for _ in params]
    except (EOFError, ValueError) as exc:
        raise CheckpointError(f"truncated or corrupt tensor data: {exc}") from exc
    if fh.read(1):
        raise CheckpointError("trailing bytes after tensor data")
    for p_new, p_old in zip(params, net.parameters()):
        if p_new.shape != p_old.shape or p_new.dtype != p_old.dtype:
            raise CheckpointError(f"parameter {list(p_new.shape)} does not match network layout {list(p_old.shape)}")
    if len(steps) != len(params):
        raise CheckpointError("adam step list does not match parameter count")
    net.set_parameters(params)
    net.adam = [AdamState(n, s, t, h["eta"], cfg.beta1, cfg.beta2, cfg.eps)
                for (n, s), t in zip(moments, steps)]
    state = TrainState(h["epoch"], h["eta"], sched, history)
    return Checkpoint(net, cfg, state, h["class_names"])


def load_checkpoint(path) -> Checkpoint:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return loads(raw)
