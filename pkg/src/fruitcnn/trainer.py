"""Training loop, evaluation and per-epoch history."""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import nn
from .data import Dataset, batches
from .network import Network
from .optim import LrSchedule, lr_on_epoch_end
from .tensor import Prng

STREAM_DROPOUT = 20
HISTORY_FIELDS = ("epoch", "train_loss", "train_acc", "test_loss", "test_acc", "lr", "seconds")


class TrainingDiverged(FloatingPointError):
    def __init__(self, epoch: int, batch: int, loss: float):
        super().__init__(f"non-finite loss {loss} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


@dataclass
class TrainConfig:
    epochs: int = 15
    batch_size: int = 15
    eta: float = 0.002
    seed: int = 0
    deterministic: bool = False
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr_factor: float = 0.5
    lr_patience: int = 3
    min_lr: float = 1e-5
    eval_batch: int = 128

    def schedule(self) -> LrSchedule:
        return LrSchedule(self.lr_factor, self.lr_patience, self.min_lr)

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    test_loss: float
    test_acc: float
    lr: float
    seconds: float


@dataclass
class TrainHistory:
    rows: list[EpochRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> list[float]:
        return [getattr(r, name) for r in self.rows]

    def to_csv(self, zero_seconds: bool = False) -> str:
        """CSV text; ``zero_seconds`` blanks wall times so reruns compare byte for byte."""
        buf = io.StringIO()
        buf.write(",".join(HISTORY_FIELDS) + "\n")
        for r in self.rows:
            secs = 0.0 if zero_seconds else r.seconds
            vals = [r.train_loss, r.train_acc, r.test_loss, r.test_acc, r.lr, secs]
            buf.write(f"{r.epoch}," + ",".join(f"{v:.6g}" for v in vals) + "\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "TrainHistory":
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != HISTORY_FIELDS:
            raise ValueError(f"row 1: expected header {','.join(HISTORY_FIELDS)}")
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(HISTORY_FIELDS):
                raise ValueError(f"row {lineno}: expected {len(HISTORY_FIELDS)} fields, got {len(rec)}")
            try:
                vals = [float(v) for v in rec]
            except ValueError:
                raise ValueError(f"row {lineno}: non-numeric field") from None
            if not all(math.isfinite(v) for v in vals):
                raise ValueError(f"row {lineno}: non-finite value")
            rows.append(EpochRecord(int(vals[0]), *vals[1:]))
        if not rows:
            raise ValueError("history holds no epochs")
        return cls(rows)

    def as_rows(self, zero_seconds: bool = False) -> list[dict]:
        out = []
        for r in self.rows:
            d = asdict(r)
            if zero_seconds:
                d["seconds"] = 0.0
            out.append(d)
        return out


@dataclass
class TrainState:
    """Everything needed to continue a run: counters, schedule and history."""

    epoch: int = 0
    eta: float = 0.002
    schedule: LrSchedule = field(default_factory=LrSchedule)
    history: TrainHistory = field(default_factory=TrainHistory)


def predict_proba(net: Network, x: np.ndarray, chunk: int = 128) -> np.ndarray:
    out = []
    for i in range(0, len(x), chunk):
        logits, _ = net.forward(x[i : i + chunk], train=False)
        out.append(nn.softmax(logits))
    return np.concatenate(out)


def evaluate(net: Network, ds: Dataset, chunk: int = 128) -> tuple[float, float]:
    """Mean cross-entropy and accuracy of ``net`` on ``ds`` with dropout off."""
    if len(ds) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    if ds.num_classes != net.spec.num_classes:
        raise ValueError(f"dataset has {ds.num_classes} classes, network {net.spec.num_classes}")
    total_loss = 0.0
    correct = 0
    for i in range(0, len(ds), chunk):
        probs = predict_proba(net, ds.images[i : i + chunk], chunk)
        labels = ds.labels[i : i + chunk]
        p_true = np.clip(probs[np.arange(len(labels)), labels].astype(np.float64), 1e-12, 1.0)
        total_loss -= float(np.log(p_true).sum())
        correct += int((probs.argmax(axis=1) == labels).sum())
    return total_loss / len(ds), correct / len(ds)


def train_step(net: Network, x: np.ndarray, t: np.ndarray, eta: float, prng: Prng) -> float:
    logits, caches = net.forward(x, train=True, prng=prng)
    loss = nn.xent_unchecked(nn.softmax(logits), t)
    if not math.isfinite(loss):
        return loss
    grads = net.backward(nn.softmax_xent_grad(logits, t), caches)
    net.adam_update(grads, eta)
    return loss


def train(net: Network, train_ds: Dataset, test_ds: Dataset, cfg: TrainConfig,
          state: TrainState | None = None,
          on_epoch: Callable[[EpochRecord, TrainState], None] | None = None) -> TrainHistory:
    """Run ``cfg.epochs`` epochs (continuing from ``state`` when given).

    Each epoch shuffles, steps Adam once per mini-batch, then evaluates both
    sets in eval mode and feeds test accuracy to the plateau schedule.
    """
    if len(train_ds) == 0 or len(test_ds) == 0:
        raise ValueError("train and test sets must be non-empty")
    for ds in (train_ds, test_ds):
        if ds.num_classes != net.spec.num_classes:
            raise ValueError(f"dataset has {ds.num_classes} classes, network {net.spec.num_classes}")
    if state is None:
        state = TrainState(0, cfg.eta, cfg.schedule(), TrainHistory())
    for st in net.adam:
        st.beta1, st.beta2, st.eps = cfg.beta1, cfg.beta2, cfg.eps

    while state.epoch < cfg.epochs:
        epoch = state.epoch + 1
        start = time.perf_counter()
        drop_prng = Prng(cfg.seed, (STREAM_DROPOUT, epoch))
        it = batches(train_ds, cfg.batch_size, epoch, cfg.seed, net.dtype)
        for b, (x, t) in enumerate(it, start=1):
            loss = train_step(net, x, t, state.eta, drop_prng)
            if not math.isfinite(loss):
                raise TrainingDiverged(epoch, b, loss)
        train_loss, train_acc = evaluate(net, train_ds, cfg.eval_batch)
        test_loss, test_acc = evaluate(net, test_ds, cfg.eval_batch)
        rec = EpochRecord(epoch, train_loss, train_acc, test_loss, test_acc, state.eta,
                          time.perf_counter() - start)
        state.history.rows.append(rec)
        state.eta, state.schedule = lr_on_epoch_end(state.schedule, state.eta, test_acc)
        state.epoch = epoch
        if on_epoch is not None:
            on_epoch(rec, state)
    return state.history
