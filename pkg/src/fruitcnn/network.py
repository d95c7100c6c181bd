"""Case networks: layer stacks, parameter bookkeeping and the full forward pass."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .optim import AdamState, adam_step
from .tensor import Prng, ShapeError, dtype_for

STREAM_INIT = 10
CASES = (1, 2, 3, 4, 5)
DEFAULT_INPUT = (3, 100, 100)


def case_layers(case_id: int, num_classes: int, filters: int = 64, hidden: int = 500) -> list[dict]:
    """Layer descriptors for one of the five experiment cases.

    1: conv-pool-conv-pool, no dropout
    2: conv-conv-pool-pool, no dropout
    3: conv-conv-pool-pool, dropout 0.25 after the last pool and 0.5 after FC1
    4: conv-pool-conv-pool, dropout 0.25 after the last pool and 0.5 after FC1
    5: conv-pool-conv-pool, dropout 0.25 after each pool and 0.5 after FC1
    """
    if case_id not in CASES:
        raise ValueError(f"unknown case {case_id!r}; valid cases are {list(CASES)}")
    conv = [{"kind": "conv", "filters": filters, "kernel": 3, "stride": 1}, {"kind": "relu"}]
    pool = [{"kind": "pool", "size": 2, "stride": 2}]

    def drop(p):
        return [{"kind": "dropout", "p": p}]

    if case_id == 1:
        body = conv + pool + conv + pool
    elif case_id == 2:
        body = conv + conv + pool + pool
    elif case_id == 3:
        body = conv + conv + pool + pool + drop(0.25)
    elif case_id == 4:
        body = conv + pool + conv + pool + drop(0.25)
    else:
        body = conv + pool + drop(0.25) + conv + pool + drop(0.25)
    head = [{"kind": "flatten"}, {"kind": "dense", "units": hidden}, {"kind": "relu"}]
    if case_id >= 3:
        head += drop(0.5)
    head.append({"kind": "dense", "units": num_classes})
    return body + head


@dataclass
class NetworkSpec:
    case_id: int
    num_classes: int = 25
    input_shape: tuple[int, int, int] = DEFAULT_INPUT
    filters: int = 64
    hidden: int = 500
    width: str = "single"
    layers: list[dict] = field(default_factory=list)

    def __post_init__(self):
        self.input_shape = tuple(int(d) for d in self.input_shape)
        if not self.layers:
            self.layers = case_layers(self.case_id, self.num_classes, self.filters, self.hidden)

    def as_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "num_classes": self.num_classes,
            "input_shape": list(self.input_shape),
            "filters": self.filters,
            "hidden": self.hidden,
            "width": self.width,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        return cls(d["case_id"], d["num_classes"], tuple(d["input_shape"]), d["filters"], d["hidden"], d["width"])


def _describe(layer) -> str:
    if isinstance(layer, nn.Conv2D):
        f, c, kh, kw = layer.weights.shape
        return f"Conv({f},{kh}x{kw})"
    if isinstance(layer, nn.MaxPool2D):
        return f"Pool({layer.pool[0]}x{layer.pool[1]},s{layer.stride})"
    if isinstance(layer, nn.Dropout):
        return f"Dropout({layer.p:g})"
    if isinstance(layer, nn.Dense):
        return f"Dense({layer.weights.shape[0]})"
    return type(layer).__name__


class Network:
    """Instantiated layers plus one Adam state per parameter tensor."""

    def __init__(self, spec: NetworkSpec, layers: list[nn.Layer], adam: list[AdamState] | None = None):
        self.spec = spec
        self.layers = layers
        self.dtype = dtype_for(spec.width)
        shape = spec.input_shape
        self.shapes = [shape]
        for layer in layers:
            shape = layer.output_shape(shape)
            self.shapes.append(shape)
        if shape != (spec.num_classes,):
            raise ShapeError(f"network ends in {list(shape)}, expected [{spec.num_classes}]")
        self.adam = adam if adam is not None else [AdamState.zeros_like(p) for p in self.parameters()]

    def __repr__(self) -> str:
        return " -> ".join(_describe(layer) for layer in self.layers)

    def param_slots(self) -> list[tuple[int, str]]:
        return [(i, name) for i, layer in enumerate(self.layers) for name in layer.param_names]

    def param_labels(self) -> list[str]:
        return [f"{i}:{_describe(self.layers[i])}.{name}" for i, name in self.param_slots()]

    def parameters(self) -> list[np.ndarray]:
        return [getattr(self.layers[i], name) for i, name in self.param_slots()]

    def set_parameters(self, values) -> None:
        for (i, name), v in zip(self.param_slots(), values, strict=True):
            setattr(self.layers[i], name, v)

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def forward(self, x: np.ndarray, train: bool = False, prng: Prng | None = None):
        """Return ``(logits, caches)``."""
        if tuple(x.shape[1:]) != self.spec.input_shape:
            raise ShapeError(f"input shape {list(x.shape[1:])} != network input {list(self.spec.input_shape)}")
        caches = []
        out = x.astype(self.dtype, copy=False)
        for layer in self.layers:
            out, cache = layer.forward(out, train=train, prng=prng)
            caches.append(cache)
        return out, caches

    def backward(self, grad_logits: np.ndarray, caches) -> list[np.ndarray]:
        """Backpropagate; returns gradients aligned with ``parameters()``."""
        per_layer = [()] * len(self.layers)
        g = grad_logits
        for i in range(len(self.layers) - 1, -1, -1):
            g, pgrads = self.layers[i].backward(g, caches[i])
            per_layer[i] = pgrads
        return [gr for pg in per_layer for gr in pg]

    def adam_update(self, grads, eta: float) -> None:
        labels = self.param_labels()
        new_params, new_states = [], []
        for w, g, st, label in zip(self.parameters(), grads, self.adam, labels, strict=True):
            st.eta = eta
            w2, st2 = adam_step(st, w, g.astype(w.dtype, copy=False), name=label)
            new_params.append(w2)
            new_states.append(st2)
        self.set_parameters(new_params)
        self.adam = new_states


def _make_layer(desc: dict, in_shape, prng: Prng, width: str) -> nn.Layer:
    kind = desc["kind"]
    if kind == "conv":
        c = in_shape[0]
        k = desc["kernel"]
        fan_in = c * k * k
        w = nn.lecun_uniform(prng, (desc["filters"], c, k, k), fan_in, width)
        return nn.Conv2D(w, np.zeros(desc["filters"], dtype=w.dtype), stride=desc.get("stride", 1))
    if kind == "dense":
        fan_in = in_shape[0]
        w = nn.lecun_uniform(prng, (desc["units"], fan_in), fan_in, width)
        return nn.Dense(w, np.zeros(desc["units"], dtype=w.dtype))
    if kind == "pool":
        return nn.MaxPool2D((desc["size"], desc["size"]), desc["stride"])
    if kind == "relu":
        return nn.ReLU()
    if kind == "dropout":
        return nn.Dropout(desc["p"])
    if kind == "flatten":
        return nn.Flatten()
    raise ValueError(f"unknown layer kind {kind!r}")


def build_network(spec: NetworkSpec, seed: int = 0) -> Network:
    layers = []
    shape = spec.input_shape
    for i, desc in enumerate(spec.layers):
        layer = _make_layer(desc, shape, Prng(seed, (STREAM_INIT, i)), spec.width)
        shape = layer.output_shape(shape)
        layers.append(layer)
    return Network(spec, layers)


def build_case(case_id: int, num_classes: int = 25, seed: int = 0, *, input_shape=DEFAULT_INPUT,
               width: str = "single", filters: int = 64, hidden: int = 500) -> Network:
    """Instantiate case ``case_id`` with LeCun-uniform weights and zero biases."""
    spec = NetworkSpec(case_id, num_classes, tuple(input_shape), filters, hidden, width)
    return build_network(spec, seed)


def forward_full(net: Network, x: np.ndarray, mode: str = "eval", prng: Prng | None = None):
    """Return ``(logits, probs, caches)``; ``mode`` is ``"train"`` or ``"eval"``."""
    if mode not in ("train", "eval"):
        raise ValueError("mode must be 'train' or 'eval'")
    logits, caches = net.forward(x, train=(mode == "train"), prng=prng)
    return logits, nn.softmax(logits), caches
