import numpy as np
import pytest

from fruitcnn.checkpoint import CheckpointError, dumps, load_checkpoint, loads, save_checkpoint
from fruitcnn.network import build_case
from fruitcnn.tensor import read_tensor
from fruitcnn.trainer import TrainConfig, TrainState

import io
import json
import struct


@pytest.fixture
def net():
    n = build_case(5, 3, seed=1, input_shape=(3, 8, 8), filters=4, hidden=6)
    # give the moment buffers distinctive values
    for st in n.adam:
        st.n = st.n + 0.25
        st.s = st.s + 0.5
        st.t = 9
    return n


def test_round_trip_bit_exact(tmp_path, net):
    cfg = TrainConfig(seed=3)
    state = TrainState(4, 0.001)
    path = save_checkpoint(net, cfg, state, ["a", "b", "c"], tmp_path / "ck.frck")
    ck = load_checkpoint(path)
    for a, b in zip(net.parameters(), ck.net.parameters()):
        assert a.tobytes() == b.tobytes() and a.dtype == b.dtype
    for a, b in zip(net.adam, ck.net.adam):
        assert a.n.tobytes() == b.n.tobytes() and a.s.tobytes() == b.s.tobytes() and b.t == 9
    assert ck.class_names == ["a", "b", "c"]
    assert ck.state.epoch == 4 and ck.state.eta == 0.001
    assert ck.config == cfg
    assert repr(ck.net) == repr(net)


def test_layout(net):
    raw = dumps(net, TrainConfig(), TrainState(), ["a", "b", "c"])
    assert raw[:4] == b"FRCK"
    version, hlen = struct.unpack("<II", raw[4:12])
    assert version == 1
    header = json.loads(raw[12 : 12 + hlen].decode("utf-8"))
    assert header["network"]["case_id"] == 5
    assert header["prng"]["algorithm"].startswith("philox")
    fh = io.BytesIO(raw[12 + hlen :])
    first = read_tensor(fh)
    assert first.tobytes() == net.parameters()[0].tobytes()


def test_truncated_and_corrupt(net):
    raw = dumps(net, TrainConfig(), TrainState(), ["a", "b", "c"])
    for cut in (3, 10, 30, len(raw) - 1):
        with pytest.raises(CheckpointError):
            loads(raw[:cut])
    with pytest.raises(CheckpointError, match="magic"):
        loads(b"XXXX" + raw[4:])
    with pytest.raises(CheckpointError, match="version"):
        loads(raw[:4] + struct.pack("<I", 99) + raw[8:])
    with pytest.raises(CheckpointError):
        loads(raw + b"\0")


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "none.frck")
