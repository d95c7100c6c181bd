import numpy as np
import pytest

from fruitcnn import nn
from fruitcnn.network import CASES, build_case, case_layers, forward_full
from fruitcnn.tensor import Prng, ShapeError


def kinds(net):
    return [type(layer).__name__ for layer in net.layers]


def test_case4_reference_stack():
    net = build_case(4, 25, seed=0)
    assert repr(net) == ("Conv(64,3x3) -> ReLU -> Pool(2x2,s2) -> Conv(64,3x3) -> ReLU -> Pool(2x2,s2) -> "
                         "Dropout(0.25) -> Flatten -> Dense(500) -> ReLU -> Dropout(0.5) -> Dense(25)")


def test_full_size_shape_pipeline():
    net = build_case(4, 25, seed=0)
    convs = [s for layer, s in zip(net.layers, net.shapes[1:]) if not isinstance(layer, (nn.ReLU, nn.Dropout))]
    assert convs == [(64, 100, 100), (64, 50, 50), (64, 50, 50), (64, 25, 25), (40_000,), (500,), (25,)]


def test_case1_is_case4_without_dropout():
    a = [k for k in kinds(build_case(4, 5, 0, input_shape=(3, 8, 8), filters=2, hidden=4)) if k != "Dropout"]
    assert a == kinds(build_case(1, 5, 0, input_shape=(3, 8, 8), filters=2, hidden=4))


@pytest.mark.parametrize("case,expected", [
    (2, ["conv", "relu", "conv", "relu", "pool", "pool"]),
    (3, ["conv", "relu", "conv", "relu", "pool", "pool", "dropout"]),
    (5, ["conv", "relu", "pool", "dropout", "conv", "relu", "pool", "dropout"]),
])
def test_case_bodies(case, expected):
    descs = case_layers(case, 25)
    assert [d["kind"] for d in descs[: len(expected)]] == expected
    assert sum(d["kind"] == "dropout" and d["p"] == 0.5 for d in descs) == (1 if case >= 3 else 0)


@pytest.mark.parametrize("bad", [0, 6, -1])
def test_bad_case(bad):
    with pytest.raises(ValueError, match=r"\[1, 2, 3, 4, 5\]"):
        build_case(bad)


def test_lecun_uniform_init_and_seed():
    a = build_case(4, 5, seed=3, input_shape=(3, 16, 16))
    b = build_case(4, 5, seed=3, input_shape=(3, 16, 16))
    c = build_case(4, 5, seed=4, input_shape=(3, 16, 16))
    for pa, pb in zip(a.parameters(), b.parameters()):
        assert pa.tobytes() == pb.tobytes()
    assert a.parameters()[0].tobytes() != c.parameters()[0].tobytes()
    conv1_w, conv1_b = a.parameters()[:2]
    assert np.abs(conv1_w).max() <= np.sqrt(3 / 27)
    assert np.abs(conv1_w).max() > 0.9 * np.sqrt(3 / 27)
    assert not conv1_b.any()
    fc1_w = a.parameters()[4]
    assert np.abs(fc1_w).max() <= np.sqrt(3 / fc1_w.shape[1])


def test_forward_full_contract():
    net = build_case(4, 25, seed=0, input_shape=(3, 16, 16))
    x = np.random.default_rng(0).random((15, 3, 16, 16)).astype(np.float32)
    logits, probs, _ = forward_full(net, x, "eval")
    assert logits.shape == (15, 25)
    np.testing.assert_allclose(probs.sum(axis=1), 1, atol=1e-6)
    logits2, _, _ = forward_full(net, x, "eval")
    assert logits.tobytes() == logits2.tobytes()
    lt, _, _ = forward_full(net, x, "train", Prng(1))
    assert lt.tobytes() != logits.tobytes()


def test_forward_full_double_rows_sum_exactly():
    net = build_case(3, 4, seed=0, input_shape=(3, 8, 8), width="double")
    _, probs, _ = forward_full(net, np.random.default_rng(1).random((5, 3, 8, 8)))
    np.testing.assert_allclose(probs.sum(axis=1), 1, atol=1e-12)


def test_full_size_batch_logits_shape():
    net = build_case(4, 25, seed=0)
    logits, _, _ = forward_full(net, np.zeros((15, 3, 100, 100), np.float32))
    assert logits.shape == (15, 25)


def test_input_shape_mismatch():
    net = build_case(1, 3, seed=0, input_shape=(3, 8, 8))
    with pytest.raises(ShapeError):
        net.forward(np.zeros((1, 3, 9, 9)))
    with pytest.raises(ValueError):
        forward_full(net, np.zeros((1, 3, 8, 8)), "test")


@pytest.mark.parametrize("case", CASES)
def test_all_cases_build_at_reduced_size(case):
    net = build_case(case, 4, seed=0, input_shape=(3, 16, 16))
    assert net.shapes[-1] == (4,)
    assert len(net.adam) == len(net.parameters()) == 8
