import numpy as np
import pytest

from fruitcnn import nn
from fruitcnn.data import one_hot, synth_dataset
from fruitcnn.gradcheck import gradient_check, relative_error
from fruitcnn.network import CASES, build_case


def _batch(n=2, size=16, classes=4):
    ds = synth_dataset(classes, 1, size, seed=0)
    return ds.images[:n].astype(np.float64), one_hot(ds.labels[:n], classes, np.float64)


def test_relative_error():
    assert relative_error(0.0, 0.0) == 0.0
    assert relative_error(1.0, 1.1) == pytest.approx(0.1 / 1.1)


@pytest.mark.parametrize("case", CASES)
def test_fresh_case_networks_pass(case):
    net = build_case(case, 4, seed=2, input_shape=(3, 16, 16), width="double")
    x, t = _batch()
    report = gradient_check(net, x, t, eps=1e-5)
    assert report.max_rel_error < 1e-5
    assert all(n >= min(50, p.size) - 5 for n, p in zip(report.checked.values(), net.parameters()))


def test_requires_double():
    net = build_case(1, 4, seed=0, input_shape=(3, 8, 8))
    with pytest.raises(ValueError):
        gradient_check(net, *_batch(size=8))


def test_degenerate_zero_batch_is_finite():
    net = build_case(4, 4, seed=0, input_shape=(3, 8, 8), width="double")
    report = gradient_check(net, np.zeros((2, 3, 8, 8)), np.zeros((2, 4)))
    assert np.isfinite(report.max_rel_error)


def test_detects_sign_flipped_dense_backward(monkeypatch):
    original = nn.Dense.backward

    def broken(self, grad_out, cache):
        gi, (gw, gb) = original(self, grad_out, cache)
        return gi, (-gw, gb)

    monkeypatch.setattr(nn.Dense, "backward", broken)
    net = build_case(1, 4, seed=0, input_shape=(3, 8, 8), width="double", filters=4, hidden=8)
    assert gradient_check(net, *_batch(size=8)).max_rel_error > 0.1
