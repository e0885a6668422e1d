import json
import os

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from midas import miae
from midas.errors import CorruptModel, InvalidArgument, ZeroResponseSensor
from midas.windowing import WindowDataset, normalize

DATA = os.path.join(os.path.dirname(__file__), "data")


def _toy(seed, n=3, gamma=0.3, reduction="mean", dims=None):
    rng = np.random.default_rng(seed)
    W = miae.build_weight_matrix(rng.uniform(1, 10, (n, 20))).W
    dims = dims or [2 * n, 5, 4, 4, 5, 2 * n]
    model = miae.init_model(dims, W, gamma=gamma, seed=seed, pair_reduction=reduction)
    x = rng.standard_normal((2, 4, 2 * n))
    return model, x


def _dataset(rng, b=40, n=3):
    base = rng.standard_normal((b, 12, 1)) * np.linspace(1, 2, 2 * n)
    return normalize(WindowDataset(base + 0.1 * rng.standard_normal((b, 12, 2 * n))))


# -- weights ------------------------------------------------------------------

@given(arrays(float, (4, 15), elements=st.floats(-1e3, 1e3)).filter(lambda a: np.all(np.abs(a).max(axis=1) > 0)))
def test_weight_matrix_properties(raw):
    W = miae.build_weight_matrix(raw).W
    np.testing.assert_array_equal(W, W.T)
    np.testing.assert_array_equal(np.diag(W), 1.0)
    assert np.all(W > 0) and np.all(W <= 1)


def test_weight_matrix_example():
    W = miae.build_weight_matrix(np.array([[1.0, -4.0], [2.0, 1.0]])).W
    np.testing.assert_allclose(W, [[1, 0.5], [0.5, 1]])


def test_zero_response_sensor():
    with pytest.raises(ZeroResponseSensor):
        miae.build_weight_matrix(np.array([[1.0, 2.0], [0.0, 0.0]]))


def test_center_scale():
    raw = np.array([[3.0], [3.0], [3.0]])
    W = miae.build_weight_matrix(raw, center_scale=1 / 3, center_mask=[False, True, False]).W
    assert W[0, 1] == pytest.approx(1 / 3)
    assert W[0, 2] == 1.0


def test_default_architecture():
    assert miae.default_architecture(45) == [90, 64, 32, 32, 64, 90]
    assert miae.default_architecture(4) == [8, 512, 256, 256, 512, 8]


# -- loss ---------------------------------------------------------------------

def test_loss_hand_example():
    # deltas (3, 0 | 0, 8), W_01 = 0.5: pair sum 2*0.5*(9 + 64) = 73
    W = np.array([[1.0, 0.5], [0.5, 1.0]])
    x = np.ones((1, 4))
    y = np.array([[2.0, 1.0, 1.0, 3.0]])
    mean_model = miae.init_model([4, 3, 4], W, gamma=0.1)
    sum_model = miae.init_model([4, 3, 4], W, gamma=0.1, pair_reduction="sum")
    got = miae.loss(mean_model, x, y)
    assert got.mse == pytest.approx(1.25)
    assert got.mechanics == pytest.approx(73 / 4)
    assert got.total == pytest.approx(1.25 + 0.1 * 73 / 4)
    assert miae.loss(sum_model, x, y).mechanics == pytest.approx(73.0)


@given(st.integers(0, 10_000), st.floats(0, 5))
def test_loss_decomposition(seed, gamma):
    model, x = _toy(seed, gamma=gamma)
    y = miae.forward(model, x)
    t = miae.loss(model, x, y)
    assert abs(t.total - (t.mse + gamma * t.mechanics)) <= 1e-12 * max(1.0, abs(t.total))


@given(st.integers(0, 10_000), st.floats(-5, 5))
def test_mechanics_zero_for_equal_deltas(seed, value):
    rng = np.random.default_rng(seed)
    W = miae.build_weight_matrix(rng.uniform(0.1, 10, (5, 8))).W
    deltas = np.full((3, 10), value)
    np.testing.assert_array_equal(miae.mechanics_term(deltas, W), 0.0)


def test_sensor_errors_average_two_channels():
    x = np.zeros((1, 2, 4))
    y = np.zeros((1, 2, 4))
    y[0, :, 0] = 2.0  # mu of sensor 0
    y[0, 0, 3] = 2.0  # sigma of sensor 1, one step
    np.testing.assert_allclose(miae.sensor_errors(x, y), [[2.0, 1.0]])


# -- gradients ----------------------------------------------------------------

@pytest.mark.parametrize("reduction", ["mean", "sum"])
@pytest.mark.parametrize("seed", range(5))
def test_gradient_check(seed, reduction):
    model, x = _toy(seed, reduction=reduction)
    assert miae.gradient_check(model, x) <= 1e-5


def test_gradient_check_mse_only():
    model, x = _toy(11, gamma=0.0)
    assert miae.gradient_check(model, x) <= 1e-5


# -- training -----------------------------------------------------------------

def test_training_reduces_loss(rng):
    ds = _dataset(rng)
    W = np.ones((3, 3))
    model = miae.train(ds, W, epochs=30, layer_dims=[6, 8, 4, 4, 8, 6], gamma=0.05)
    assert model.history[-1] < model.history[0]
    assert set(model.reference) == {"errors", "deltas", "sq_norm"}
    assert model.reference["errors"].shape == (40, 3)


def test_gamma_zero_ignores_mechanics_weights(rng):
    ds = _dataset(rng)
    kw = dict(epochs=5, layer_dims=[6, 8, 4, 4, 8, 6], gamma=0.0, seed=3)
    a = miae.train(ds, np.ones((3, 3)), **kw)
    b = miae.train(ds, np.array([[1, 0.2, 0.3], [0.2, 1, 0.9], [0.3, 0.9, 1]]), **kw)
    assert a.history == b.history
    for wa, wb in zip(a.weights, b.weights):
        assert wa.tobytes() == wb.tobytes()


def test_gamma_zero_matches_plain_autoencoder(rng):
    """An independent MSE-only Adam loop reproduces the gamma = 0 trajectory."""
    ds = _dataset(rng, b=20)
    dims = [6, 5, 6]
    model = miae.train(ds, np.ones((3, 3)), epochs=3, layer_dims=dims, gamma=0.0, seed=4, batch=8)
    ref = miae.init_model(dims, np.ones((3, 3)), gamma=0.0, seed=4)
    w = [p.copy() for p in ref.weights]
    b = [p.copy() for p in ref.biases]
    m = [np.zeros_like(p) for p in w + b]
    v = [np.zeros_like(p) for p in w + b]
    order_rng = np.random.default_rng(5)
    step = 0
    x_all = ds.tensor
    for _ in range(3):
        order = order_rng.permutation(len(x_all))
        for s in range(0, len(x_all), 8):
            x = x_all[order[s:s + 8]].reshape(-1, 6)
            h = np.tanh(x @ w[0] + b[0])
            y = h @ w[1] + b[1]
            g = 2 * (y - x) / y.size
            gh = (g @ w[1].T) * (1 - h**2)
            grads = [x.T @ gh, h.T @ g, gh.sum(0), g.sum(0)]
            step += 1
            lr = 1e-3 * np.sqrt(1 - 0.999**step) / (1 - 0.9**step)
            for p, gr, mm, vv in zip(w + b, grads, m, v):
                mm[:] = 0.9 * mm + 0.1 * gr
                vv[:] = 0.999 * vv + 0.001 * gr * gr
                p -= lr * mm / (np.sqrt(vv) + 1e-8)
    for got, want in zip(model.weights + model.biases, w + b):
        np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-14)


def test_train_rejects_raw_dataset(rng):
    with pytest.raises(InvalidArgument):
        miae.train(WindowDataset(rng.standard_normal((4, 12, 6))), np.ones((3, 3)), epochs=1)


# -- persistence --------------------------------------------------------------

def test_save_load_bit_identical(tmp_path, rng):
    model = miae.train(_dataset(rng), np.ones((3, 3)), epochs=3, layer_dims=[6, 8, 4, 4, 8, 6])
    miae.save_model(model, tmp_path / "m.json")
    back = miae.load_model(tmp_path / "m.json")
    x = rng.standard_normal((7, 12, 6))
    assert miae.forward(back, x).tobytes() == miae.forward(model, x).tobytes()
    assert back.pair_reduction == "mean"
    for k in model.reference:
        assert back.reference[k].tobytes() == model.reference[k].tobytes()


def test_golden_model_v1():
    model = miae.load_model(os.path.join(DATA, "golden_model_v1.json"))
    with open(os.path.join(DATA, "golden_forward_v1.json")) as fh:
        gold = json.load(fh)
    x = np.array(gold["input"]).reshape(gold["shape"])
    y = miae.forward(model, x).ravel()
    assert [float.hex(float(v)) for v in y] == gold["output"]


def _golden_text():
    with open(os.path.join(DATA, "golden_model_v1.json")) as fh:
        return fh.read()


@pytest.mark.parametrize("mutate", [
    lambda d: d.update(version=2),
    lambda d: d.update(format="other"),
    lambda d: d["model"]["weights"][0]["data"].__setitem__(0, 0.123),
    lambda d: d["model"].pop("W"),
])
def test_corrupt_model(mutate):
    doc = json.loads(_golden_text())
    mutate(doc)
    with pytest.raises(CorruptModel):
        miae.loads_model(json.dumps(doc))


def test_truncated_model_file():
    with pytest.raises(CorruptModel):
        miae.loads_model(_golden_text()[:100])


def test_missing_field_with_valid_checksum():
    doc = json.loads(_golden_text())
    doc["model"].pop("W")
    doc["sha256"] = miae._checksum(doc["model"])
    with pytest.raises(CorruptModel, match="malformed"):
        miae.loads_model(json.dumps(doc))
