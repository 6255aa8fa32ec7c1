import numpy as np
import pytest

from helpers import gradcheck_batch, layer_gradient_errors
from vlcorner import autograd as ag
from vlcorner.errors import InputError, NumericalError
from vlcorner.model import CornerRegressor, ConvBackbone, forward

MODEL = CornerRegressor()


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(0)
    params = MODEL.init_params([0, 0], np.float64)
    crops, targets, mask = gradcheck_batch(rng)
    errors = layer_gradient_errors(MODEL, params, crops, targets, mask, rng, per_layer=16)
    for kind, errs in errors.items():
        assert errs.max() < 1e-4, kind


def test_zero_parameters_give_zero_output():
    params = {k: np.zeros_like(v) for k, v in MODEL.init_params(0).items()}
    out = forward(params, np.random.default_rng(1).uniform(0, 1, (3, 32, 32, 3)).astype(np.float32))
    assert out.shape == (3, 8)
    assert not out.any()


def test_outputs_bounded_and_deterministic():
    x = np.random.default_rng(2).uniform(0, 1, (4, 64, 64, 3)).astype(np.float32)
    a = forward(MODEL.init_params(5), x)
    b = forward(MODEL.init_params(5), x)
    assert a.tobytes() == b.tobytes()
    assert (np.abs(a) < 1).all()
    assert forward(MODEL.init_params(5), x[0]).shape == (8,)


def test_init_depends_on_seed_and_respects_dtype():
    p0, p1 = MODEL.init_params([0, 1]), MODEL.init_params([0, 2])
    assert not np.array_equal(p0["conv1.kernel"], p1["conv1.kernel"])
    assert all(v.dtype == np.float64 for v in MODEL.init_params(0, np.float64).values())
    assert p0["conv1.kernel"].shape == (3, 3, 3, 16)
    assert p0["head.weight"].shape == (128, 8)


def test_hand_sized_dense_matches_chain_rule():
    # a two-pixel single-channel "image" flattened to a 2-vector
    x = np.array([[0.3, -0.7]])
    W = np.arange(16, dtype=float).reshape(2, 8) / 20 - 0.4
    b = np.linspace(-0.1, 0.1, 8)
    t = np.array([[0.1, 0.2, -0.3, 0.0, 0.0, 0.0, 0.25, -0.5]])
    mask = np.array([[True, True, False, True]])

    wt, bt = ag.Tensor(W, requires_grad=True), ag.Tensor(b, requires_grad=True)
    pred = ag.tanh(ag.dense(ag.Tensor(x), wt, bt))
    ag.masked_corner_loss(pred, t, mask).backward()

    p = np.tanh(x @ W + b)[0]
    dp = np.zeros(8)
    for j in range(4):
        w = 1.0 if mask[0, j] else 1e-8
        rx, ry = p[2 * j] * w - t[0, 2 * j], p[2 * j + 1] * w - t[0, 2 * j + 1]
        norm = np.hypot(rx, ry)
        dp[2 * j], dp[2 * j + 1] = w * rx / norm / 3, w * ry / norm / 3
    dz = dp * (1 - p ** 2)
    np.testing.assert_allclose(wt.grad, np.outer(x[0], dz), rtol=1e-12, atol=0)
    np.testing.assert_allclose(bt.grad, dz, rtol=1e-12, atol=0)


def test_zero_visible_residual_leaves_only_masked_gradient():
    rng = np.random.default_rng(3)
    params = MODEL.init_params(3, np.float64)
    x = rng.uniform(0, 1, (2, 32, 32, 3))
    pred = MODEL.forward(params, x)
    mask = np.zeros((2, 4), bool)
    mask[:, 0] = True
    targets = np.zeros((2, 4, 2))
    targets[:, 0] = pred.reshape(2, 4, 2)[:, 0]
    _, grads = MODEL.loss_and_grads(params, x, targets, mask)
    assert max(np.abs(g).max() for g in grads.values()) < 1e-7


def test_non_finite_values_name_the_layer():
    params = MODEL.init_params(0, np.float64)
    x = np.zeros((1, 16, 16, 3))
    x[0, 3, 3, 0] = np.inf
    with pytest.raises(NumericalError, match="conv1"):
        MODEL.forward(params, x)


def test_shape_mismatch_rejected():
    params = MODEL.init_params(0)
    with pytest.raises(InputError):
        MODEL.forward(params, np.zeros((1, 16, 16, 1), np.float32))
    with pytest.raises(InputError):
        MODEL.forward(params, np.zeros((1, 16, 8, 3), np.float32))


def test_conv2d_matches_direct_loop():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(2, 7, 6, 3))
    k = rng.normal(size=(3, 3, 3, 5))
    b = rng.normal(size=5)
    out = ag.conv2d(ag.Tensor(x), ag.Tensor(k), ag.Tensor(b)).data
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    assert out.shape == (2, 4, 3, 5)
    for n in range(2):
        for i in range(4):
            for j in range(3):
                patch = xp[n, 2 * i:2 * i + 3, 2 * j:2 * j + 3, :]
                for c in range(5):
                    assert out[n, i, j, c] == pytest.approx(float((patch * k[..., c]).sum() + b[c]), rel=1e-12)


def test_backbone_describe():
    assert ConvBackbone().describe()["widths"] == [16, 32, 64, 128]
    assert MODEL.describe()["outputs"] == 8
