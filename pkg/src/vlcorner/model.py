"""Reference corner regressor: a small CNN backbone and an 8-way tanh head.

Parameters live in an ordered ``dict`` of name -> ndarray. The backbone is
any object with ``init_params(rng, dtype)``, ``features(params, x, hook)``,
``feature_dim`` and ``describe()``; ``ConvBackbone`` is the default.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from . import autograd as ag
from .errors import InputError

N_OUTPUTS = 8
Params = Dict[str, np.ndarray]


def _uniform(rng, fan_in, shape, dtype):
    limit = math.sqrt(3.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


@dataclass(frozen=True)
class ConvBackbone:
    """Stride-2 3x3 conv blocks with tanh, then global average pooling."""

    widths: tuple = (16, 32, 64, 128)
    in_channels: int = 3
    kernel: int = 3

    @property
    def feature_dim(self) -> int:
        return self.widths[-1]

    def describe(self) -> dict:
        return {"backbone": "conv", "widths": list(self.widths),
                "in_channels": self.in_channels, "kernel": self.kernel}

    def init_params(self, rng, dtype) -> Params:
        params = {}
        cin = self.in_channels
        for i, cout in enumerate(self.widths, start=1):
            fan_in = self.kernel * self.kernel * cin
            params[f"conv{i}.kernel"] = _uniform(rng, fan_in, (self.kernel, self.kernel, cin, cout), dtype)
            params[f"conv{i}.bias"] = np.zeros(cout, dtype)
            cin = cout
        return params

    def features(self, p, x, hook):
        h = x
        for i in range(1, len(self.widths) + 1):
            z = ag.conv2d(h, p[f"conv{i}.kernel"], p[f"conv{i}.bias"], name=f"conv{i}")
            z = hook(f"conv{i}.out", z)
            h = ag.tanh(z, name=f"tanh{i}")
        h = hook("pool.in", h)
        return ag.global_avg_pool(h, name="pool")


@dataclass(frozen=True)
class CornerRegressor:
    backbone: ConvBackbone = ConvBackbone()

    def describe(self) -> dict:
        return {**self.backbone.describe(), "head": "dense-tanh", "outputs": N_OUTPUTS}

    def init_params(self, seed, dtype=np.float32) -> Params:
        rng = np.random.default_rng(seed)
        params = self.backbone.init_params(rng, dtype)
        fan_in = self.backbone.feature_dim
        params["head.weight"] = _uniform(rng, fan_in, (fan_in, N_OUTPUTS), dtype)
        params["head.bias"] = np.zeros(N_OUTPUTS, dtype)
        return params

    def graph(self, params: Params, crops, requires_grad=False,
              taps: Optional[dict] = None, perturb: Optional[dict] = None):
        """Build the forward graph; returns (prediction tensor, param tensors).

        ``taps`` collects intermediate tensors by name and ``perturb`` adds a
        delta array to a named intermediate; both exist for gradient checks.
        """
        crops = np.asarray(crops)
        if crops.ndim == 3:
            crops = crops[None]
        if crops.ndim != 4 or crops.shape[-1] != self.backbone.in_channels or crops.shape[1] != crops.shape[2]:
            raise InputError(f"expected (N, S, S, {self.backbone.in_channels}) crops, got {crops.shape}")
        dtype = params["head.weight"].dtype
        x = ag.Tensor(crops.astype(dtype, copy=False), name="input")
        pt = {k: ag.Tensor(v, requires_grad=requires_grad, name=k) for k, v in params.items()}

        def hook(name, t):
            if perturb and name in perturb:
                t.data = t.data + perturb[name]
            if taps is not None:
                taps[name] = t
            return t

        feats = self.backbone.features(pt, x, hook)
        z = ag.dense(feats, pt["head.weight"], pt["head.bias"], name="head")
        z = hook("head.out", z)
        return ag.tanh(z, name="head.tanh"), pt

    def forward(self, params: Params, crops) -> np.ndarray:
        """Predictions of shape (N, 8), or (8,) for a single S x S x 3 crop."""
        single = np.ndim(crops) == 3
        pred, _ = self.graph(params, crops)
        return pred.data[0] if single else pred.data

    def loss_and_grads(self, params: Params, crops, targets, mask):
        """Masked corner loss and its gradient for every parameter."""
        pred, pt = self.graph(params, crops, requires_grad=True)
        loss = ag.masked_corner_loss(pred, targets, mask)
        loss.backward()
        grads = {k: (t.grad if t.grad is not None else np.zeros_like(t.data)) for k, t in pt.items()}
        return float(loss.data), grads


DEFAULT_MODEL = CornerRegressor()


def forward(params: Params, crops, model: CornerRegressor = DEFAULT_MODEL) -> np.ndarray:
    return model.forward(params, crops)


def backward(params: Params, crops, targets, mask, model: CornerRegressor = DEFAULT_MODEL):
    return model.loss_and_grads(params, crops, targets, mask)
