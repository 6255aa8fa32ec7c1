"""Adam with L2 weight decay, and stochastic weight averaging."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


@dataclass
class AdamState:
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(params, grads, state: AdamState, cfg, lr: Optional[float] = None):
    """One Adam update, in place. Weight decay is added to the gradient.

    ``cfg`` needs ``lr`` and ``weight_decay``; ``lr`` overrides ``cfg.lr``
    (used once the SWA learning-rate decay kicks in).
    """
    lr = cfg.lr if lr is None else lr
    state.t += 1
    c1 = 1.0 - BETA1 ** state.t
    c2 = 1.0 - BETA2 ** state.t
    for name, theta in params.items():
        g = grads[name]
        if cfg.weight_decay:
            g = g + cfg.weight_decay * theta
        if name not in state.m:
            state.m[name] = np.zeros_like(theta)
            state.v[name] = np.zeros_like(theta)
        m, v = state.m[name], state.v[name]
        m *= BETA1
        m += (1.0 - BETA1) * g
        v *= BETA2
        v += (1.0 - BETA2) * (g * g)
        m_hat = m / c1
        v_hat = v / c2
        theta -= (lr * m_hat / (np.sqrt(v_hat) + EPS)).astype(theta.dtype, copy=False)
    return params, state


@dataclass
class SWAState:
    count: int = 0
    average: Dict[str, np.ndarray] = field(default_factory=dict)


def swa_update(state: SWAState, params, epoch: int, cfg) -> SWAState:
    """Fold the end-of-epoch snapshot into the running equal-weight average.

    Epochs are 1-based; snapshots before ``cfg.swa_start_epoch`` are ignored.
    The running-mean form keeps identical snapshots exact.
    """
    if epoch < cfg.swa_start_epoch:
        return state
    n = state.count
    for name, theta in params.items():
        snap = theta.astype(np.float64)
        if n == 0:
            state.average[name] = snap.copy()
        else:
            avg = state.average[name]
            avg += (snap - avg) / (n + 1)
    state.count = n + 1
    return state


def swa_learning_rate(epoch: int, cfg) -> float:
    """Base rate before the SWA phase, decayed once from ``swa_start_epoch`` on."""
    return cfg.lr * cfg.swa_lr_decay if epoch >= cfg.swa_start_epoch else cfg.lr


def swa_params(state: SWAState, like) -> dict:
    """Averaged parameters cast back to the dtypes of ``like``."""
    return {k: state.average[k].astype(like[k].dtype) for k in like}
