"""Adam with decoupled weight decay and a linear warmup / linear decay schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


@dataclass
class AdamState:
    """Optimizer state shared by every learnable tensor of a run."""

    total_steps: int
    lr_peak: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    warmup_fraction: float = 0.1
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def lr_at(step: int, state: AdamState) -> float:
    """Linear ramp to lr_peak over the first warmup_fraction of steps, then
    linear decay to 0 at total_steps."""
    total = state.total_steps
    if step < 0 or step > total:
        raise ValueError(f"step {step} outside [0, {total}]")
    warm = state.warmup_fraction * total
    if warm > 0 and step <= warm:
        return state.lr_peak * step / warm
    if total == warm:
        return 0.0
    return state.lr_peak * (total - step) / (total - warm)


def adam_update(state: AdamState, params: dict[str, Tensor], grads: dict[str, np.ndarray]) -> dict[str, Tensor]:
    """One Adam step over named parameters, in place.

    Bias-corrected moments; weight decay is decoupled (applied straight to
    the weights, scaled by the current learning rate).
    """
    state.step += 1
    lr = lr_at(state.step, state)
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.data.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.data.shape} for {name!r}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        m_hat = m / c1
        v_hat = v / c2
        p.data -= (lr * (m_hat / (np.sqrt(v_hat) + state.eps) + state.weight_decay * p.data)).astype(p.data.dtype)
    return params
