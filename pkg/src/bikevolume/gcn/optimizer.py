"""Adam with bias correction and coupled L2 weight decay.

Weight decay is added to the gradient (the classical L2 form) and applies
to weight matrices only; biases and batch-norm scale/shift are never
decayed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from bikevolume.gcn.network import Gradients, Parameters

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


@dataclass
class AdamState:
    step: int
    m: Parameters  # first-moment estimates, congruent with the parameters
    v: Parameters  # second-moment estimates

    @classmethod
    def initial(cls, params: Parameters) -> "AdamState":
        def zeros_like(p):
            return {k: np.zeros_like(v) for k, v in p.items() if not k.startswith("running_")}

        return cls(
            step=0,
            m=Parameters(
                layers=[zeros_like(p) if p is not None else None for p in params.layers],
                head=zeros_like(params.head),
            ),
            v=Parameters(
                layers=[zeros_like(p) if p is not None else None for p in params.layers],
                head=zeros_like(params.head),
            ),
        )


def adam_step(
    params: Parameters,
    grads: Gradients,
    state: AdamState,
    lr: float,
    weight_decay: float = 0.0,
) -> AdamState:
    """Apply one Adam update in place; returns the advanced state."""
    t = state.step + 1
    bc1 = 1.0 - BETA1**t
    bc2 = 1.0 - BETA2**t

    def update(p: dict, g: dict, m: dict, v: dict, where: str):
        for key, grad in g.items():
            if not np.all(np.isfinite(grad)):
                raise FloatingPointError(f"non-finite gradient for {where}.{key}")
            if weight_decay and key == "W":
                grad = grad + weight_decay * p[key]
            m[key] = BETA1 * m[key] + (1.0 - BETA1) * grad
            v[key] = BETA2 * v[key] + (1.0 - BETA2) * grad**2
            m_hat = m[key] / bc1
            v_hat = v[key] / bc2
            p[key] -= lr * m_hat / (np.sqrt(v_hat) + EPS)

    for i, g in enumerate(grads.layers):
        if g is None:
            continue
        update(params.layers[i], g, state.m.layers[i], state.v.layers[i], f"layer{i}")
    update(params.head, grads.head, state.m.head, state.v.head, "head")

    state.step = t
    return state
