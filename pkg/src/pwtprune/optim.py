from dataclasses import dataclass

import numpy as np

from .tensor import NonFiniteError


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0


def adam_step(param, grad, m, v, hyper, t):
    """One bias-corrected Adam update, in place on ``param``, ``m`` and ``v``.

    ``t`` is the 1-based step index. Entries whose gradient and moments are
    zero (pruned filters) receive an exactly-zero step.
    """
    if t < 1:
        raise ValueError(f"Adam step index must be >= 1, got {t}")
    if not np.isfinite(grad).all():
        raise NonFiniteError("non-finite gradient passed to adam_step")
    if hyper.weight_decay:
        grad = grad + hyper.weight_decay * param
    m *= hyper.beta1
    m += (1 - hyper.beta1) * grad
    v *= hyper.beta2
    v += (1 - hyper.beta2) * (grad * grad)
    m_hat = m / (1 - hyper.beta1 ** t)
    v_hat = v / (1 - hyper.beta2 ** t)
    param -= (hyper.lr * m_hat / (np.sqrt(v_hat) + hyper.eps)).astype(param.dtype, copy=False)
    return param
