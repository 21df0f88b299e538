"""Scalar reference implementation of decoupled-weight-decay Adam.

Element-by-element Python floats only; no numpy, no imports from the
package under test.
"""

import math


def adamw_sequence(
    param0: list[float],
    grads: list[list[float]],
    lr: list[float],
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 0.01,
) -> list[float]:
    """Apply len(grads) updates to param0; lr[t] is the step-t rate."""
    p = list(param0)
    m = [0.0] * len(p)
    s = [0.0] * len(p)
    for t, (g, rate) in enumerate(zip(grads, lr), start=1):
        for i in range(len(p)):
            p[i] = p[i] - rate * weight_decay * p[i]
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i]
            s[i] = beta2 * s[i] + (1.0 - beta2) * g[i] * g[i]
            m_hat = m[i] / (1.0 - beta1**t)
            s_hat = s[i] / (1.0 - beta2**t)
            p[i] = p[i] - rate * m_hat / (math.sqrt(s_hat) + eps)
    return p
