"""Finite-difference verification of analytic gradients.

``check_gradients`` accepts a loss builder so it can be pointed at any
trainable architecture in the repo: the builder gets a parameter dict and
must return a scalar loss value (floats only, no randomness of its own).
"""

from __future__ import annotations

import numpy as np


def check_gradients(loss_fn, params: dict, analytic: dict, h: float = 1e-5,
                    rtol: float = 1e-4, atol: float = 1e-7) -> float:
    """Compare analytic grads against central differences; return worst relative error.

    An entry passes when |g_a - g_fd| <= atol + rtol * max(|g_a|, |g_fd|);
    the returned value is max over entries of |g_a - g_fd| / max(|g_a|, |g_fd|, atol/rtol).
    """
    worst = 0.0
    for name, p in params.items():
        ga = analytic[name]
        flat = p.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn(params)
            flat[i] = orig - h
            down = loss_fn(params)
            flat[i] = orig
            gf = (up - down) / (2.0 * h)
            gae = ga.reshape(-1)[i]
            denom = max(abs(gae), abs(gf), atol / rtol)
            worst = max(worst, abs(gae - gf) / denom)
    return worst
