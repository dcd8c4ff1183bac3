"""Class-weighted cross-entropy and the L2-to-initialization penalty."""

import numpy as np

from .models import BONAFIDE, SPOOF, softmax

CLASS_WEIGHTS = {"bonafide": 9.0, "spoof": 1.0}


def class_weight(is_bonafide, class_weights=None):
    cw = CLASS_WEIGHTS if class_weights is None else class_weights
    return cw["bonafide"] if is_bonafide else cw["spoof"]


def weighted_cross_entropy(logits, is_bonafide, class_weights=None):
    """Weighted negative log-softmax of the true class, and its gradient."""
    logits = np.asarray(logits)
    target = BONAFIDE if is_bonafide else SPOOF
    w = class_weight(is_bonafide, class_weights)
    z = logits - logits.max()
    log_norm = np.log(np.sum(np.exp(z)))
    value = w * (log_norm - z[target])
    grad = w * softmax(logits)
    grad[target] -= w
    return float(value), grad


def l2_to_init(params, init, lam):
    """``lam * sum((theta - theta0)**2)`` over all blocks, with per-block gradients."""
    if set(params) != set(init):
        raise ValueError("parameter blocks do not match the initial snapshot")
    total = 0.0
    grads = {}
    for name, value in params.items():
        ref = init[name]
        if value.shape != ref.shape:
            raise ValueError(f"shape mismatch for {name!r}: {value.shape} vs {ref.shape}")
        diff = value - ref
        total += float(np.sum(diff * diff))
        grads[name] = 2.0 * lam * diff
    return lam * total, grads
