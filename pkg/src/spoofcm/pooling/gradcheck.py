"""Finite-difference verification of the analytic back-propagation."""

from __future__ import annotations

import numpy as np

from .encoder import ToyEncoder
from .loss import l2_to_init, weighted_cross_entropy
from .models import init_backend


def _numeric(f, arr, idx, rel_step):
    flat = arr.reshape(-1)
    out = np.empty(len(idx))
    for j, i in enumerate(idx):
        old = flat[i]
        h = rel_step * max(1.0, abs(old))
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        out[j] = (fp - fm) / (2.0 * h)
    return out


def block_error(analytic, numeric):
    """Max absolute difference scaled by the block's largest gradient entry."""
    scale = max(np.max(np.abs(numeric)), np.max(np.abs(analytic)), 1e-8)
    return float(np.max(np.abs(analytic - numeric)) / scale)


def check_backend(kind="wa", n_layers=4, dim=32, frames=16, heads=4, input_dim=12,
                  points=10, coords=24, rel_step=1e-4, lam=0.5, seed=0, softmax_weights=False,
                  dtype=np.float64):
    """Compare analytic and central-difference gradients of the full training loss.

    The loss is weighted cross-entropy through the back-end and the toy
    encoder plus the L2-to-init penalty on the encoder. At each of
    ``points`` random parameter/input draws, up to ``coords`` random
    coordinates of every parameter block are checked. Returns a dict
    mapping ``"backend/<block>"`` / ``"encoder/<block>"`` to the worst
    relative error seen.
    """
    rng = np.random.default_rng(seed)
    worst = {}
    for _ in range(points):
        kwargs = {"heads": heads} if kind == "mhfa" else {"softmax_weights": softmax_weights}
        model = init_backend(kind, n_layers, dim, rng, dtype=dtype, **kwargs)
        enc = ToyEncoder.init(input_dim, dim, n_layers, rng, dtype=dtype)
        for block in list(model.params.values()) + list(enc.params.values()):
            block += rng.normal(0.0, 0.3, block.shape).astype(dtype)
        init = {k: v + rng.normal(0.0, 0.1, v.shape).astype(dtype) for k, v in enc.params.items()}
        x = rng.normal(size=(frames, input_dim)).astype(dtype)
        label = bool(rng.random() < 0.5)

        def total():
            stack, _ = enc.forward(x)
            logits, _ = model.forward(stack)
            value, _ = weighted_cross_entropy(logits, label)
            return value + l2_to_init(enc.params, init, lam)[0]

        stack, e_cache = enc.forward(x)
        logits, cache = model.forward(stack)
        _, d_logits = weighted_cross_entropy(logits, label)
        g_model, d_stack = model.backward(cache, d_logits, wrt_stack=True)
        g_enc = enc.backward(e_cache, d_stack)
        _, g_pen = l2_to_init(enc.params, init, lam)
        for k in g_enc:
            g_enc[k] = g_enc[k] + g_pen[k]

        for prefix, owner, grads in (("backend", model, g_model), ("encoder", enc, g_enc)):
            for name, arr in owner.params.items():
                n = arr.size
                idx = np.arange(n) if n <= coords else rng.choice(n, coords, replace=False)
                num = _numeric(total, arr, idx, rel_step)
                err = block_error(grads[name].reshape(-1)[idx], num)
                key = f"{prefix}/{name}"
                worst[key] = max(worst.get(key, 0.0), err)
    return worst
