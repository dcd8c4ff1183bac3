"""WA and MHFA pooling back-ends with exact forward/backward passes.

A feature stack is an array of shape ``(L + 1, T, D)``: index 0 holds the
convolutional encoder output, indices ``1..L`` the transformer layers.
Logits have two entries, ``[spoof, bonafide]``; the detection score is
their difference.
"""

from __future__ import annotations

import numpy as np

SPOOF, BONAFIDE = 0, 1
N_CLASSES = 2


class StaleCacheError(RuntimeError):
    """A forward cache was used after the model parameters were updated."""


def softmax(x, axis=-1):
    z = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def _softmax_backward(p, dp, axis=-1):
    return p * (dp - np.sum(p * dp, axis=axis, keepdims=True))


def check_stack(stack):
    stack = np.asarray(stack)
    if stack.ndim != 3 or 0 in stack.shape:
        raise ValueError(f"feature stack must be a non-empty (L+1, T, D) array, got shape {stack.shape}")
    if not np.all(np.isfinite(stack)):
        raise ValueError("feature stack has non-finite entries")
    return stack


class ParamModel:
    """Named parameter blocks plus a version counter for cache checks."""

    kind = "base"

    def __init__(self, params):
        self.params = {k: np.array(v) for k, v in params.items()}
        self.version = 0

    def bump(self):
        self.version += 1

    def copy(self):
        new = object.__new__(type(self))
        new.__dict__.update(self.__dict__)
        new.params = {k: v.copy() for k, v in self.params.items()}
        return new

    def n_params(self, blocks=None):
        names = self.params if blocks is None else blocks
        return int(sum(self.params[n].size for n in names))

    def astype(self, dtype):
        out = self.copy()
        out.params = {k: v.astype(dtype) for k, v in out.params.items()}
        return out

    def _check_cache(self, cache):
        if cache.get("model") is not self or cache.get("version") != self.version:
            raise StaleCacheError("cache does not belong to the current model parameters")


class WaModel(ParamModel):
    """Learned weighted average of layers, temporal mean, linear classifier.

    Layer weights are used raw by default; ``softmax_weights=True`` passes
    them through a softmax first.
    """

    kind = "wa"
    pooling_blocks = ("layer_weights",)

    def __init__(self, params, softmax_weights=False):
        super().__init__(params)
        self.softmax_weights = softmax_weights

    @classmethod
    def init(cls, n_layers, dim, rng, softmax_weights=False, dtype=np.float64):
        n = n_layers + 1
        lw = np.zeros(n) if softmax_weights else np.full(n, 1.0 / n)
        params = {
            "layer_weights": lw,
            "classifier_w": rng.normal(0.0, 1.0 / np.sqrt(dim), (dim, N_CLASSES)),
            "classifier_b": np.zeros(N_CLASSES),
        }
        return cls({k: v.astype(dtype) for k, v in params.items()}, softmax_weights)

    def mixing_weights(self):
        w = self.params["layer_weights"]
        return softmax(w) if self.softmax_weights else w

    def pooled(self, stack):
        """Temporal mean of the layer-weighted frame representation."""
        stack = check_stack(stack)
        frames = np.tensordot(self.mixing_weights(), stack, axes=1)
        return frames.mean(axis=0)

    def forward(self, stack):
        stack = check_stack(stack)
        if stack.shape[0] != self.params["layer_weights"].size:
            raise ValueError("stack depth does not match the number of layer weights")
        alpha = self.mixing_weights()
        pooled = np.tensordot(alpha, stack, axes=1).mean(axis=0)
        logits = pooled @ self.params["classifier_w"] + self.params["classifier_b"]
        cache = {"model": self, "version": self.version, "stack": stack, "alpha": alpha,
                 "pooled": pooled}
        return logits, cache

    def backward(self, cache, upstream, wrt_stack=False):
        self._check_cache(cache)
        g = np.asarray(upstream)
        stack, alpha, pooled = cache["stack"], cache["alpha"], cache["pooled"]
        d_pooled = self.params["classifier_w"] @ g
        d_alpha = stack.mean(axis=1) @ d_pooled
        if self.softmax_weights:
            d_lw = _softmax_backward(alpha, d_alpha)
        else:
            d_lw = d_alpha
        grads = {
            "layer_weights": d_lw,
            "classifier_w": np.outer(pooled, g),
            "classifier_b": g.copy(),
        }
        if not wrt_stack:
            return grads, None
        t = stack.shape[1]
        d_stack = np.broadcast_to(alpha[:, None, None] * (d_pooled / t)[None, None, :], stack.shape).copy()
        return grads, d_stack


class MhfaModel(ParamModel):
    """Multi-head factorized attentive pooling.

    Two softmax-normalized layer mixtures form keys and values. Each head
    scores frames with a learned query against the keys, pools the
    compressed values with the resulting attention weights, and the head
    outputs are concatenated, projected to an embedding and classified.
    """

    kind = "mhfa"
    pooling_blocks = ("key_layer_weights", "value_layer_weights", "head_queries",
                      "value_projection", "embedding")

    @classmethod
    def init(cls, n_layers, dim, rng, heads=32, compressed_dim=None, embed_dim=256, dtype=np.float64):
        if heads < 1:
            raise ValueError("MHFA needs at least one head")
        dc = compressed_dim or max(1, dim // 8)
        params = {
            "key_layer_weights": np.zeros(n_layers + 1),
            "value_layer_weights": np.zeros(n_layers + 1),
            "head_queries": rng.normal(0.0, 1.0 / np.sqrt(dim), (heads, dim)),
            "value_projection": rng.normal(0.0, 1.0 / np.sqrt(dim), (dim, dc)),
            "embedding": rng.normal(0.0, 1.0 / np.sqrt(heads * dc), (heads * dc, embed_dim)),
            "classifier_w": rng.normal(0.0, 1.0 / np.sqrt(embed_dim), (embed_dim, N_CLASSES)),
            "classifier_b": np.zeros(N_CLASSES),
        }
        return cls({k: v.astype(dtype) for k, v in params.items()})

    @property
    def heads(self):
        return self.params["head_queries"].shape[0]

    def attention(self, stack):
        """Per-head attention weights over frames, shape ``(T, H)``."""
        return self.forward(stack)[1]["attn"]

    def forward(self, stack):
        stack = check_stack(stack)
        p = self.params
        if stack.shape[0] != p["key_layer_weights"].size:
            raise ValueError("stack depth does not match the number of layer weights")
        if p["head_queries"].shape[0] == 0:
            raise ValueError("MHFA needs at least one head")
        ak = softmax(p["key_layer_weights"])
        av = softmax(p["value_layer_weights"])
        keys = np.tensordot(ak, stack, axes=1)            # (T, D)
        values = np.tensordot(av, stack, axes=1)          # (T, D)
        attn = softmax(keys @ p["head_queries"].T, axis=0)  # (T, H), normalized over frames
        proj = values @ p["value_projection"]             # (T, D')
        heads_out = attn.T @ proj                         # (H, D')
        flat = heads_out.reshape(-1)
        emb = flat @ p["embedding"]
        logits = emb @ p["classifier_w"] + p["classifier_b"]
        cache = {"model": self, "version": self.version, "stack": stack, "ak": ak, "av": av,
                 "keys": keys, "values": values, "attn": attn, "proj": proj, "flat": flat, "emb": emb}
        return logits, cache

    def backward(self, cache, upstream, wrt_stack=False):
        self._check_cache(cache)
        p = self.params
        g = np.asarray(upstream)
        stack, ak, av = cache["stack"], cache["ak"], cache["av"]
        keys, values, attn, proj = cache["keys"], cache["values"], cache["attn"], cache["proj"]
        h = attn.shape[1]

        d_emb = p["classifier_w"] @ g
        d_flat = p["embedding"] @ d_emb
        d_heads = d_flat.reshape(h, -1)
        d_attn = proj @ d_heads.T
        d_proj = attn @ d_heads
        d_scores = _softmax_backward(attn, d_attn, axis=0)
        d_keys = d_scores @ p["head_queries"]
        d_values = d_proj @ p["value_projection"].T
        d_ak = np.einsum("ltd,td->l", stack, d_keys)
        d_av = np.einsum("ltd,td->l", stack, d_values)
        grads = {
            "key_layer_weights": _softmax_backward(ak, d_ak),
            "value_layer_weights": _softmax_backward(av, d_av),
            "head_queries": d_scores.T @ keys,
            "value_projection": values.T @ d_proj,
            "embedding": np.outer(cache["flat"], d_emb),
            "classifier_w": np.outer(cache["emb"], g),
            "classifier_b": g.copy(),
        }
        if not wrt_stack:
            return grads, None
        d_stack = ak[:, None, None] * d_keys[None] + av[:, None, None] * d_values[None]
        return grads, d_stack


BACKENDS = {"wa": WaModel, "mhfa": MhfaModel}


def init_backend(kind, n_layers, dim, rng, **kwargs):
    try:
        cls = BACKENDS[kind]
    except KeyError:
        raise ValueError(f"unknown back-end {kind!r}; expected one of {sorted(BACKENDS)}") from None
    return cls.init(n_layers, dim, rng, **kwargs)


def detection_score(logits):
    """Bonafide-minus-spoof logit difference (higher means bonafide)."""
    return float(logits[BONAFIDE] - logits[SPOOF])
