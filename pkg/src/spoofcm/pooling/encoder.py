"""A small tanh encoder standing in for a pretrained speech transformer."""

from __future__ import annotations

import numpy as np

from .models import ParamModel

FRAME_HOP = 320          # 20 ms at 16 kHz, one output frame per hop
FRAMES_PER_SECOND = 16000 // FRAME_HOP


def log_band_frames(samples, frame=FRAME_HOP, n_bands=40):
    """Non-overlapping Hann-windowed frames reduced to log band energies.

    Returns an array of shape ``(T, n_bands)``. Signals shorter than one
    frame are zero-padded to a single frame.
    """
    x = np.asarray(samples, dtype=np.float64)
    n_frames = max(1, x.size // frame)
    if x.size < n_frames * frame:
        x = np.concatenate([x, np.zeros(n_frames * frame - x.size)])
    frames = x[: n_frames * frame].reshape(n_frames, frame) * np.hanning(frame)
    power = np.abs(np.fft.rfft(frames, axis=1)) ** 2
    edges = np.linspace(0, power.shape[1], n_bands + 1).astype(int)
    bands = np.add.reduceat(power, edges[:-1], axis=1)
    return np.log(bands + 1e-8)


class ToyEncoder(ParamModel):
    """Input projection followed by ``L`` affine + tanh layers.

    ``forward`` maps a ``(T, D_in)`` input to a ``(L + 1, T, D)`` feature
    stack whose entry ``i`` is the output of layer ``i`` (entry 0 is the
    input projection).
    """

    kind = "toy_encoder"

    @classmethod
    def init(cls, input_dim, dim, n_layers, rng, dtype=np.float64):
        params = {"input_proj": rng.normal(0.0, 1.0 / np.sqrt(input_dim), (input_dim, dim))}
        for i in range(1, n_layers + 1):
            params[f"layer{i}_w"] = rng.normal(0.0, 1.0 / np.sqrt(dim), (dim, dim))
            params[f"layer{i}_b"] = rng.normal(0.0, 0.1, dim)
        return cls({k: v.astype(dtype) for k, v in params.items()})

    @property
    def n_layers(self):
        return (len(self.params) - 1) // 2

    def depth(self, name):
        """Layer index of a parameter block: 0 for the input projection."""
        if name == "input_proj":
            return 0
        return int(name[len("layer"):].split("_")[0])

    def forward(self, x):
        x = np.asarray(x)
        if x.ndim != 2 or x.shape[0] == 0:
            raise ValueError("encoder input must be a non-empty (T, D_in) array")
        outs = [x @ self.params["input_proj"]]
        for i in range(1, self.n_layers + 1):
            outs.append(np.tanh(outs[-1] @ self.params[f"layer{i}_w"] + self.params[f"layer{i}_b"]))
        stack = np.stack(outs)
        return stack, {"model": self, "version": self.version, "x": x, "stack": stack}

    def backward(self, cache, d_stack):
        self._check_cache(cache)
        stack = cache["stack"]
        grads = {}
        carry = d_stack[-1].copy()
        for i in range(self.n_layers, 0, -1):
            d_pre = carry * (1.0 - stack[i] ** 2)
            grads[f"layer{i}_w"] = stack[i - 1].T @ d_pre
            grads[f"layer{i}_b"] = d_pre.sum(axis=0)
            carry = d_stack[i - 1] + d_pre @ self.params[f"layer{i}_w"].T
        grads["input_proj"] = cache["x"].T @ carry
        return grads
