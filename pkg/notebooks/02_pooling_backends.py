"""
Pooling back-ends over layer stacks
===================================

A layer stack is ``(n_layers, frames, dim)``. The weighted-average
back-end mixes layers and averages over time; the multi-head factorized
attention back-end pools with learned attention. We compare their sizes,
check the gradients, and train both on a small separable problem.
"""

import numpy as np

from spoofcm import pooling
from spoofcm.pooling.gradcheck import check_backend

rng = np.random.default_rng(0)

# %%
# Parameter counts for a 12-layer base encoder; the layer weights also
# cover the convolutional front-end output, so there are 13 of them.
for kind, kw in (("wa", {}), ("mhfa", {"heads": 32})):
    model = pooling.init_backend(kind, 12, 768, rng, **kw)
    print(kind, model.n_params())

# %%
# Analytic gradients against central differences, back-end plus toy encoder.
for kind in ("wa", "mhfa"):
    worst = check_backend(kind, points=3)
    print(kind, f"worst relative error {max(worst.values()):.2e}")

# %%
# Two classes whose stacks differ by a small offset in the upper layers.
n, layers, frames, dim = 300, 4, 20, 16
labels = rng.random(n) < 0.5
stacks = []
for y in labels:
    x = rng.normal(size=(layers, frames, dim))
    x[2:, :, :4] += 0.15 if y else -0.15
    stacks.append(x)

config = pooling.TrainConfig(epochs=20, patience=20, crop_frames=16, lr_backend=5e-2)
for kind, kw in (("wa", {}), ("mhfa", {"heads": 4})):
    res = pooling.train(stacks, labels, config, seed=0, backend=kind, backend_kwargs=kw)
    print(kind, "best epoch", res.best_epoch, "EER trace", np.round(res.eer_trace[-3:], 3))

# %%
# The learned layer weights of the WA back-end, after a softmax.
res = pooling.train(stacks, labels, config, seed=0, backend="wa")
w = res.model.params["layer_weights"]
print(np.round(pooling.softmax(w), 3))
