"""
Scoring a countermeasure: EER, DCF, Cllr and calibration
=========================================================

Two synthetic systems score the same trials. We look at how the
metrics react to a shift of the scores, then calibrate and fuse.
"""

import numpy as np

from spoofcm import calibration, metrics
from spoofcm.metrics import DcfParams

rng = np.random.default_rng(7)
n_bona, n_spoof = 2000, 3000
labels = np.r_[np.ones(n_bona, bool), np.zeros(n_spoof, bool)]

# two noisy views of the same hidden quality
hidden = np.where(labels, 1.5, -1.5) + rng.normal(size=labels.size)
sys_a = 3.0 * hidden + rng.normal(size=labels.size) + 4.0
sys_b = 0.5 * hidden + rng.normal(scale=0.8, size=labels.size) - 1.0

# %%
# EER and minDCF only look at the ranking, so a shift does not move them.
# actDCF and Cllr read scores as LLRs and punish the offset.
params = DcfParams()
print(params.describe())
for name, s in (("a", sys_a), ("b", sys_b), ("a shifted", sys_a - 4.0)):
    rep = metrics.evaluate(s[labels], s[~labels], params)
    print(f"{name:10s} eer={rep.eer:.4f} minDCF={rep.min_dcf:.4f} "
          f"actDCF={rep.act_dcf:.4f} cllr={rep.cllr:.3f} minCllr={rep.min_cllr:.3f}")

# %%
# The hull EER and the interpolated EER agree closely on this many trials.
print(metrics.eer(sys_a[labels], sys_a[~labels]))
print(metrics.eer(sys_a[labels], sys_a[~labels], method="interp"))

# %%
# Calibration: an affine map fitted by prior-weighted logistic regression.
model = calibration.calibrate(sys_a, labels, name="a")
llr = calibration.apply(model, sys_a)
print("weights", model.weights, "bias", round(model.bias, 3), "iterations", model.n_iterations)
print("actDCF before", metrics.act_dcf(sys_a[labels], sys_a[~labels], params))
print("actDCF after ", metrics.act_dcf(llr[labels], llr[~labels], params))
print("Cllr after   ", metrics.cllr(llr[labels], llr[~labels]))

# %%
# Fusion of both systems, then the greedy top-k selection with a weak third one.
fused = calibration.fit(np.vstack([sys_a, sys_b]), labels, names=("a", "b"))
f = calibration.apply(fused, np.vstack([sys_a, sys_b]))
print("fused minDCF", metrics.min_dcf(f[labels], f[~labels], params)[0])

candidates = {"a": sys_a, "b": sys_b, "noise": rng.normal(size=labels.size)}
selected, model, ranking = calibration.greedy_select(candidates, labels, params, k=2)
print("ranking", ranking)
print("selected", selected)
