"""
End to end on a toy corpus
==========================

Generates bona fide and spoofed waveforms, augments the training set,
trains three systems, calibrates, fuses the best ones and writes a
per-condition report. Every step goes through the command line tool.
Takes about half a minute.
"""

import sys
import tempfile

from spoofcm import smoke

workdir = sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp(prefix="spoofcm_")
result = smoke.run(workdir, seed=0, log=print)

# %%
print("individual dev minDCF", result["individual_dev_min_dcf"])
print("fused dev minDCF     ", result["fused_dev_min_dcf"], "from", result["selected"])
print("eval", {k: result["eval"][k] for k in ("eer", "min_dcf", "act_dcf", "cllr") if k in result["eval"]})

# %%
print(result["report"])
print("outputs in", workdir)
