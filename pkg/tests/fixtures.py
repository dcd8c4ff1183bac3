"""Synthetic condition-labelled score sets for the report tests.

Run as a script to regenerate the golden tables under ``tests/golden``.
"""

import functools
import sys
from pathlib import Path

import numpy as np

from spoofcm import metrics, report
from spoofcm.score_io import LabeledScoreSet

ATTACKS = ("A17", "A18", "A28")
CODECS = ("-", "codec-1", "codec-10", "codec-2")
GOLDEN = Path(__file__).parent / "golden"
TARGET_MIN_DCF = 0.0937


def condition_set(separation, seed=0, n_bona=10000, n_spoof=2000):
    """Gaussian scores; bonafide centred at ``separation``, spoofs near 0 with per-condition offsets.

    ``n_bona`` bonafide and ``n_spoof`` spoof trials are drawn per codec and
    per (attack, codec) condition. The noise draws depend only on ``seed``,
    so the pooled minDCF is a step function of ``separation`` alone.
    """
    rng = np.random.default_rng(seed)
    attack_shift = dict(zip(ATTACKS, (0.0, -0.4, 0.9)))
    codec_shift = dict(zip(CODECS, (0.0, 0.2, 0.6, 0.3)))
    trials, scores, bona, attacks, codecs = [], [], [], [], []
    for c in CODECS:
        scores.append(separation + rng.normal(size=n_bona) - codec_shift[c])
        trials += [f"B_{c}_{i}" for i in range(n_bona)]
        bona += [True] * n_bona
        attacks += ["-"] * n_bona
        codecs += [c] * n_bona
        for a in ATTACKS:
            scores.append(rng.normal(size=n_spoof) + attack_shift[a] + codec_shift[c])
            trials += [f"S_{a}_{c}_{i}" for i in range(n_spoof)]
            bona += [False] * n_spoof
            attacks += [a] * n_spoof
            codecs += [c] * n_spoof
    return LabeledScoreSet(tuple(trials), np.concatenate(scores), np.array(bona),
                           tuple(attacks), tuple(codecs))


def pooled_min_dcf(separation):
    return metrics.min_dcf(condition_set(separation))[0]


@functools.lru_cache(maxsize=None)
def find_separation(target=TARGET_MIN_DCF + 0.00005, lo=0.0, hi=12.0, iters=60):
    """Smallest separation whose pooled minDCF is <= ``target``, by bisection.

    The default target is the top of the interval that rounds to 0.0937.
    """
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if pooled_min_dcf(mid) > target:
            lo = mid
        else:
            hi = mid
    return hi


def golden_tables():
    data = condition_set(find_separation())
    out = {}
    for metric in ("minDCF", "EER"):
        table = report.build_table(data, metric)
        out[f"{metric}.tsv"] = report.render(table, "tsv")
        out[f"{metric}.md"] = report.render(table, "markdown")
    return out


if __name__ == "__main__":
    GOLDEN.mkdir(exist_ok=True)
    for name, text in golden_tables().items():
        (GOLDEN / name).write_text(text, encoding="utf-8")
        print("wrote", name, file=sys.stderr)
