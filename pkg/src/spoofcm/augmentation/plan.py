"""Per-sample random augmentation policy, replayable from a JSON-lines log.

Stage 1 picks one of none / noise / reverberation / noise then
reverberation; stage 2 optionally applies a codec chain. RawBoost, when
enabled, replaces both stages. Every random quantity is drawn from a
per-sample generator seeded with ``(seed, epoch, index)`` and stored in the
plan, so the output depends only on the input and the plan.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import codec, mixing
from .rawboost import VARIANTS, RawBoostParams, rawboost
from .wavio import SAMPLE_RATE

STAGE1 = ("none", "noise", "rir", "noise_rir")
SNR_RANGE = (0.0, 15.0)
CROP_SECONDS = 4.0


@dataclass(frozen=True)
class AugmentPlan:
    stage1: str = "none"
    snr_db: float | None = None
    noise_id: int | None = None
    noise_offset: int = 0
    rir_id: int | None = None
    codec: str | None = None
    rawboost: str | None = None
    rawboost_seed: int | None = None
    crop_start: int | None = None
    crop_length: int | None = None
    peak_scale: float = 1.0
    sample: str | None = None

    def __post_init__(self):
        if self.stage1 not in STAGE1:
            raise ValueError(f"unknown stage-1 branch {self.stage1!r}")
        if "noise" in self.stage1 and (self.noise_id is None or self.snr_db is None):
            raise ValueError("noise branch needs noise_id and snr_db")
        if "rir" in self.stage1 and self.rir_id is None:
            raise ValueError("reverberation branch needs rir_id")
        if self.codec is not None and self.codec not in codec.CHAINS:
            raise ValueError(f"unknown codec chain {self.codec!r}")
        if self.rawboost is not None:
            if self.rawboost not in VARIANTS:
                raise ValueError(f"unknown RawBoost variant {self.rawboost!r}")
            if self.stage1 != "none" or self.codec is not None:
                raise ValueError("RawBoost is not combined with the other augmentations")
            if self.rawboost_seed is None:
                raise ValueError("RawBoost plan needs rawboost_seed")

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, line):
        return cls(**json.loads(line))


def sample_plan(rng, n_noises, n_rirs, stage1_probs=(0.25, 0.25, 0.25, 0.25), codec_prob=0.5,
                chains=tuple(codec.CHAINS), snr_range=SNR_RANGE, rawboost_variant=None):
    """Draw an :class:`AugmentPlan` from ``rng``.

    With ``rawboost_variant`` set, the plan only carries that variant and a
    seed for its own generator.
    """
    if rawboost_variant is not None:
        return AugmentPlan(rawboost=rawboost_variant, rawboost_seed=int(rng.integers(2 ** 63)))
    branch = STAGE1[rng.choice(len(STAGE1), p=stage1_probs)]
    fields = {"stage1": branch}
    if "noise" in branch:
        if n_noises == 0:
            raise ValueError("noise branch selected but the noise bank is empty")
        fields["noise_id"] = int(rng.integers(n_noises))
        fields["snr_db"] = float(rng.uniform(*snr_range))
        fields["noise_offset"] = int(rng.integers(2 ** 31))
    if "rir" in branch:
        if n_rirs == 0:
            raise ValueError("reverberation branch selected but the RIR bank is empty")
        fields["rir_id"] = int(rng.integers(n_rirs))
    if rng.random() < codec_prob:
        fields["codec"] = chains[int(rng.integers(len(chains)))]
    return AugmentPlan(**fields)


def crop_start(n, length, rng):
    return int(rng.integers(0, n - length + 1)) if n >= length else 0


def take(wave, start, length):
    """``length`` samples from ``start``; wraps around when the input is short."""
    return wave[(start + np.arange(length)) % wave.size]


def crop(wave, seconds=CROP_SECONDS, rng=None):
    """Random fixed-length excerpt; inputs shorter than ``seconds`` are wrap-padded."""
    wave = np.asarray(wave)
    if wave.size == 0:
        raise ValueError("cannot crop an empty waveform")
    length = int(round(seconds * SAMPLE_RATE))
    rng = rng if rng is not None else np.random.default_rng()
    return take(wave, crop_start(wave.size, length, rng), length)


def apply_plan(wave, plan, noises=(), rirs=(), rawboost_params=None, external=None):
    """Run ``plan`` on ``wave``; returns the output and the plan with its peak scale filled in."""
    x = np.asarray(wave, dtype=np.float64)
    if plan.crop_length is not None:
        x = take(x, plan.crop_start or 0, plan.crop_length)
    if plan.rawboost is not None:
        rb_rng = np.random.default_rng(plan.rawboost_seed)
        return rawboost(x, plan.rawboost, rb_rng, rawboost_params), plan
    scale = 1.0
    if "noise" in plan.stage1:
        x, info = mixing.mix_noise(x, noises[plan.noise_id], plan.snr_db, plan.noise_offset,
                                   return_info=True)
        scale = info["peak_scale"]
    if "rir" in plan.stage1:
        x = mixing.apply_rir(x, rirs[plan.rir_id])
    if plan.codec is not None:
        x = codec.sim_codec(x, plan.codec, external)
    return x, replace(plan, peak_scale=scale)


def sample_rng(seed, epoch, index):
    return np.random.default_rng([seed, epoch, index])


def augment_sample(wave, seed, epoch, index, noises=(), rirs=(), crop_seconds=CROP_SECONDS,
                   rawboost_variant=None, sample=None, **plan_kwargs):
    """Crop and augment one input with its own generator; returns ``(output, plan)``."""
    rng = sample_rng(seed, epoch, index)
    fields = {"sample": sample}
    if crop_seconds is not None:
        length = int(round(crop_seconds * SAMPLE_RATE))
        fields.update(crop_start=crop_start(len(wave), length, rng), crop_length=length)
    plan = sample_plan(rng, len(noises), len(rirs), rawboost_variant=rawboost_variant, **plan_kwargs)
    return apply_plan(wave, replace(plan, **fields), noises, rirs)


def augment_many(waves, seed, epoch, noises=(), rirs=(), workers=1, names=None, **kwargs):
    """Augment a list of inputs in parallel; output order and content do not depend on ``workers``."""
    names = names if names is not None else [None] * len(waves)

    def job(i):
        return augment_sample(waves[i], seed, epoch, i, noises, rirs, sample=names[i], **kwargs)

    if workers <= 1:
        return [job(i) for i in range(len(waves))]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(job, range(len(waves))))


def replay(waves, plans, noises=(), rirs=(), workers=1, **kwargs):
    def job(i):
        return apply_plan(waves[i], plans[i], noises, rirs, **kwargs)[0]

    if workers <= 1:
        return [job(i) for i in range(len(waves))]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(job, range(len(waves))))


def write_plans(path, plans):
    Path(path).write_text("".join(p.to_json() + "\n" for p in plans))


def read_plans(path):
    return [AugmentPlan.from_json(line) for line in Path(path).read_text().splitlines() if line.strip()]
