"""Seeded online waveform augmentation."""

from .codec import CHAINS, CodecStage, sim_codec
from .mixing import apply_rir, mix_noise, power
from .plan import (
    STAGE1,
    AugmentPlan,
    apply_plan,
    augment_many,
    augment_sample,
    crop,
    read_plans,
    replay,
    sample_plan,
    sample_rng,
    write_plans,
)
from .rawboost import VARIANTS, RawBoostParams, rawboost
from .wavio import SAMPLE_RATE, bank_entries, load_bank, read_wav, write_wav

__all__ = [
    "AugmentPlan", "CHAINS", "CodecStage", "RawBoostParams", "SAMPLE_RATE", "STAGE1", "VARIANTS",
    "apply_plan", "apply_rir", "augment_many", "augment_sample", "bank_entries", "crop",
    "load_bank", "mix_noise", "power", "rawboost", "read_plans", "read_wav", "replay",
    "sample_plan", "sample_rng", "sim_codec", "write_plans", "write_wav",
]
