"""Lossy-codec simulation: band limiting followed by coarse re-quantization.

Real mp3/ogg encoders are not used. Each stage keeps the spectrum below a
quality-dependent cutoff with a zero-phase FIR low-pass and re-quantizes to
a quality-dependent bit depth. The format label is carried for bookkeeping
(and for the external encoder hook) only.
"""

from __future__ import annotations

import shlex
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import signal

from .wavio import SAMPLE_RATE, read_wav, write_wav

FORMATS = ("mp3", "ogg")
QUALITY = {
    # cutoff in Hz, bits per sample
    "high": (7600.0, 12),
    "low": (4000.0, 8),
}
N_TAPS = 129
KAISER_BETA = 8.0


@dataclass(frozen=True)
class CodecStage:
    format: str
    quality: str

    def __post_init__(self):
        if self.format not in FORMATS:
            raise ValueError(f"unknown codec format {self.format!r}")
        if self.quality not in QUALITY:
            raise ValueError(f"unknown codec quality {self.quality!r}")

    @property
    def name(self):
        return f"{self.format}-{self.quality}"

    @property
    def cutoff(self):
        return QUALITY[self.quality][0]

    @property
    def bits(self):
        return QUALITY[self.quality][1]

    @classmethod
    def parse(cls, name):
        fmt, _, quality = name.partition("-")
        return cls(fmt, quality)


def _chain(spec):
    return tuple(CodecStage.parse(s) for s in spec.split(">"))


# single stages first, then the two-stage trans-codings
CHAINS = {
    name: _chain(name)
    for name in (
        "mp3-high", "mp3-low", "ogg-high", "ogg-low",
        "mp3-high>ogg-high", "mp3-low>ogg-low", "mp3-high>ogg-low", "ogg-high>mp3-low",
    )
}


def _lowpass_taps(cutoff):
    return signal.firwin(N_TAPS, cutoff, window=("kaiser", KAISER_BETA), fs=SAMPLE_RATE)


_TAPS = {q: _lowpass_taps(c) for q, (c, _) in QUALITY.items()}


def lowpass(wave, quality):
    """Zero-phase low-pass: symmetric FIR applied centred on each sample."""
    taps = _TAPS[quality]
    full = np.convolve(wave, taps)
    delay = (N_TAPS - 1) // 2
    return full[delay:delay + len(wave)]


def quantize(wave, bits):
    """Uniform mid-tread quantizer over [-1, 1]."""
    levels = 2.0 ** (bits - 1)
    return np.clip(np.round(wave * levels), -levels, levels - 1) / levels


def apply_stage(wave, stage):
    return quantize(lowpass(np.asarray(wave, dtype=np.float64), stage.quality), stage.bits)


def resolve_chain(chain):
    if isinstance(chain, str):
        if chain not in CHAINS:
            raise ValueError(f"unknown codec chain {chain!r}")
        return CHAINS[chain]
    chain = tuple(chain)
    if not 1 <= len(chain) <= 2:
        raise ValueError("a codec chain has one or two stages")
    return chain


def sim_codec(wave, chain, external=None):
    """Run ``wave`` through every stage of ``chain`` (a name from ``CHAINS`` or stages).

    ``external`` optionally maps a format name to a shell command template
    with ``{input}``, ``{output}`` and ``{quality}`` placeholders; matching
    stages are then run through the real encoder instead of the simulation.
    """
    out = np.asarray(wave, dtype=np.float64)
    for stage in resolve_chain(chain):
        if external and stage.format in external:
            out = run_external(out, external[stage.format], stage)
        else:
            out = apply_stage(out, stage)
    return out


def run_external(wave, template, stage):
    """Round-trip through an external encoder command; the output length is forced to match."""
    with tempfile.TemporaryDirectory() as tmp:
        src = Path(tmp) / "in.wav"
        dst = Path(tmp) / "out.wav"
        write_wav(src, wave)
        cmd = template.format(input=shlex.quote(str(src)), output=shlex.quote(str(dst)),
                              quality=stage.quality)
        subprocess.run(cmd, shell=True, check=True, capture_output=True)
        out = read_wav(dst)
    if out.size >= wave.size:
        return out[:wave.size]
    return np.concatenate([out, np.zeros(wave.size - out.size)])
