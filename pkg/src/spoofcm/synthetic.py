"""Toy speech-like corpus with bonafide and spoofed utterances.

Bonafide utterances are jittered harmonic sources with a random formant
envelope, a syllable-rate amplitude envelope and breath noise. Each
attack leaves its own trace: a frozen pitch contour with high-band hiss,
a muffled roll-off without breath noise, or frame-periodic gating with a
steady narrowband artefact. ``strength`` scales how audible the trace is.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .augmentation import SAMPLE_RATE, sim_codec
from .pooling.encoder import log_band_frames

ATTACKS = ("A01", "A02", "A03")
# eval-time codec conditions and the simulated chains behind them
CODEC_CONDITIONS = {"-": None, "codec-1": "mp3-high", "codec-2": "ogg-low", "codec-3": "mp3-high>ogg-low"}


@dataclass
class Utterance:
    trial: str
    wave: np.ndarray
    label: str
    attack: str = "-"
    codec: str = "-"


def _voice(rng, n, jitter=True, rolloff=1.0):
    t = np.arange(n) / SAMPLE_RATE
    f0 = rng.uniform(90.0, 220.0)
    if jitter:
        drift = np.cumsum(rng.normal(0.0, 1.0, n)) / np.sqrt(n) * 15.0
        f0_track = f0 * (1 + 0.05 * np.sin(2 * np.pi * rng.uniform(3, 6) * t)) + drift
    else:
        f0_track = np.full(n, f0)
    phase = 2 * np.pi * np.cumsum(f0_track) / SAMPLE_RATE
    formants = rng.uniform(300, 3500, 3)
    out = np.zeros(n)
    for k in range(1, int(7000 // f0) + 1):
        fk = k * f0
        env = sum(np.exp(-0.5 * ((fk - fm) / 250.0) ** 2) for fm in formants) + 0.05
        out += env / k ** rolloff * np.sin(k * phase)
    syllables = 0.5 * (1 + np.sin(2 * np.pi * rng.uniform(3, 5) * t + rng.uniform(0, 2 * np.pi)))
    return out * (0.3 + 0.7 * syllables)


def _hiss(rng, n, lo, hi):
    """White noise band-limited to ``[lo, hi]`` Hz via the FFT."""
    spec = np.fft.rfft(rng.normal(size=n))
    f = np.fft.rfftfreq(n, 1 / SAMPLE_RATE)
    spec[(f < lo) | (f > hi)] = 0
    out = np.fft.irfft(spec, n)
    return out / (np.std(out) + 1e-12)


def utterance(rng, label, attack="-", seconds=1.5, strength=1.0):
    n = int(seconds * SAMPLE_RATE)
    if label == "bonafide":
        x = _voice(rng, n)
        x = x / np.std(x) + 0.03 * rng.normal(size=n)
    elif attack == "A01":
        # frozen pitch contour plus high-band vocoder hiss
        x = _voice(rng, n, jitter=False)
        x = x / np.std(x) + 0.03 * rng.normal(size=n) + 0.3 * strength * _hiss(rng, n, 5000, 7800)
    elif attack == "A02":
        # muffled: steeper harmonic roll-off, no breath noise
        x = _voice(rng, n, rolloff=1.0 + 1.5 * strength)
        x = x / np.std(x)
    elif attack == "A03":
        # frame-periodic gating and a steady narrowband artefact
        x = _voice(rng, n)
        x = x / np.std(x) + 0.03 * rng.normal(size=n)
        hop = 256
        x = x * (1.0 - 0.5 * strength * (np.arange(n) % hop < 24))
        x += 0.3 * strength * _hiss(rng, n, 2900, 3100)
    else:
        raise ValueError(f"unknown attack {attack!r}")
    return 0.5 * x / np.max(np.abs(x))


def make_corpus(rng, n_bonafide, n_spoof, prefix="U", seconds=1.5, strength=1.0, codecs=False):
    """Utterances with balanced attacks; ``codecs`` assigns an eval codec condition to each."""
    items = []
    labels = ["bonafide"] * n_bonafide + ["spoof"] * n_spoof
    conditions = list(CODEC_CONDITIONS)
    for i, label in enumerate(labels):
        attack = "-" if label == "bonafide" else ATTACKS[i % len(ATTACKS)]
        wave = utterance(rng, label, attack, seconds, strength)
        codec = "-"
        if codecs:
            codec = conditions[int(rng.integers(len(conditions)))]
            if CODEC_CONDITIONS[codec] is not None:
                wave = sim_codec(wave, CODEC_CONDITIONS[codec])
        items.append(Utterance(f"{prefix}{i:05d}", wave, label, attack, codec))
    order = rng.permutation(len(items))
    return [items[i] for i in order]


def features(wave, n_bands=40):
    """Log band energies, ``(T, n_bands)``, shifted and scaled by one per-utterance constant.

    A single offset (not one per band) keeps the spectral shape intact.
    """
    f = log_band_frames(wave, n_bands=n_bands)
    return (f - f.mean()) / (f.std() + 1e-3)


def key_lines(items):
    return "".join(f"{u.trial} {u.label} {u.attack} {u.codec}\n" for u in items)
