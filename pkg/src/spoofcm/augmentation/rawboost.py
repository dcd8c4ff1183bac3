"""RawBoost-style data-free waveform perturbations.

Three primitives, each drawing its random parameters from the supplied
generator: linear and non-linear convolutive coloration (a sum of
multiband-notch-filtered powers of the signal), impulsive signal-dependent
noise on a random subset of samples, and stationary coloured noise at a
random SNR. ``series12`` runs the convolutive then the impulsive one.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import signal

from .mixing import peak_guard
from .wavio import SAMPLE_RATE

VARIANTS = ("convolutive", "impulsive", "stationary", "series12")


@dataclass(frozen=True)
class RawBoostParams:
    n_bands: int = 5
    min_f: float = 20.0
    max_f: float = 8000.0
    min_bw: float = 100.0
    max_bw: float = 1000.0
    min_coeff: int = 10
    max_coeff: int = 100
    min_g: float = 0.0
    max_g: float = 0.0
    min_bias_lin_nonlin: float = 5.0
    max_bias_lin_nonlin: float = 20.0
    n_f: int = 5
    p: float = 10.0       # percentage of samples hit by impulses (upper bound)
    g_sd: float = 2.0
    snr_min: float = 10.0
    snr_max: float = 40.0

    def __post_init__(self):
        checks = [
            (self.n_bands >= 1, "n_bands must be >= 1"),
            (0 <= self.min_f <= self.max_f <= SAMPLE_RATE / 2, "need 0 <= min_f <= max_f <= fs/2"),
            (0 < self.min_bw <= self.max_bw, "need 0 < min_bw <= max_bw"),
            (1 <= self.min_coeff <= self.max_coeff, "need 1 <= min_coeff <= max_coeff"),
            (self.min_g <= self.max_g, "need min_g <= max_g"),
            (self.n_f >= 1, "n_f must be >= 1"),
            (0 <= self.p <= 100, "p is a percentage"),
            (self.g_sd >= 0, "g_sd must be non-negative"),
            (self.snr_min <= self.snr_max, "need snr_min <= snr_max"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(f"invalid RawBoost parameters: {msg}")

    def to_dict(self):
        return asdict(self)


def _uniform(rng, lo, hi):
    return lo + (hi - lo) * rng.random()


def norm_wav(x, always):
    peak = np.max(np.abs(x))
    if peak == 0:
        return x
    if always or peak > 1:
        return x / peak
    return x


def multiband_filter(rng, prm, min_g, max_g):
    """Cascade of ``n_bands`` random band-stop FIRs, normalized to a random gain in dB."""
    b = np.ones(1)
    nyq = SAMPLE_RATE / 2
    for _ in range(prm.n_bands):
        fc = _uniform(rng, prm.min_f, prm.max_f)
        bw = _uniform(rng, prm.min_bw, prm.max_bw)
        c = int(_uniform(rng, prm.min_coeff, prm.max_coeff))
        if c % 2 == 0:
            c += 1
        f1 = max(fc - bw / 2, 1e-3)
        f2 = min(fc + bw / 2, nyq - 1e-3)
        b = np.convolve(signal.firwin(c, [f1, f2], window="hamming", fs=SAMPLE_RATE), b)
    g = _uniform(rng, min_g, max_g)
    _, h = signal.freqz(b, 1, fs=SAMPLE_RATE)
    return 10.0 ** (g / 20.0) * b / np.max(np.abs(h))


def convolutive(x, rng, prm):
    y = np.zeros_like(x)
    min_g, max_g = prm.min_g, prm.max_g
    for i in range(prm.n_f):
        if i == 1:
            min_g -= prm.min_bias_lin_nonlin
            max_g -= prm.max_bias_lin_nonlin
        b = multiband_filter(rng, prm, min_g, max_g)
        y = y + signal.lfilter(b, 1, x ** (i + 1))
    y = y - np.mean(y)
    return norm_wav(y, False), {}


def impulsive(x, rng, prm):
    beta = _uniform(rng, 0.0, prm.p)
    n = int(x.size * beta / 100)
    pos = rng.permutation(x.size)[:n]
    f_r = (2 * rng.random(n) - 1) * (2 * rng.random(n) - 1)
    y = x.copy()
    y[pos] = x[pos] + prm.g_sd * x[pos] * f_r
    return norm_wav(y, False), {"n_impulses": n}


def stationary(x, rng, prm):
    noise = rng.normal(0.0, 1.0, x.size)
    b = multiband_filter(rng, prm, prm.min_g, prm.max_g)
    noise = norm_wav(signal.lfilter(b, 1, noise), True)
    snr = _uniform(rng, prm.snr_min, prm.snr_max) if prm.snr_min < prm.snr_max else prm.snr_min
    if math.isinf(snr) and snr > 0:
        return x.copy(), {"snr_db": snr, "peak_scale": 1.0}
    nn = np.linalg.norm(noise)
    noise = noise / nn * np.linalg.norm(x) / 10.0 ** (0.05 * snr) if nn > 0 else noise
    out, scale = peak_guard(x + noise)
    return out, {"snr_db": snr, "peak_scale": scale}


def rawboost(wave, variant, rng, params=None, return_info=False):
    """Apply one RawBoost variant; ``rng`` is a numpy Generator."""
    prm = params or RawBoostParams()
    x = np.asarray(wave, dtype=np.float64)
    if variant == "convolutive":
        out, info = convolutive(x, rng, prm)
    elif variant == "impulsive":
        out, info = impulsive(x, rng, prm)
    elif variant == "stationary":
        out, info = stationary(x, rng, prm)
    elif variant == "series12":
        y, _ = convolutive(x, rng, prm)
        out, info = impulsive(y, rng, prm)
    else:
        raise ValueError(f"unknown RawBoost variant {variant!r}")
    return (out, info) if return_info else out
