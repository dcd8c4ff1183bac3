"""Additive noise at a target SNR and room-impulse-response convolution."""

import math

import numpy as np
from scipy import signal

# kernels longer than this go through overlap-add FFT convolution
DIRECT_CONV_MAX = 256


def power(x):
    return float(np.mean(np.square(x)))


def fit_length(noise, n, offset=0):
    """Noise cropped (from ``offset``) or looped to exactly ``n`` samples."""
    noise = np.asarray(noise, dtype=np.float64)
    if noise.size == 0:
        raise ValueError("empty noise signal")
    idx = (offset + np.arange(n)) % noise.size
    return noise[idx]


def peak_guard(x):
    """Rescale so that ``|x| <= 1``; returns the signal and the scale applied."""
    peak = float(np.max(np.abs(x)))
    if peak > 1.0:
        scale = 1.0 / peak
        return x * scale, scale
    return x, 1.0


def mix_noise(wave, noise, snr_db, offset=0, return_info=False):
    """``wave + g * noise`` with ``g`` chosen so the mixture has SNR ``snr_db``.

    Powers are mean squares over the wave's length after looping or cropping
    the noise. ``snr_db = inf`` returns the input unchanged. If the mixture
    would clip it is rescaled as a whole; ``return_info`` exposes the gain and
    that scale.
    """
    wave = np.asarray(wave, dtype=np.float64)
    if math.isinf(snr_db) and snr_db > 0:
        out = wave.copy()
        info = {"gain": 0.0, "peak_scale": 1.0}
        return (out, info) if return_info else out
    if not math.isfinite(snr_db):
        raise ValueError("snr_db must be finite or +inf")
    p_wave = power(wave)
    if p_wave == 0:
        raise ValueError("silent input: SNR is undefined")
    noise = fit_length(noise, wave.size, offset)
    p_noise = power(noise)
    if p_noise == 0:
        raise ValueError("silent noise cannot be mixed at a finite SNR")
    gain = math.sqrt(p_wave / (p_noise * 10.0 ** (snr_db / 10.0)))
    out, scale = peak_guard(wave + gain * noise)
    info = {"gain": gain, "peak_scale": scale}
    return (out, info) if return_info else out


def convolve(x, h):
    """Full linear convolution; direct for short kernels, overlap-add otherwise."""
    if min(len(x), len(h)) <= DIRECT_CONV_MAX:
        return np.convolve(x, h)
    return signal.oaconvolve(x, h)


def apply_rir(wave, rir):
    """Reverberate ``wave``: full convolution cut to the input length, peak matched to the input."""
    wave = np.asarray(wave, dtype=np.float64)
    rir = np.asarray(rir, dtype=np.float64)
    if rir.size == 0:
        raise ValueError("empty impulse response")
    if not np.any(rir):
        raise ValueError("all-zero impulse response")
    out = convolve(wave, rir)[:wave.size]
    peak_in = np.max(np.abs(wave))
    peak_out = np.max(np.abs(out))
    if peak_out == 0 or peak_out == peak_in:
        return out
    return out * (peak_in / peak_out)
