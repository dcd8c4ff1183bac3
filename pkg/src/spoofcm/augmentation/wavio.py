"""16-bit PCM mono WAV files and noise/RIR banks."""

import wave
from pathlib import Path

import numpy as np

SAMPLE_RATE = 16000


def read_wav(path):
    """Samples of a 16 kHz mono 16-bit WAV file as float64 in [-1, 1)."""
    with wave.open(str(path), "rb") as fh:
        if fh.getnchannels() != 1 or fh.getsampwidth() != 2:
            raise ValueError(f"{path}: expected mono 16-bit PCM")
        if fh.getframerate() != SAMPLE_RATE:
            raise ValueError(f"{path}: sample rate {fh.getframerate()}, expected {SAMPLE_RATE}")
        raw = fh.readframes(fh.getnframes())
    return np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0


def write_wav(path, samples):
    x = np.asarray(samples, dtype=np.float64)
    pcm = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(SAMPLE_RATE)
        fh.writeframes(pcm.tobytes())


def bank_entries(source):
    """``(id, path)`` pairs from a manifest of ``id<TAB>path`` lines or a directory of WAVs.

    Manifest paths are relative to the manifest's directory. Entries are
    sorted by id so that bank indices are stable.
    """
    source = Path(source)
    if source.is_dir():
        entries = [(p.stem, p) for p in source.glob("*.wav")]
    else:
        entries = []
        for n, line in enumerate(source.read_text().splitlines(), 1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"{source}:{n}: expected 'id<TAB>path'")
            p = Path(parts[1])
            entries.append((parts[0], p if p.is_absolute() else source.parent / p))
    ids = [e[0] for e in entries]
    if len(set(ids)) != len(ids):
        raise ValueError(f"{source}: duplicate bank ids")
    return sorted(entries)


def load_bank(source):
    """Load every entry of a bank; returns ``(ids, waves)``."""
    entries = bank_entries(source)
    return [e[0] for e in entries], [read_wav(p) for _, p in entries]
