"""End-to-end run of the toolkit on a generated toy corpus, driven through the CLI.

synthetic waveforms -> augmentation -> toy-encoder stacks -> WA / MHFA
training -> held-out scoring -> calibration -> greedy fusion -> report.
"""

from __future__ import annotations

import contextlib
import io
import json
from pathlib import Path

import numpy as np

from . import cli
from .augmentation import write_wav
from .synthetic import key_lines, make_corpus

TRAIN_CONFIG = {
    "epochs": 40, "patience": 40, "crop_frames": 50, "batch_size": 32,
    "lr_backend": 5e-2, "lr_encoder": 1e-3,
}
SYSTEMS = {
    "wa": ["--backend", "wa"],
    "mhfa": ["--backend", "mhfa", "--heads", "4"],
    "wa_ft": ["--backend", "wa", "--finetune-encoder"],
}


def run_cli(argv):
    """Run one CLI invocation; returns ``(exit_code, stdout)``."""
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        code = cli.main([str(a) for a in argv])
    return code, buf.getvalue()


def parse_metrics(text):
    out = {}
    for line in text.splitlines():
        if line.startswith("#") or "\t" not in line:
            continue
        name, value = line.split("\t", 1)
        try:
            out[name] = float(value)
        except ValueError:
            out[name] = value
    return out


def _write_split(root, name, items):
    d = root / name
    d.mkdir(parents=True, exist_ok=True)
    for u in items:
        write_wav(d / f"{u.trial}.wav", u.wave)
    (root / f"{name}.key").write_text(key_lines(items))
    return d


def _write_banks(root, rng):
    noise_dir = root / "noise_bank"
    rir_dir = root / "rir_bank"
    noise_dir.mkdir(exist_ok=True)
    rir_dir.mkdir(exist_ok=True)
    for i, width in enumerate((1, 3, 9)):
        noise = np.convolve(rng.normal(size=20000), np.ones(width) / width, "same")
        write_wav(noise_dir / f"noise{i}.wav", 0.5 * noise / np.max(np.abs(noise)))
    for i, decay in enumerate((100, 300, 800)):
        rir = rng.normal(size=2000) * np.exp(-np.arange(2000) / decay)
        rir[0] = np.max(np.abs(rir)) * 1.5
        write_wav(rir_dir / f"rir{i}.wav", 0.9 * rir / np.max(np.abs(rir)))
    return noise_dir, rir_dir


def run(workdir, seed=0, n_per_class=(200, 150, 150), log=None):
    """Run the whole pipeline in ``workdir``; returns a dict of results.

    Raises ``RuntimeError`` if any CLI step exits non-zero.
    """
    root = Path(workdir)
    root.mkdir(parents=True, exist_ok=True)
    say = log or (lambda msg: None)
    rng = np.random.default_rng([seed, 99])
    n_train, n_dev, n_eval = n_per_class
    train_dir = _write_split(root, "train", make_corpus(rng, n_train, n_train, "T"))
    dev_dir = _write_split(root, "dev", make_corpus(rng, n_dev, n_dev, "D", codecs=True))
    eval_dir = _write_split(root, "eval", make_corpus(rng, n_eval, n_eval, "E", codecs=True))
    noise_dir, rir_dir = _write_banks(root, rng)
    (root / "train.json").write_text(json.dumps(TRAIN_CONFIG))
    say("corpus written")

    def step(argv):
        code, out = run_cli(argv)
        if code != cli.EXIT_OK:
            raise RuntimeError(f"step {argv[0]} exited with {code}")
        return out

    step(["augment", "--in", train_dir, "--out", root / "train_aug", "--noise-bank", noise_dir,
          "--rir-bank", rir_dir, "--seed", seed, "--crop", 1.0, "--workers", 4])
    say("augmented")

    for name, flags in SYSTEMS.items():
        out = step(["train", "--inputs", root / "train_aug", "--keys", root / "train.key",
                    "--config", root / "train.json", "--seed", seed, "--out", root / f"{name}.npz",
                    "--dev-inputs", dev_dir, "--dev-keys", root / "dev.key",
                    "--score", dev_dir, root / f"dev_{name}.txt",
                    "--score", eval_dir, root / f"eval_{name}.txt", *flags])
        say(f"trained {name}: {out.strip().splitlines()}")

    step(["calibrate", "--scores", f"mhfa={root / 'dev_mhfa.txt'}", "--keys", root / "dev.key",
          "--out", root / "calibration_mhfa.txt"])
    dev_scores = [f"{n}={root / f'dev_{n}.txt'}" for n in SYSTEMS]
    greedy = parse_metrics(step(["greedy-fuse", "--scores", *dev_scores, "--keys", root / "dev.key",
                                 "--k", 3, "--out", root / "fusion.txt"]))
    eval_scores = [f"{n}={root / f'eval_{n}.txt'}" for n in SYSTEMS]
    step(["fuse", "--model", root / "fusion.txt", "--scores", *eval_scores,
          "--scores-out", root / "eval_fused.txt"])
    eval_metrics = parse_metrics(step(["eval", "--scores", root / "eval_fused.txt",
                                       "--keys", root / "eval.key"]))
    for metric, fmt, suffix in (("minDCF", "markdown", "md"), ("EER", "tsv", "tsv")):
        step(["report", "--scores", root / "eval_fused.txt", "--keys", root / "eval.key",
              "--metric", metric, "--format", fmt, "--out", root / f"report_{metric}.{suffix}"])
    say("fused and reported")

    individual = {n: greedy[f"min_dcf[{n}]"] for n in SYSTEMS}
    return {
        "individual_dev_min_dcf": individual,
        "fused_dev_min_dcf": greedy["min_dcf"],
        "selected": greedy["selected"].split(","),
        "eval": eval_metrics,
        "report": (root / "report_minDCF.md").read_text(encoding="utf-8"),
    }
