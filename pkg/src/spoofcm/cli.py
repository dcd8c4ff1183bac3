"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure
(non-convergence, divergence, failed gradient check). Metrics go to stdout
as ``name<TAB>value`` lines; models, tables and scores go to files.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import calibration, metrics, report
from .score_io import DataError, join, load_set, read_keys, read_scores, write_scores

DEFAULT_SEED = 0
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class NumericalFailure(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common():
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=DEFAULT_SEED,
                   help="root of all random streams (default: %(default)s)")
    g.add_argument("--dcf-cmiss", type=float, default=1.0, help="miss cost (default: %(default)s)")
    g.add_argument("--dcf-cfa", type=float, default=10.0, help="false-alarm cost (default: %(default)s)")
    g.add_argument("--dcf-prior", type=float, default=0.95,
                   help="bonafide prior (default: %(default)s)")
    return p


def _dcf(args):
    return metrics.DcfParams(args.dcf_cmiss, args.dcf_cfa, args.dcf_prior)


def _named(items):
    """``NAME=PATH`` or bare paths (named by file stem)."""
    out = []
    for item in items:
        name, sep, path = item.partition("=")
        if not sep:
            name, path = Path(item).stem, item
        out.append((name, Path(path)))
    names = [n for n, _ in out]
    if len(set(names)) != len(names):
        raise UsageError(f"system names must be unique, got {names}; use NAME=PATH")
    return out


def _load_systems(score_args, key_path):
    """Score files joined to one key file and aligned on the first file's trial order."""
    systems = _named(score_args)
    keys = read_keys(key_path)
    sets = {}
    for name, path in systems:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            sets[name] = join(read_scores(path), keys)
    base = sets[systems[0][0]]
    index = {t: i for i, t in enumerate(base.trials)}
    matrix = {}
    for name, path in systems:
        s = sets[name]
        if set(s.trials) != set(index):
            raise DataError(f"{path} does not score the same trials as {systems[0][1]}")
        aligned = np.empty(len(base))
        aligned[[index[t] for t in s.trials]] = s.scores
        matrix[name] = aligned
    return base, matrix


def _read_unlabeled(score_args):
    systems = _named(score_args)
    recs = {name: read_scores(path) for name, path in systems}
    first = systems[0][0]
    trials = [r.trial for r in recs[first]]
    matrix = {}
    for name, path in systems:
        by_id = {r.trial: r.score for r in recs[name]}
        if set(by_id) != set(trials):
            raise DataError(f"{path} does not score the same trials as {systems[0][1]}")
        matrix[name] = np.array([by_id[t] for t in trials])
    return trials, matrix


def _fit_config(args):
    return calibration.FitConfig.for_dcf(_dcf(args), max_iterations=args.max_iterations)


def _print_metrics(values, params):
    tar, non = values
    sys.stdout.write(metrics.evaluate(tar, non, params).to_text())


# -- subcommands --------------------------------------------------------------

def cmd_eval(args):
    data = load_set(args.scores, args.keys)
    data.require_both_classes()
    sys.stdout.write(metrics.evaluate(data, params=_dcf(args), eer_method=args.eer_method).to_text())


def _fit_and_report(args, matrix, names, labels, trials, fit):
    model = fit(np.vstack([matrix[n] for n in names]), labels, _fit_config(args), names=tuple(names))
    Path(args.out).write_text(model.to_text())
    fused = calibration.apply(model, [matrix[n] for n in names])
    if args.scores_out:
        write_scores(args.scores_out, trials, fused)
    return model, fused


def cmd_calibrate(args):
    base, matrix = _load_systems([args.scores], args.keys)
    base.require_both_classes()
    name = next(iter(matrix))
    _, llr = _fit_and_report(args, matrix, [name], base.is_bonafide, base.trials, calibration.fit)
    _print_metrics((llr[base.is_bonafide], llr[~base.is_bonafide]), _dcf(args))


def cmd_fuse(args):
    if args.model:
        model = calibration.FusionModel.from_text(Path(args.model).read_text())
        trials, matrix = _read_unlabeled(args.scores)
        missing = [n for n in model.names if n not in matrix]
        if missing:
            raise DataError(f"model {args.model} needs systems {missing}; name inputs as NAME=PATH")
        fused = calibration.apply(model, matrix)
        if not args.scores_out:
            raise UsageError("--scores-out is required when applying a model")
        write_scores(args.scores_out, trials, fused)
        return
    if not args.keys or not args.out:
        raise UsageError("fitting a fusion needs --keys and --out (or pass --model to apply one)")
    base, matrix = _load_systems(args.scores, args.keys)
    base.require_both_classes()
    _, fused = _fit_and_report(args, matrix, list(matrix), base.is_bonafide, base.trials, calibration.fit)
    _print_metrics((fused[base.is_bonafide], fused[~base.is_bonafide]), _dcf(args))


def cmd_greedy_fuse(args):
    base, matrix = _load_systems(args.scores, args.keys)
    base.require_both_classes()
    labels = base.is_bonafide
    selected, model, ranking = calibration.greedy_select(matrix, labels, _dcf(args), args.k,
                                                         _fit_config(args))
    Path(args.out).write_text(model.to_text())
    fused = calibration.apply(model, matrix)
    if args.scores_out:
        write_scores(args.scores_out, base.trials, fused)
    for name, value in ranking:
        print(f"min_dcf[{name}]\t{value:.6f}")
    print(f"selected\t{','.join(selected)}")
    _print_metrics((fused[labels], fused[~labels]), _dcf(args))


def _read_inputs(directory, keys=None):
    """Trial ids and arrays from a directory of ``.fstk`` stacks or ``.wav`` files."""
    from .augmentation import read_wav
    from .pooling import read_stack

    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"input directory {directory} does not exist")
    stacks = sorted(directory.glob("*.fstk"))
    wavs = sorted(directory.glob("*.wav"))
    if stacks and wavs:
        raise DataError(f"{directory} mixes .fstk and .wav inputs")
    if not stacks and not wavs:
        raise DataError(f"{directory} holds no .fstk or .wav inputs")
    files = stacks or wavs
    trials = [p.stem for p in files]
    arrays = [read_stack(p) for p in stacks] if stacks else [read_wav(p) for p in wavs]
    labels = None
    if keys is not None:
        by_id = {k.trial: k for k in read_keys(keys)}
        missing = [t for t in trials if t not in by_id]
        if missing:
            raise DataError(f"{keys} has no key for input {missing[0]!r}")
        labels = np.array([by_id[t].is_bonafide for t in trials])
    return trials, arrays, bool(wavs), labels


def cmd_train(args):
    from .pooling import (TrainConfig, ToyEncoder, TrainingDivergedError, save_checkpoint,
                          score_inputs, train)
    from .pooling.train import config_dict
    from .synthetic import features

    raw = json.loads(Path(args.config).read_text()) if args.config else {}
    if not isinstance(raw, dict):
        raise DataError(f"{args.config}: training config must be a JSON object")
    config = TrainConfig.from_dict(raw)
    trials, inputs, is_wav, labels = _read_inputs(args.inputs, args.keys)
    encoder = None
    if is_wav:
        inputs = [features(w, args.n_bands) for w in inputs]
        encoder = ToyEncoder.init(args.n_bands, args.encoder_dim, args.encoder_layers,
                                  np.random.default_rng([args.seed, 2]))
        if not args.finetune_encoder:
            inputs = [encoder.forward(x)[0] for x in inputs]

    def prepare(directory, keys=None):
        t, x, wav, y = _read_inputs(directory, keys)
        if wav != is_wav:
            raise DataError(f"{directory}: input type differs from the training inputs")
        if wav:
            x = [features(w, args.n_bands) for w in x]
            if not args.finetune_encoder:
                x = [encoder.forward(v)[0] for v in x]
        return t, x, y

    scoring = None
    if args.dev_inputs:
        if not args.dev_keys:
            raise UsageError("--dev-inputs needs --dev-keys")
        _, dx, dy = prepare(args.dev_inputs, args.dev_keys)
        scoring = (dx, dy)
    backend_kwargs = {"heads": args.heads} if args.backend == "mhfa" else {}
    log = (lambda msg: print(msg, file=sys.stderr)) if args.verbose else None
    try:
        result = train(inputs, labels, config, seed=args.seed, backend=args.backend,
                       encoder=encoder if args.finetune_encoder else None, scoring=scoring,
                       backend_kwargs=backend_kwargs, log=log)
    except TrainingDivergedError as exc:
        raise NumericalFailure(str(exc)) from exc
    final_encoder = result.encoder if args.finetune_encoder else None
    meta = {"seed": args.seed, "config": config_dict(config), "best_epoch": result.best_epoch,
            "eer_trace": result.eer_trace, "features": "wav" if is_wav else "stack",
            "n_bands": args.n_bands, "finetune_encoder": bool(args.finetune_encoder)}
    enc_to_save = final_encoder if final_encoder is not None else encoder
    save_checkpoint(args.out, result.model, enc_to_save,
                    result.encoder_init if final_encoder is not None else None, meta)
    for directory, out in args.score or []:
        t, x, _ = prepare(directory)
        write_scores(out, t, score_inputs(result.model, x, final_encoder))
    print(f"best_epoch\t{result.best_epoch}")
    print(f"best_eer\t{result.eer_trace[result.best_epoch]:.6f}")
    print(f"epochs_run\t{result.epochs_run}")


def cmd_grad_check(args):
    from .pooling.gradcheck import check_backend

    dtype = np.float32 if args.dtype == "float32" else np.float64
    worst = check_backend(args.backend, points=args.points, seed=args.seed, dtype=dtype,
                          rel_step=args.rel_step, softmax_weights=args.softmax_weights)
    for name in sorted(worst):
        print(f"{name}\t{worst[name]:.3e}")
    top = max(worst.values())
    print(f"max_rel_error\t{top:.3e}")
    if top >= args.tolerance:
        raise NumericalFailure(f"gradient check failed: {top:.3e} >= {args.tolerance}")


def cmd_augment(args):
    from .augmentation import (augment_many, load_bank, read_plans, read_wav, replay,
                               write_plans, write_wav)

    src = Path(args.inp)
    if not src.is_dir():
        raise DataError(f"input directory {src} does not exist")
    files = sorted(src.glob("*.wav"))
    if not files:
        raise DataError(f"{src} holds no .wav files")
    names = [p.stem for p in files]
    waves = [read_wav(p) for p in files]
    noises = load_bank(args.noise_bank)[1] if args.noise_bank else []
    rirs = load_bank(args.rir_bank)[1] if args.rir_bank else []
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.replay:
        plans = read_plans(args.replay)
        by_name = {p.sample: p for p in plans}
        missing = [n for n in names if n not in by_name]
        if missing:
            raise DataError(f"{args.replay} has no plan for {missing[0]!r}")
        outs = replay(waves, [by_name[n] for n in names], noises, rirs, workers=args.workers)
    else:
        stage1 = (0.25, 0.25, 0.25, 0.25)
        if not noises and not rirs:
            stage1 = (1.0, 0.0, 0.0, 0.0)
        elif not noises:
            stage1 = (0.5, 0.0, 0.5, 0.0)
        elif not rirs:
            stage1 = (0.5, 0.5, 0.0, 0.0)
        results = augment_many(waves, args.seed, args.epoch, noises, rirs, workers=args.workers,
                               names=names, crop_seconds=args.crop, rawboost_variant=args.rawboost,
                               stage1_probs=stage1, codec_prob=args.codec_prob)
        outs = [o for o, _ in results]
        write_plans(out_dir / "plans.log", [p for _, p in results])
    for name, wave in zip(names, outs):
        write_wav(out_dir / f"{name}.wav", wave)
    print(f"augmented\t{len(outs)}")


def cmd_report(args):
    data = load_set(args.scores, args.keys)
    table = report.build_table(data, args.metric, _dcf(args), args.bonafide_pool, args.workers)
    text = report.render(table, args.format)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# -- parser -----------------------------------------------------------------------

def build_parser():
    common = _common()
    parser = Parser(prog="spoofcm", description="Deepfake speech detection toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=Parser)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    def add(name, func, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text, description=help_text,
                           formatter_class=fmt)
        p.set_defaults(func=func)
        return p

    p = add("eval", cmd_eval, "Print EER, minDCF, actDCF, Cllr and minCllr of a score file.")
    p.add_argument("--scores", required=True, help="score file: trial_id score")
    p.add_argument("--keys", required=True, help="key file: trial_id label attack codec")
    p.add_argument("--eer-method", choices=("rocch", "interp"), default="rocch",
                   help="EER from the ROC convex hull or the interpolated step ROC")

    p = add("calibrate", cmd_calibrate, "Fit an affine score-to-LLR calibration.")
    p.add_argument("--scores", required=True, help="score file (NAME=PATH to set the system name)")
    p.add_argument("--keys", required=True, help="key file")
    p.add_argument("--out", required=True, help="calibration model output file")
    p.add_argument("--scores-out", default=None, help="write calibrated scores here")
    p.add_argument("--max-iterations", type=int, default=200, help="Newton iteration cap")

    p = add("fuse", cmd_fuse, "Fit a linear fusion of several systems, or apply one with --model.")
    p.add_argument("--scores", required=True, nargs="+", help="score files (NAME=PATH)")
    p.add_argument("--keys", default=None, help="key file (needed to fit)")
    p.add_argument("--model", default=None, help="apply this fusion model instead of fitting")
    p.add_argument("--out", default=None, help="fusion model output file")
    p.add_argument("--scores-out", default=None, help="write fused scores here")
    p.add_argument("--max-iterations", type=int, default=200, help="Newton iteration cap")

    p = add("greedy-fuse", cmd_greedy_fuse,
            "Calibrate every system, rank by minDCF and fuse the best k.")
    p.add_argument("--scores", required=True, nargs="+", help="score files (NAME=PATH)")
    p.add_argument("--keys", required=True, help="key file")
    p.add_argument("--k", type=int, default=3, help="number of systems to fuse")
    p.add_argument("--out", required=True, help="fusion model output file")
    p.add_argument("--scores-out", default=None, help="write fused scores here")
    p.add_argument("--max-iterations", type=int, default=200, help="Newton iteration cap")

    p = add("train", cmd_train, "Train a WA or MHFA back-end on feature stacks or WAV files.")
    p.add_argument("--inputs", required=True,
                   help="directory of <trial>.fstk stacks or <trial>.wav files (toy encoder)")
    p.add_argument("--keys", required=True, help="key file for the training inputs")
    p.add_argument("--backend", choices=("wa", "mhfa"), default="wa", help="pooling back-end")
    p.add_argument("--heads", type=int, default=32, help="MHFA heads")
    p.add_argument("--config", default=None, help="JSON object overriding training options")
    p.add_argument("--out", required=True, help="checkpoint output (.npz)")
    p.add_argument("--dev-inputs", default=None, help="early-stopping inputs; the training set is used when omitted")
    p.add_argument("--dev-keys", default=None, help="key file for --dev-inputs")
    p.add_argument("--score", nargs=2, action="append", metavar=("DIR", "OUT"),
                   help="after training, score the inputs in DIR into score file OUT; repeatable")
    p.add_argument("--finetune-encoder", action="store_true",
                   help="with WAV inputs, train the toy encoder jointly")
    p.add_argument("--encoder-dim", type=int, default=32, help="toy encoder width")
    p.add_argument("--encoder-layers", type=int, default=4, help="toy encoder depth")
    p.add_argument("--n-bands", type=int, default=40, help="log band energies per frame")
    p.add_argument("--verbose", action="store_true", help="log every epoch to stderr")

    p = add("grad-check", cmd_grad_check,
            "Compare analytic and finite-difference gradients of the full training loss.")
    p.add_argument("--backend", choices=("wa", "mhfa"), default="wa", help="pooling back-end")
    p.add_argument("--softmax-weights", action="store_true", help="WA with softmax layer weights")
    p.add_argument("--points", type=int, default=10, help="random draws")
    p.add_argument("--dtype", choices=("float64", "float32"), default="float64",
                   help="parameter precision")
    p.add_argument("--rel-step", type=float, default=1e-4, help="finite-difference step")
    p.add_argument("--tolerance", type=float, default=1e-4, help="max allowed relative error")

    p = add("augment", cmd_augment, "Augment a directory of 16 kHz WAV files.")
    p.add_argument("--in", dest="inp", required=True, help="input directory of WAV files")
    p.add_argument("--out", required=True, help="output directory (WAVs and plans.log)")
    p.add_argument("--noise-bank", default=None, help="noise directory or id<TAB>path manifest")
    p.add_argument("--rir-bank", default=None, help="RIR directory or id<TAB>path manifest")
    p.add_argument("--epoch", type=int, default=0, help="epoch index in the seed derivation")
    p.add_argument("--crop", type=float, default=4.0, help="crop length in seconds")
    p.add_argument("--codec-prob", type=float, default=0.5, help="probability of a codec chain")
    p.add_argument("--rawboost", choices=("convolutive", "impulsive", "stationary", "series12"),
                   default=None, help="use this RawBoost variant instead of noise/RIR/codec")
    p.add_argument("--replay", default=None, help="re-apply the plans in this log")
    p.add_argument("--workers", type=int, default=1, help="parallel workers")

    p = add("report", cmd_report, "Attack x codec breakdown table of one metric.")
    p.add_argument("--scores", required=True, help="score file")
    p.add_argument("--keys", required=True, help="key file")
    p.add_argument("--metric", choices=tuple(report.METRICS), default="minDCF", help="metric")
    p.add_argument("--format", choices=("tsv", "markdown"), default="tsv", help="output format")
    p.add_argument("--bonafide-pool", choices=report.BONAFIDE_POOLS, default="codec",
                   help="bonafide trials per cell: same codec column, or all")
    p.add_argument("--out", default=None, help="write the table here instead of stdout")
    p.add_argument("--workers", type=int, default=1, help="parallel cell workers")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except UsageError as exc:
        print(f"spoofcm {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (calibration.ConvergenceError, NumericalFailure, FloatingPointError) as exc:
        print(f"spoofcm {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError, ValueError) as exc:
        print(f"spoofcm {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
