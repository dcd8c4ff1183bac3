"""Mini-batch training of the pooling back-ends, optionally with the encoder.

Learning rates decay by a constant factor every epoch; encoder blocks get
an extra geometric factor that shrinks towards the input so lower layers
move less. Fine-tuning drift of the encoder is controlled by an L2 penalty
towards its initial weights.
"""

from __future__ import annotations

import json
import zipfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .. import metrics
from .encoder import FRAMES_PER_SECOND, ToyEncoder
from .loss import class_weight, l2_to_init, weighted_cross_entropy
from .models import BACKENDS, MhfaModel, WaModel, detection_score, init_backend


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch, batch, loss):
        super().__init__(f"non-finite loss {loss} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


@dataclass
class TrainConfig:
    lr_backend: float = 5e-3
    lr_encoder: float = 2e-5
    per_epoch_decay: float = 0.95
    layerwise_decay: float = 0.9
    bonafide_weight: float = 9.0
    spoof_weight: float = 1.0
    l2_to_init_lambda: float = 1e-3
    epochs: int = 100
    patience: int = 50
    batch_size: int = 32
    crop_frames: int = 4 * FRAMES_PER_SECOND
    finetune_encoder: bool = True
    adam_betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8
    dtype: str = "float64"

    def __post_init__(self):
        for name in ("lr_backend", "lr_encoder", "per_epoch_decay", "bonafide_weight",
                     "spoof_weight", "epochs", "patience", "batch_size", "crop_frames"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.layerwise_decay <= 1:
            raise ValueError("layerwise_decay must lie in (0, 1]")
        if self.l2_to_init_lambda < 0:
            raise ValueError("l2_to_init_lambda must be non-negative")
        self.adam_betas = tuple(self.adam_betas)

    @property
    def class_weights(self):
        return {"bonafide": self.bonafide_weight, "spoof": self.spoof_weight}

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown training options: {sorted(unknown)}")
        return cls(**d)


def lr_schedule(config, epoch, layer=None, n_layers=None):
    """Learning rate at ``epoch`` for the back-end (``layer=None``) or encoder layer ``layer``.

    Encoder layer ``i`` of ``n_layers`` is scaled by
    ``layerwise_decay ** (n_layers - i)``; index 0 is the input projection.
    """
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    decay = config.per_epoch_decay ** epoch
    if layer is None:
        return config.lr_backend * decay
    if n_layers is None:
        raise ValueError("n_layers is required for encoder learning rates")
    return config.lr_encoder * decay * config.layerwise_decay ** (n_layers - layer)


class Adam:
    def __init__(self, betas=(0.9, 0.999), eps=1e-8):
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = {}
        self.v = {}
        self.t = 0

    def step(self, groups):
        """``groups`` is a list of ``(key, params, grads, lr)``; updates params in place."""
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for key, params, grad, lr in groups:
            m = self.m.get(key)
            if m is None:
                m = self.m[key] = np.zeros_like(params)
                self.v[key] = np.zeros_like(params)
            v = self.v[key]
            m *= self.b1
            m += (1.0 - self.b1) * grad
            v *= self.b2
            v += (1.0 - self.b2) * grad * grad
            params -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def crop_time(x, length, rng, axis):
    """Random window of ``length`` steps along ``axis``; short inputs wrap around."""
    n = x.shape[axis]
    if n >= length:
        start = int(rng.integers(0, n - length + 1))
        idx = np.arange(start, start + length)
    else:
        start = 0
        idx = np.arange(length) % n
    return np.take(x, idx, axis=axis)


@dataclass
class TrainResult:
    model: object
    encoder: object
    encoder_init: dict
    eer_trace: list = field(default_factory=list)
    loss_trace: list = field(default_factory=list)
    best_epoch: int = -1
    epochs_run: int = 0


def score_inputs(model, inputs, encoder=None):
    """Detection scores for full-length inputs."""
    out = np.empty(len(inputs))
    for i, x in enumerate(inputs):
        stack = x if encoder is None else encoder.forward(x)[0]
        out[i] = detection_score(model.forward(stack)[0])
    return out


def _scoring_eer(model, encoder, inputs, labels):
    s = score_inputs(model, inputs, encoder)
    return metrics.eer(s[labels], s[~labels])[0]


def train(inputs, labels, config=None, seed=0, backend="wa", encoder=None, scoring=None,
          backend_kwargs=None, model=None, log=None):
    """Train a pooling back-end (and optionally fine-tune ``encoder``).

    ``inputs`` are feature stacks ``(L+1, T, D)`` or, when an encoder is
    given, encoder inputs ``(T, D_in)``. ``scoring`` is an optional
    ``(inputs, labels)`` pair for early stopping; the training data is used
    otherwise. The returned model is the one from the epoch with the lowest
    scoring EER.
    """
    config = config or TrainConfig()
    labels = np.asarray(labels, dtype=bool)
    if len(inputs) == 0 or len(inputs) != labels.size:
        raise ValueError("inputs and labels must be non-empty and aligned")
    if labels.all() or not labels.any():
        raise ValueError("training needs both bonafide and spoof examples")
    dtype = np.dtype(config.dtype)
    inputs = [np.asarray(x, dtype=dtype) for x in inputs]
    score_x, score_y = scoring if scoring is not None else (inputs, labels)
    score_x = [np.asarray(x, dtype=dtype) for x in score_x]
    score_y = np.asarray(score_y, dtype=bool)

    init_rng = np.random.default_rng([seed, 0])
    if encoder is not None:
        encoder = encoder.astype(dtype)
        n_layers = encoder.n_layers
        dim = encoder.params["input_proj"].shape[1]
    else:
        n_layers = inputs[0].shape[0] - 1
        dim = inputs[0].shape[2]
    if model is None:
        model = init_backend(backend, n_layers, dim, init_rng, dtype=dtype, **(backend_kwargs or {}))
    else:
        model = model.astype(dtype)
    encoder_init = None if encoder is None else {k: v.copy() for k, v in encoder.params.items()}
    tune_encoder = encoder is not None and config.finetune_encoder
    time_axis = 0 if encoder is not None else 1

    opt = Adam(config.adam_betas, config.adam_eps)
    cw = config.class_weights
    result = TrainResult(model.copy(), None if encoder is None else encoder.copy(), encoder_init)
    best = np.inf
    since_best = 0

    for epoch in range(config.epochs):
        rng = np.random.default_rng([seed, 1, epoch])
        order = rng.permutation(len(inputs))
        lr_b = lr_schedule(config, epoch)
        epoch_loss = 0.0
        for bi, start in enumerate(range(0, len(order), config.batch_size)):
            batch = order[start:start + config.batch_size]
            g_model = {k: np.zeros_like(v) for k, v in model.params.items()}
            g_enc = {k: np.zeros_like(v) for k, v in encoder.params.items()} if tune_encoder else None
            loss_sum = 0.0
            w_sum = 0.0
            for i in batch:
                x = crop_time(inputs[i], config.crop_frames, rng, time_axis)
                if encoder is not None:
                    stack, e_cache = encoder.forward(x)
                else:
                    stack = x
                logits, cache = model.forward(stack)
                loss, d_logits = weighted_cross_entropy(logits, labels[i], cw)
                loss_sum += loss
                w_sum += class_weight(labels[i], cw)
                grads, d_stack = model.backward(cache, d_logits, wrt_stack=tune_encoder)
                for k, g in grads.items():
                    g_model[k] += g
                if tune_encoder:
                    for k, g in encoder.backward(e_cache, d_stack).items():
                        g_enc[k] += g
            loss = loss_sum / w_sum
            for g in g_model.values():
                g /= w_sum
            groups = [(("backend", k), model.params[k], g_model[k], lr_b) for k in model.params]
            if tune_encoder:
                for g in g_enc.values():
                    g /= w_sum
                if config.l2_to_init_lambda > 0:
                    penalty, g_pen = l2_to_init(encoder.params, encoder_init, config.l2_to_init_lambda)
                    loss += penalty
                    for k, g in g_pen.items():
                        g_enc[k] += g
                groups += [(("encoder", k), encoder.params[k], g_enc[k],
                            lr_schedule(config, epoch, encoder.depth(k), n_layers))
                           for k in encoder.params]
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for _, _, g, _ in groups):
                raise TrainingDivergedError(epoch, bi, loss)
            opt.step(groups)
            model.bump()
            if tune_encoder:
                encoder.bump()
            epoch_loss += loss * len(batch)

        eer_value = _scoring_eer(model, encoder, score_x, score_y)
        result.eer_trace.append(eer_value)
        result.loss_trace.append(epoch_loss / len(inputs))
        result.epochs_run = epoch + 1
        if log is not None:
            log(f"epoch {epoch}: loss {epoch_loss / len(inputs):.5f} scoring EER {eer_value:.4f}")
        if eer_value < best:
            best = eer_value
            since_best = 0
            result.best_epoch = epoch
            result.model = model.copy()
            result.encoder = None if encoder is None else encoder.copy()
        else:
            since_best += 1
            if since_best >= config.patience:
                break
    return result


def save_checkpoint(path, model, encoder=None, encoder_init=None, meta=None):
    """Write named parameter blocks (and the encoder init snapshot) to ``.npz``."""
    arrays = {f"backend/{k}": v for k, v in model.params.items()}
    info = {"backend": model.kind, "softmax_weights": getattr(model, "softmax_weights", False)}
    if encoder is not None:
        arrays.update({f"encoder/{k}": v for k, v in encoder.params.items()})
    if encoder_init is not None:
        arrays.update({f"encoder_init/{k}": v for k, v in encoder_init.items()})
    info.update(meta or {})
    arrays["meta"] = np.array(json.dumps(info, sort_keys=True))
    # np.savez stamps entries with the current time; a fixed stamp keeps files byte-identical
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for key in sorted(arrays):
            entry = zipfile.ZipInfo(f"{key}.npy", date_time=(1980, 1, 1, 0, 0, 0))
            with zf.open(entry, "w", force_zip64=True) as fh:
                np.lib.format.write_array(fh, np.asarray(arrays[key]), allow_pickle=False)


def load_checkpoint(path):
    """Return ``(model, encoder, encoder_init, meta)`` from :func:`save_checkpoint` output."""
    with np.load(Path(path), allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        blocks = {}
        for key in data.files:
            if key == "meta":
                continue
            group, name = key.split("/", 1)
            blocks.setdefault(group, {})[name] = data[key]
    cls = BACKENDS[meta["backend"]]
    if cls is WaModel:
        model = WaModel(blocks["backend"], softmax_weights=meta.get("softmax_weights", False))
    else:
        model = MhfaModel(blocks["backend"])
    encoder = ToyEncoder(blocks["encoder"]) if "encoder" in blocks else None
    return model, encoder, blocks.get("encoder_init"), meta


def config_dict(config):
    d = asdict(config)
    d["adam_betas"] = list(d["adam_betas"])
    return d
