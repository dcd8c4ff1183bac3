"""Prior-weighted logistic-regression calibration and linear score fusion."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import metrics
from .metrics import DcfParams


class ConvergenceError(RuntimeError):
    """Newton iterations ran out before the gradient norm reached tolerance."""

    def __init__(self, message, grad_norm):
        super().__init__(message)
        self.grad_norm = grad_norm


class NegativeWeightWarning(UserWarning):
    pass


@dataclass(frozen=True)
class FitConfig:
    effective_prior: float = DcfParams().effective_prior
    ridge: float = 1e-6
    max_iterations: int = 200
    gradient_tolerance: float = 1e-8

    def __post_init__(self):
        if not 0.0 < self.effective_prior < 1.0:
            raise ValueError("effective_prior must lie in (0, 1)")
        if self.ridge < 0:
            raise ValueError("ridge must be non-negative")
        if self.max_iterations < 1 or self.gradient_tolerance <= 0:
            raise ValueError("max_iterations and gradient_tolerance must be positive")

    @classmethod
    def for_dcf(cls, params, **kwargs):
        return cls(effective_prior=params.effective_prior, **kwargs)


@dataclass
class FusionModel:
    """Affine map ``weights @ scores + bias`` producing calibrated LLRs."""

    weights: np.ndarray
    bias: float
    effective_prior: float
    fit_objective: float = float("nan")
    names: tuple = ()
    n_iterations: int = 0
    objective_trace: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.weights = np.atleast_1d(np.asarray(self.weights, dtype=np.float64))
        if not self.names:
            self.names = tuple(f"sys{i}" for i in range(self.weights.size))
        if len(self.names) != self.weights.size:
            raise ValueError("one name per weight is required")

    def apply(self, systems):
        return apply(self, systems)

    def to_text(self):
        lines = [f"prior\t{self.effective_prior!r}", f"bias\t{self.bias!r}"]
        lines += [f"{name}\t{w!r}" for name, w in zip(self.names, self.weights.tolist())]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        prior = bias = None
        names, weights = [], []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"line {lineno}: expected 'name value'")
            key, value = parts[0], float(parts[1])
            if key == "prior" and prior is None:
                prior = value
            elif key == "bias" and bias is None:
                bias = value
            else:
                names.append(key)
                weights.append(value)
        if prior is None or bias is None or not weights:
            raise ValueError("fusion model needs 'prior', 'bias' and at least one system line")
        return cls(np.array(weights), bias, prior, names=tuple(names))


def _as_matrix(systems):
    s = np.asarray(systems, dtype=np.float64)
    if s.ndim == 1:
        s = s[None, :]
    if s.ndim != 2:
        raise ValueError("systems must be a (K, N) array or a single score vector")
    return s


def objective(theta, scores, labels, prior, ridge=0.0):
    """Prior-weighted logistic loss (nats) with gradient and Hessian.

    ``theta`` holds K weights followed by the bias; ``scores`` is (K, N) and
    ``labels`` is a boolean bonafide mask.
    """
    s = _as_matrix(scores)
    labels = np.asarray(labels, dtype=bool)
    k = s.shape[0]
    w, b = theta[:k], theta[k]
    offset = math.log(prior) - math.log1p(-prior)
    a = w @ s + b + offset
    # sign: +1 for bonafide (penalize low a), -1 for spoof
    y = np.where(labels, 1.0, -1.0)
    n_tar = np.count_nonzero(labels)
    n_non = labels.size - n_tar
    c = np.where(labels, prior / n_tar, (1.0 - prior) / n_non)

    value = float(np.sum(c * np.logaddexp(0.0, -y * a)) + ridge * (w @ w))

    # d/da log(1 + exp(-y a)) = -y * sigmoid(-y a)
    sig = np.exp(-np.logaddexp(0.0, y * a))
    da = -y * sig * c
    x = np.vstack([s, np.ones_like(a)])
    grad = x @ da
    grad[:k] += 2.0 * ridge * w
    curv = c * sig * (1.0 - sig)
    hess = (x * curv) @ x.T
    hess[np.arange(k), np.arange(k)] += 2.0 * ridge
    return value, grad, hess


def fit(systems, labels, config=None, names=None):
    """Fit fusion weights and bias by Newton's method with backtracking.

    ``systems`` is a (K, N) array of aligned scores (or a single vector).
    Returns a :class:`FusionModel` whose ``fit_objective`` is in bits.
    """
    config = config or FitConfig()
    s = _as_matrix(systems)
    labels = np.asarray(labels, dtype=bool)
    if s.shape[1] != labels.size:
        raise ValueError("labels must align with the score columns")
    if labels.all() or not labels.any():
        raise ValueError("calibration needs both bonafide and spoof trials")
    if np.any(np.ptp(s, axis=1) == 0):
        raise ValueError("degenerate system: all scores identical")

    k = s.shape[0]
    theta = np.zeros(k + 1)
    theta[:k] = 1.0 / k
    value, grad, hess = objective(theta, s, labels, config.effective_prior, config.ridge)
    trace = [value]
    for it in range(1, config.max_iterations + 1):
        if np.linalg.norm(grad) <= config.gradient_tolerance:
            break
        try:
            step = -np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = -grad
        slope = grad @ step
        if slope >= 0:
            step, slope = -grad, -(grad @ grad)
        t = 1.0
        while True:
            cand = theta + t * step
            new = objective(cand, s, labels, config.effective_prior, config.ridge)
            if new[0] <= value + 1e-4 * t * slope or t < 1e-12:
                break
            t *= 0.5
        if new[0] > value:
            # line search could not improve: we are at rounding level
            break
        theta = cand
        value, grad, hess = new
        trace.append(value)
    else:
        it = config.max_iterations
    gnorm = float(np.linalg.norm(grad))
    if gnorm > config.gradient_tolerance:
        raise ConvergenceError(
            f"no convergence after {it} iterations (gradient norm {gnorm:.3e})", gnorm
        )
    weights = theta[:k].copy()
    if np.any(weights <= 0):
        warnings.warn(f"non-positive fusion weight(s): {weights.tolist()}", NegativeWeightWarning,
                      stacklevel=2)
    return FusionModel(
        weights=weights,
        bias=float(theta[k]),
        effective_prior=config.effective_prior,
        fit_objective=value / metrics.LN2,
        names=tuple(names) if names is not None else (),
        n_iterations=len(trace) - 1,
        objective_trace=[v / metrics.LN2 for v in trace],
    )


def apply(model, systems):
    """Calibrated LLRs ``weights @ systems + bias`` (no prior offset)."""
    if isinstance(systems, dict):
        missing = [n for n in model.names if n not in systems]
        if missing:
            raise ValueError(f"missing systems for fusion: {missing}")
        systems = [systems[n] for n in model.names]
    s = _as_matrix(systems)
    if s.shape[0] != model.weights.size:
        raise ValueError(f"model expects {model.weights.size} systems, got {s.shape[0]}")
    return model.weights @ s + model.bias


def calibrate(scores, labels, config=None, name=None):
    """Single-system calibration; thin wrapper around :func:`fit`."""
    return fit(np.asarray(scores, dtype=np.float64)[None, :], labels, config,
               names=None if name is None else (name,))


def greedy_select(candidates, labels, params=None, k=3, config=None):
    """Rank calibrated candidates by minDCF and fuse the best ``k``.

    ``candidates`` maps system name to a score vector aligned with
    ``labels``. Returns ``(selected_names, fused_model, ranking)`` where
    ranking lists ``(name, min_dcf)`` for every candidate, best first.
    """
    params = params or DcfParams()
    config = config or FitConfig.for_dcf(params)
    names = list(candidates)
    if k < 1:
        raise ValueError("k must be positive")
    if len(names) < k:
        raise ValueError(f"need at least {k} candidate systems, got {len(names)}")
    labels = np.asarray(labels, dtype=bool)
    ranking = []
    for name in names:
        scores = np.asarray(candidates[name], dtype=np.float64)
        model = calibrate(scores, labels, config, name=name)
        llr = apply(model, scores)
        value, _ = metrics.min_dcf(llr[labels], llr[~labels], params=params)
        ranking.append((name, value))
    # stable: ties keep input order
    ranking.sort(key=lambda item: item[1])
    selected = [name for name, _ in ranking[:k]]
    fused = fit(np.vstack([candidates[n] for n in selected]), labels, config, names=selected)
    return selected, fused, ranking
