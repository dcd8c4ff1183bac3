"""Score and key files: parsing, joining and condition partitioning.

Score files hold ``<trial_id> <score>`` per line, key files hold
``<trial_id> <label> <attack> <codec>``. Scores follow the LLR convention
used throughout the package: higher means more bonafide.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

BONAFIDE = "bonafide"
SPOOF = "spoof"
POOLED = "pooled"
NO_CONDITION = "-"

AXES = ("attack", "codec", "attack_codec")


class DataError(ValueError):
    """Malformed score or key data. ``line`` is 1-based when known."""

    def __init__(self, message, line=None, source=None):
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where += f"{source}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class UnscoredTrialsWarning(UserWarning):
    """Keyed trials that have no score."""


@dataclass(frozen=True)
class ScoreRecord:
    trial: str
    score: float


@dataclass(frozen=True)
class TrialKey:
    trial: str
    label: str
    attack: str = NO_CONDITION
    codec: str = NO_CONDITION

    @property
    def is_bonafide(self):
        return self.label == BONAFIDE


def _decode(text):
    if isinstance(text, (bytes, bytearray)):
        text = bytes(text).decode("utf-8")
    return text


def _records(text, source):
    """Yield (line_number, fields) for non-blank, non-comment lines."""
    for lineno, raw in enumerate(_decode(text).splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        yield lineno, line.split()


def parse_scores(text, source=None):
    """Parse a score file into an ordered list of :class:`ScoreRecord`.

    Raises :class:`DataError` on a malformed line, a non-finite score or a
    repeated trial id.
    """
    out = []
    seen = set()
    for lineno, fields in _records(text, source):
        if len(fields) != 2:
            raise DataError(f"expected 'trial_id score', got {len(fields)} fields", lineno, source)
        trial, raw_score = fields
        try:
            score = float(raw_score)
        except ValueError:
            raise DataError(f"score {raw_score!r} is not a number", lineno, source) from None
        if not math.isfinite(score):
            raise DataError(f"non-finite score {raw_score!r} for {trial!r}", lineno, source)
        if trial in seen:
            raise DataError(f"duplicate trial id {trial!r}", lineno, source)
        seen.add(trial)
        out.append(ScoreRecord(trial, score))
    return out


def parse_keys(text, source=None):
    """Parse a key file into an ordered list of :class:`TrialKey`."""
    out = []
    seen = set()
    for lineno, fields in _records(text, source):
        if len(fields) != 4:
            raise DataError(
                f"expected 'trial_id label attack codec', got {len(fields)} fields", lineno, source
            )
        trial, label, attack, codec = fields
        label_norm = label.lower()
        if label_norm not in (BONAFIDE, SPOOF):
            raise DataError(f"unknown label {label!r}", lineno, source)
        if trial in seen:
            raise DataError(f"duplicate trial id {trial!r}", lineno, source)
        seen.add(trial)
        out.append(TrialKey(trial, label_norm, attack, codec))
    return out


def read_scores(path):
    path = Path(path)
    return parse_scores(path.read_bytes(), source=str(path))


def read_keys(path):
    path = Path(path)
    return parse_keys(path.read_bytes(), source=str(path))


@dataclass(frozen=True, eq=False)
class LabeledScoreSet:
    """Trials with scores, labels and condition tokens.

    Arrays are parallel; ``is_bonafide`` is a boolean mask. Instances are
    treated as immutable.
    """

    trials: tuple
    scores: np.ndarray
    is_bonafide: np.ndarray
    attacks: tuple
    codecs: tuple

    def __post_init__(self):
        n = len(self.trials)
        scores = np.asarray(self.scores, dtype=np.float64)
        mask = np.asarray(self.is_bonafide, dtype=bool)
        if scores.shape != (n,) or mask.shape != (n,):
            raise ValueError("scores and labels must be 1-D and aligned with trials")
        if len(self.attacks) != n or len(self.codecs) != n:
            raise ValueError("condition tokens must be aligned with trials")
        if len(set(self.trials)) != n:
            raise ValueError("duplicate trial ids")
        if not np.all(np.isfinite(scores)):
            raise ValueError("scores must be finite")
        scores.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "trials", tuple(self.trials))
        object.__setattr__(self, "attacks", tuple(self.attacks))
        object.__setattr__(self, "codecs", tuple(self.codecs))
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "is_bonafide", mask)

    @classmethod
    def from_arrays(cls, scores, is_bonafide, trials=None, attacks=None, codecs=None):
        """Build a set from bare arrays, inventing ids and "-" conditions as needed."""
        scores = np.asarray(scores, dtype=np.float64)
        n = scores.shape[0]
        if trials is None:
            trials = tuple(f"T{i:06d}" for i in range(n))
        if attacks is None:
            attacks = (NO_CONDITION,) * n
        if codecs is None:
            codecs = (NO_CONDITION,) * n
        return cls(tuple(trials), scores, np.asarray(is_bonafide, dtype=bool), tuple(attacks), tuple(codecs))

    def __len__(self):
        return len(self.trials)

    def __eq__(self, other):
        if not isinstance(other, LabeledScoreSet):
            return NotImplemented
        return (
            self.trials == other.trials
            and self.attacks == other.attacks
            and self.codecs == other.codecs
            and np.array_equal(self.scores, other.scores)
            and np.array_equal(self.is_bonafide, other.is_bonafide)
        )

    __hash__ = None

    @property
    def n_bonafide(self):
        return int(np.count_nonzero(self.is_bonafide))

    @property
    def n_spoof(self):
        return len(self) - self.n_bonafide

    @property
    def bonafide_scores(self):
        return self.scores[self.is_bonafide]

    @property
    def spoof_scores(self):
        return self.scores[~self.is_bonafide]

    @property
    def labels(self):
        return tuple(BONAFIDE if b else SPOOF for b in self.is_bonafide)

    def subset(self, mask):
        """Return the trials selected by a boolean mask or index array, order kept."""
        idx = np.flatnonzero(mask) if np.asarray(mask).dtype == bool else np.asarray(mask, dtype=int)
        return LabeledScoreSet(
            tuple(self.trials[i] for i in idx),
            self.scores[idx],
            self.is_bonafide[idx],
            tuple(self.attacks[i] for i in idx),
            tuple(self.codecs[i] for i in idx),
        )

    def with_scores(self, scores):
        """Same trials and keys with replacement scores (e.g. after calibration)."""
        return LabeledScoreSet(self.trials, np.asarray(scores, dtype=np.float64), self.is_bonafide,
                               self.attacks, self.codecs)

    def require_both_classes(self):
        if self.n_bonafide == 0 or self.n_spoof == 0:
            raise ValueError(
                f"need at least one bonafide and one spoof trial "
                f"(got {self.n_bonafide} bonafide, {self.n_spoof} spoof)"
            )

    def keys(self):
        return [TrialKey(t, BONAFIDE if b else SPOOF, a, c)
                for t, b, a, c in zip(self.trials, self.is_bonafide, self.attacks, self.codecs)]


def join(scores, keys, return_unscored=False):
    """Attach keys to scored trials, preserving score-file order.

    A scored trial without a key is a :class:`DataError`. Keyed trials
    without a score trigger :class:`UnscoredTrialsWarning`; pass
    ``return_unscored=True`` to also get their ids back.
    """
    by_id = {k.trial: k for k in keys}
    trials, values, mask, attacks, codecs = [], [], [], [], []
    for rec in scores:
        key = by_id.get(rec.trial)
        if key is None:
            raise DataError(f"no key for scored trial {rec.trial!r}")
        trials.append(rec.trial)
        values.append(rec.score)
        mask.append(key.is_bonafide)
        attacks.append(key.attack)
        codecs.append(key.codec)
    scored = set(trials)
    unscored = [k.trial for k in keys if k.trial not in scored]
    if unscored:
        warnings.warn(
            f"{len(unscored)} keyed trial(s) have no score, e.g. {unscored[0]!r}",
            UnscoredTrialsWarning,
            stacklevel=2,
        )
    result = LabeledScoreSet(tuple(trials), np.array(values, dtype=np.float64),
                             np.array(mask, dtype=bool), tuple(attacks), tuple(codecs))
    if return_unscored:
        return result, unscored
    return result


def load_set(score_path, key_path):
    """Read and join a score file and a key file."""
    return join(read_scores(score_path), read_keys(key_path))


def format_scores(data):
    """Serialize scores; ``repr`` of a float round-trips exactly."""
    return "".join(f"{t} {float(s)!r}\n" for t, s in zip(data.trials, data.scores))


def format_keys(data):
    return "".join(f"{k.trial} {k.label} {k.attack} {k.codec}\n" for k in data.keys())


def dumps(data):
    """Return ``(score_text, key_text)`` for a set."""
    return format_scores(data), format_keys(data)


def loads(score_text, key_text):
    return join(parse_scores(score_text), parse_keys(key_text))


def write_scores(path, trials, scores):
    Path(path).write_text("".join(f"{t} {float(s)!r}\n" for t, s in zip(trials, scores)),
                          encoding="utf-8")


def partition(data, axis):
    """Split a set into condition cells along ``attack``, ``codec`` or ``attack_codec``.

    The returned dict always has a ``"pooled"`` entry equal to ``data``.

    * ``attack``: one cell per spoof attack; every cell also holds the full
      bonafide pool so each attack is scored against all bonafide trials.
    * ``codec``: each trial goes to the cell of its own codec token.
    * ``attack_codec``: cell ``(attack, codec)`` holds the spoofs of that
      condition plus the bonafide trials recorded with that codec.
    """
    if axis == "attack×codec":
        axis = "attack_codec"
    if axis not in AXES:
        raise ValueError(f"unknown partition axis {axis!r}; expected one of {AXES}")
    if len(data) == 0:
        raise ValueError("cannot partition an empty set")

    bona = data.is_bonafide
    cells = {}
    if axis == "codec":
        for codec in sorted(set(data.codecs)):
            cells[codec] = data.subset(np.array([c == codec for c in data.codecs]))
    elif axis == "attack":
        spoof_attacks = sorted({a for a, b in zip(data.attacks, bona) if not b})
        if not spoof_attacks:
            for attack in sorted(set(data.attacks)):
                cells[attack] = data.subset(np.array([a == attack for a in data.attacks]))
        for attack in spoof_attacks:
            mask = bona | np.array([a == attack for a in data.attacks])
            cells[attack] = data.subset(mask)
    else:
        conditions = sorted({(a, c) for a, c, b in zip(data.attacks, data.codecs, bona) if not b})
        for attack, codec in conditions:
            mask = np.array([
                (c == codec) and (b or a == attack)
                for a, c, b in zip(data.attacks, data.codecs, bona)
            ])
            cells[(attack, codec)] = data.subset(mask)
    cells[POOLED] = data
    return cells
