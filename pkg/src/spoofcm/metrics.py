"""Detection metrics: EER, minDCF, actDCF, Cllr and minCllr.

All functions take either a :class:`~spoofcm.score_io.LabeledScoreSet` or a
pair of arrays ``(bonafide_scores, spoof_scores)``. A trial is accepted as
bonafide when its score is strictly greater than the threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .score_io import LabeledScoreSet

LN2 = math.log(2.0)


@dataclass(frozen=True)
class DcfParams:
    """Costs and operating prior of the detection cost function.

    Defaults: miss cost 1, false-alarm
    cost 10 and a spoof prior of 0.05.
    """

    c_miss: float = 1.0
    c_fa: float = 10.0
    prior_bonafide: float = 0.95

    def __post_init__(self):
        if not (self.c_miss > 0 and self.c_fa > 0):
            raise ValueError("DCF costs must be positive")
        if not 0.0 < self.prior_bonafide < 1.0:
            raise ValueError("prior_bonafide must lie in (0, 1)")

    @property
    def normalizer(self):
        return min(self.c_miss * self.prior_bonafide, self.c_fa * (1.0 - self.prior_bonafide))

    @property
    def bayes_threshold(self):
        """LLR threshold that minimizes expected cost for calibrated scores."""
        return math.log(self.c_fa * (1.0 - self.prior_bonafide)) - math.log(self.c_miss * self.prior_bonafide)

    @property
    def effective_prior(self):
        a = self.c_miss * self.prior_bonafide
        return a / (a + self.c_fa * (1.0 - self.prior_bonafide))

    def describe(self):
        return f"c_miss={self.c_miss:g} c_fa={self.c_fa:g} prior_bonafide={self.prior_bonafide:g}"


def _split(data, non=None):
    if isinstance(data, LabeledScoreSet):
        if non is not None:
            raise TypeError("pass either a LabeledScoreSet or two score arrays")
        tar, non = data.bonafide_scores, data.spoof_scores
    else:
        if non is None:
            raise TypeError("spoof scores are required when bonafide scores are given as an array")
        tar = np.asarray(data, dtype=np.float64).ravel()
        non = np.asarray(non, dtype=np.float64).ravel()
    if tar.size == 0 or non.size == 0:
        raise ValueError("metrics need at least one bonafide and one spoof score")
    return tar, non


@dataclass(frozen=True)
class OperatingPoints:
    """Error rates at every distinct decision threshold.

    ``thresholds[0]`` is ``-inf`` (accept everything) and ``thresholds[-1]``
    is ``+inf`` (reject everything); the others are midpoints between
    adjacent distinct scores. ``p_miss`` is non-decreasing, ``p_fa``
    non-increasing.
    """

    thresholds: np.ndarray
    p_miss: np.ndarray
    p_fa: np.ndarray


def operating_points(data, non=None):
    tar, non = _split(data, non)
    values = np.unique(np.concatenate([tar, non]))
    # counts of scores <= each distinct value, i.e. rejected when tau sits just above it
    tar_le = np.searchsorted(np.sort(tar), values, side="right")
    non_le = np.searchsorted(np.sort(non), values, side="right")
    p_miss = np.concatenate([[0.0], tar_le / tar.size])
    p_fa = np.concatenate([[1.0], (non.size - non_le) / non.size])
    mids = values[:-1] + (values[1:] - values[:-1]) / 2.0
    thresholds = np.concatenate([[-np.inf], mids, [np.inf]])
    return OperatingPoints(thresholds, p_miss, p_fa)


def _lower_hull(x, y):
    """Indices of the lower-left convex hull of points sorted by ascending x."""
    hull = []
    for i in range(x.size):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            cross = (x[b] - x[a]) * (y[i] - y[a]) - (y[b] - y[a]) * (x[i] - x[a])
            if cross <= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    return np.array(hull, dtype=int)


@dataclass(frozen=True)
class RocchCurve:
    """ROC convex hull plus the PAV calibration it implies.

    ``p_miss``/``p_fa``/``thresholds`` list hull vertices from the accept-all
    end (``p_miss = 0``) to the reject-all end. ``pav_llrs`` is aligned with
    the input trial order (bonafide first when built from arrays).
    """

    p_miss: np.ndarray
    p_fa: np.ndarray
    thresholds: np.ndarray
    pav_llrs: np.ndarray
    block_ends: np.ndarray
    block_posteriors: np.ndarray

    @property
    def vertices(self):
        return list(zip(self.p_miss.tolist(), self.p_fa.tolist()))


def rocch(data, non=None):
    """Vertices of the ROC convex hull as ``(p_miss, p_fa, thresholds)``."""
    ops = operating_points(data, non)
    # walk from p_fa = 0 to p_fa = 1, i.e. reversed threshold order
    x = ops.p_fa[::-1]
    y = ops.p_miss[::-1]
    idx = _lower_hull(x, y)[::-1]
    idx = ops.p_fa.size - 1 - idx
    return ops.p_miss[idx], ops.p_fa[idx], ops.thresholds[idx]


def pav(y, weights=None):
    """Weighted isotonic (non-decreasing) regression by pool-adjacent-violators.

    Returns the fitted value for every input position.
    """
    y = np.asarray(y, dtype=np.float64)
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=np.float64)
    sums, wts, lens = [], [], []
    for yi, wi in zip(y, w):
        sums.append(yi * wi)
        wts.append(wi)
        lens.append(1)
        while len(sums) > 1 and sums[-2] * wts[-1] > sums[-1] * wts[-2]:
            s, ww, n = sums.pop(), wts.pop(), lens.pop()
            sums[-1] += s
            wts[-1] += ww
            lens[-1] += n
    fitted = np.repeat(np.array(sums) / np.array(wts), lens)
    return fitted


def pav_fit(data, non=None, laplace=False):
    """Optimal monotone score-to-LLR map fitted by PAV.

    Trials with equal scores share one block. LLRs are block posterior
    log-odds minus the empirical prior log-odds. Pure blocks give infinite
    LLRs (which cost nothing in Cllr); with ``laplace=True`` they get half a
    pseudo-count of each class instead so every LLR is finite.
    """
    if isinstance(data, LabeledScoreSet):
        tar, non = _split(data)
        scores = data.scores
        is_tar = data.is_bonafide
    else:
        tar, non = _split(data, non)
        scores = np.concatenate([tar, non])
        is_tar = np.concatenate([np.ones(tar.size, bool), np.zeros(non.size, bool)])

    values, inverse = np.unique(scores, return_inverse=True)
    n_tar = np.bincount(inverse, weights=is_tar.astype(np.float64), minlength=values.size)
    n_all = np.bincount(inverse, minlength=values.size).astype(np.float64)

    group_post = pav(n_tar / n_all, n_all)
    # recover blocks: consecutive groups with the same fitted value
    change = np.flatnonzero(np.diff(group_post) != 0)
    block_ends = np.concatenate([change, [values.size - 1]])
    starts = np.concatenate([[0], block_ends[:-1] + 1])
    blk_tar = np.add.reduceat(n_tar, starts)
    blk_all = np.add.reduceat(n_all, starts)
    post = blk_tar / blk_all
    if laplace:
        pure = (blk_tar == 0) | (blk_tar == blk_all)
        post = np.where(pure, (blk_tar + 0.5) / (blk_all + 1.0), post)
    with np.errstate(divide="ignore"):
        block_llr = np.log(post) - np.log1p(-post) - (math.log(tar.size) - math.log(non.size))
    group_block = np.repeat(np.arange(starts.size), block_ends - starts + 1)
    llrs = block_llr[group_block[inverse]]

    p_miss, p_fa, thresholds = rocch(tar, non)
    return RocchCurve(p_miss, p_fa, thresholds, llrs, values[block_ends], post)


def eer(data, non=None, method="rocch"):
    """Equal error rate and an associated threshold.

    ``method="rocch"`` (default) intersects the ROC convex hull with
    ``p_miss = p_fa``. ``method="interp"`` interpolates linearly between
    adjacent empirical operating points instead. The threshold returned is
    the one of the operating point at the start of the crossing segment.
    """
    if method == "rocch":
        p_miss, p_fa, thr = rocch(data, non)
    elif method == "interp":
        ops = operating_points(data, non)
        p_miss, p_fa, thr = ops.p_miss, ops.p_fa, ops.thresholds
    else:
        raise ValueError(f"unknown EER method {method!r}")
    d = p_miss - p_fa
    i = int(np.argmax(d >= 0))
    if d[i] == 0 or i == 0:
        return float(p_miss[i]), float(thr[i])
    d0, d1 = d[i - 1], d[i]
    t = d0 / (d0 - d1)
    value = p_fa[i - 1] + t * (p_fa[i] - p_fa[i - 1])
    return float(value), float(thr[i - 1] if t < 0.5 else thr[i])


def _dcf(p_miss, p_fa, params):
    return (params.c_miss * params.prior_bonafide * p_miss
            + params.c_fa * (1.0 - params.prior_bonafide) * p_fa) / params.normalizer


def min_dcf(data, non=None, params=None):
    """Minimum normalized DCF over all thresholds, and the threshold reaching it."""
    params = params or DcfParams()
    ops = operating_points(data, non)
    costs = _dcf(ops.p_miss, ops.p_fa, params)
    i = int(np.argmin(costs))
    return float(costs[i]), float(ops.thresholds[i])


def act_dcf(data, non=None, params=None):
    """Normalized DCF at the Bayes threshold implied by ``params``."""
    params = params or DcfParams()
    tar, non = _split(data, non)
    tau = params.bayes_threshold
    p_miss = np.count_nonzero(tar <= tau) / tar.size
    p_fa = np.count_nonzero(non > tau) / non.size
    return float(_dcf(p_miss, p_fa, params))


def cllr(data, non=None):
    """Log-likelihood-ratio cost in bits; scores are natural-log LLRs."""
    tar, non = _split(data, non)
    # fsum is correctly rounded, so the result does not depend on trial order
    c_tar = math.fsum(np.logaddexp(0.0, -tar)) / tar.size
    c_non = math.fsum(np.logaddexp(0.0, non)) / non.size
    return float(0.5 * (c_tar + c_non) / LN2)


def min_cllr(data, non=None):
    """Cllr after the optimal monotone recalibration (PAV)."""
    if isinstance(data, LabeledScoreSet):
        curve = pav_fit(data)
        return cllr(curve.pav_llrs[data.is_bonafide], curve.pav_llrs[~data.is_bonafide])
    tar, non = _split(data, non)
    curve = pav_fit(tar, non)
    return cllr(curve.pav_llrs[: tar.size], curve.pav_llrs[tar.size:])


@dataclass(frozen=True)
class MetricReport:
    eer: float
    min_dcf: float
    act_dcf: float
    cllr: float
    min_cllr: float
    eer_threshold: float
    min_dcf_threshold: float
    bayes_threshold: float
    params: DcfParams

    def to_text(self):
        """``metric<TAB>value`` lines, prefixed by a comment echoing the DCF parameters."""
        rows = [
            ("eer", self.eer),
            ("min_dcf", self.min_dcf),
            ("act_dcf", self.act_dcf),
            ("cllr", self.cllr),
            ("min_cllr", self.min_cllr),
            ("eer_threshold", self.eer_threshold),
            ("min_dcf_threshold", self.min_dcf_threshold),
            ("bayes_threshold", self.bayes_threshold),
        ]
        lines = [f"# {self.params.describe()}"]
        lines += [f"{name}\t{value:.6f}" for name, value in rows]
        return "\n".join(lines) + "\n"


def evaluate(data, non=None, params=None, eer_method="rocch"):
    """All five metrics for one set of scores."""
    params = params or DcfParams()
    tar, non = _split(data, non)
    e, e_thr = eer(tar, non, method=eer_method)
    m, m_thr = min_dcf(tar, non, params=params)
    return MetricReport(
        eer=e,
        min_dcf=m,
        act_dcf=act_dcf(tar, non, params=params),
        cllr=cllr(tar, non),
        min_cllr=min_cllr(tar, non),
        eer_threshold=e_thr,
        min_dcf_threshold=m_thr,
        bayes_threshold=params.bayes_threshold,
        params=params,
    )
