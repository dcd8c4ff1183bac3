"""Attack x codec breakdown tables with pooled margins, rendered as TSV or Markdown."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import metrics
from .score_io import NO_CONDITION, POOLED

METRICS = {
    "minDCF": lambda tar, non, p: metrics.min_dcf(tar, non, p)[0],
    "EER": lambda tar, non, p: metrics.eer(tar, non)[0],
    "actDCF": lambda tar, non, p: metrics.act_dcf(tar, non, p),
    "Cllr": lambda tar, non, p: metrics.cllr(tar, non),
}
BONAFIDE_POOLS = ("codec", "all")
ABSENT = "—"


@dataclass
class ConditionTable:
    metric: str
    rows: list
    cols: list
    values: dict               # (row, col) -> float, absent cells missing
    params: metrics.DcfParams = field(default_factory=metrics.DcfParams)
    bonafide_pool: str = "codec"
    n_spoof: dict = field(default_factory=dict)

    def get(self, row, col):
        return self.values.get((row, col))

    def header(self):
        pool = ("bonafide matched by codec column" if self.bonafide_pool == "codec"
                else "all bonafide trials in every cell")
        return f"metric={self.metric} {self.params.describe()} bonafide_pool={self.bonafide_pool} ({pool})"


def _cell_masks(data, pool):
    bona = data.is_bonafide
    attacks = np.array(data.attacks, dtype=object)
    codecs = np.array(data.codecs, dtype=object)
    spoof_attacks = sorted({a for a in attacks[~bona] if a != NO_CONDITION})
    cols = [POOLED] + sorted(set(codecs))
    rows = [POOLED] + spoof_attacks
    masks = {}
    for r in rows:
        spoof_r = ~bona if r == POOLED else (~bona) & (attacks == r)
        for c in cols:
            in_c = np.ones_like(bona) if c == POOLED else codecs == c
            bona_c = bona if pool == "all" else bona & in_c
            masks[(r, c)] = (spoof_r & in_c, bona_c)
    return rows, cols, masks


def build_table(data, metric="minDCF", params=None, bonafide_pool="codec", workers=1):
    """Metric per (attack, codec) condition with pooled row and column.

    Cell ``(a, c)`` scores the spoofs of attack ``a`` recorded with codec
    ``c`` against the bonafide trials of codec ``c`` (or against every
    bonafide trial with ``bonafide_pool="all"``). Margins are computed on
    the pooled trials, never averaged from cells. Cells without spoof or
    without bonafide trials are absent.
    """
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; expected one of {sorted(METRICS)}")
    if bonafide_pool not in BONAFIDE_POOLS:
        raise ValueError(f"bonafide_pool must be one of {BONAFIDE_POOLS}")
    data.require_both_classes()
    params = params or metrics.DcfParams()
    rows, cols, masks = _cell_masks(data, bonafide_pool)
    fn = METRICS[metric]
    scores = data.scores

    def cell(key):
        spoof_m, bona_m = masks[key]
        if not spoof_m.any() or not bona_m.any():
            return key, None
        return key, fn(scores[bona_m], scores[spoof_m], params)

    keys = list(masks)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(cell, keys))
    else:
        results = [cell(k) for k in keys]
    values = {k: v for k, v in results if v is not None}
    n_spoof = {k: int(masks[k][0].sum()) for k in keys}
    return ConditionTable(metric, rows, cols, values, params, bonafide_pool, n_spoof)


def format_value(metric, value):
    if value is None:
        return ABSENT
    if metric == "EER":
        return f"{100.0 * value:.2f}"
    return f"{value:.4f}"


def _grid(table):
    head = [table.metric] + list(table.cols)
    body = [[r] + [format_value(table.metric, table.get(r, c)) for c in table.cols] for r in table.rows]
    return head, body


def render(table, fmt="tsv"):
    """Deterministic text rendering; EER cells are percentages with two decimals."""
    head, body = _grid(table)
    if fmt == "tsv":
        lines = [f"# {table.header()}", "\t".join(head)] + ["\t".join(r) for r in body]
    elif fmt == "markdown":
        lines = [f"<!-- {table.header()} -->", "| " + " | ".join(head) + " |",
                 "|" + "|".join(["---"] + ["---:"] * (len(head) - 1)) + "|"]
        lines += ["| " + " | ".join(r) + " |" for r in body]
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return "\n".join(lines) + "\n"


def parse_tsv(text):
    """Read a rendered TSV table back; returns ``(metric, rows, cols, values)``.

    Values are in the rendered units (EER in percent); absent cells are ``None``.
    """
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    head = lines[0].split("\t")
    metric, cols = head[0], head[1:]
    rows, values = [], {}
    for ln in lines[1:]:
        parts = ln.split("\t")
        rows.append(parts[0])
        for c, v in zip(cols, parts[1:]):
            values[(parts[0], c)] = None if v == ABSENT else float(v)
    return metric, rows, cols, values
