import numpy as np
import pytest

from spoofcm import metrics, report
from spoofcm.score_io import LabeledScoreSet

import fixtures
import oracles

P = (1.0, 10.0, 0.95)


def small_set(rng, n=240):
    attacks = rng.choice(["A1", "A2"], n)
    codecs = rng.choice(["-", "c1"], n)
    bona = rng.random(n) < 0.4
    attacks = np.where(bona, "-", attacks)
    scores = np.round(rng.normal(np.where(bona, 1.5, 0.0)), 1)  # rounding makes ties
    return LabeledScoreSet(tuple(f"t{i}" for i in range(n)), scores, bona, tuple(attacks), tuple(codecs))


def manual_cell(data, row, col, pool="codec"):
    tar, non = [], []
    for s, b, a, c in zip(data.scores, data.is_bonafide, data.attacks, data.codecs):
        if b and (pool == "all" or col == "pooled" or c == col):
            tar.append(s)
        elif not b and (row == "pooled" or a == row) and (col == "pooled" or c == col):
            non.append(s)
    return np.array(tar), np.array(non)


ORACLE = {
    "minDCF": lambda t, n: oracles.min_dcf_oracle(t, n, *P)[0],
    "EER": lambda t, n: oracles.rocch_eer_oracle(t, n),
    "actDCF": lambda t, n: oracles.act_dcf_oracle(t, n, *P),
    "Cllr": lambda t, n: oracles.cllr_oracle(t, n),
}


@pytest.mark.parametrize("pool", ["codec", "all"])
@pytest.mark.parametrize("metric", sorted(ORACLE))
def test_cells_match_manual_filtering(metric, pool):
    data = small_set(np.random.default_rng(0))
    table = report.build_table(data, metric, bonafide_pool=pool)
    assert table.rows == ["pooled", "A1", "A2"]
    assert table.cols == ["pooled", "-", "c1"]
    for r in table.rows:
        for c in table.cols:
            tar, non = manual_cell(data, r, c, pool)
            assert table.get(r, c) == pytest.approx(ORACLE[metric](tar, non), rel=1e-12, abs=1e-15), (r, c)


def test_pooled_cell_is_full_set_metric():
    data = small_set(np.random.default_rng(1))
    table = report.build_table(data, "minDCF")
    assert table.get("pooled", "pooled") == metrics.min_dcf(data)[0]
    assert table.get("pooled", "pooled") != np.mean([table.get(r, "pooled") for r in ("A1", "A2")])


def test_spoof_counts_add_up():
    data = small_set(np.random.default_rng(2))
    table = report.build_table(data, "EER")
    inner = [table.n_spoof[(r, c)] for r in table.rows[1:] for c in table.cols[1:]]
    assert sum(inner) == data.n_spoof


def test_condition_without_spoofs_is_absent():
    scores = np.array([2.0, 1.5, 0.0, -1.0, 2.2, 0.3])
    bona = np.array([True, True, False, False, True, False])
    data = LabeledScoreSet(tuple("abcdef"), scores, bona,
                           ("-", "-", "A1", "A1", "-", "A2"), ("-", "c1", "-", "-", "c1", "-"))
    table = report.build_table(data, "minDCF")
    assert table.get("A1", "c1") is None and table.get("pooled", "c1") is None
    text = report.render(table)
    assert text.splitlines()[3].split("\t") == ["A1", table_fmt(table, "A1", "pooled"),
                                                table_fmt(table, "A1", "-"), "—"]


def table_fmt(table, r, c):
    return report.format_value(table.metric, table.get(r, c))


def test_formatting_conventions():
    assert report.format_value("EER", 0.0342) == "3.42"
    assert report.format_value("minDCF", 0.09371) == "0.0937"
    assert report.format_value("Cllr", 0.19274) == "0.1927"
    assert report.format_value("actDCF", None) == "—"


def test_pooled_only_table_is_two_by_two():
    table = report.ConditionTable("minDCF", ["pooled"], ["pooled"], {("pooled", "pooled"): 0.25})
    lines = report.render(table).splitlines()[1:]
    assert [ln.split("\t") for ln in lines] == [["minDCF", "pooled"], ["pooled", "0.2500"]]


def test_tsv_round_trip():
    data = small_set(np.random.default_rng(3))
    for metric in ("minDCF", "EER"):
        table = report.build_table(data, metric)
        name, rows, cols, values = report.parse_tsv(report.render(table))
        assert (name, rows, cols) == (metric, table.rows, table.cols)
        scale = 100 if metric == "EER" else 1
        for key, v in values.items():
            assert v == pytest.approx(scale * table.values[key], abs=0.51 * 10 ** -(2 if metric == "EER" else 4))


def test_parallel_cells_identical():
    data = small_set(np.random.default_rng(4))
    a = report.render(report.build_table(data, "Cllr"))
    b = report.render(report.build_table(data, "Cllr", workers=4))
    assert a == b


def test_errors():
    one_class = LabeledScoreSet.from_arrays([0.1, 0.2], [True, True])
    with pytest.raises(ValueError):
        report.build_table(one_class, "minDCF")
    data = small_set(np.random.default_rng(5))
    with pytest.raises(ValueError):
        report.build_table(data, "AUC")
    with pytest.raises(ValueError):
        report.build_table(data, "EER", bonafide_pool="attack")
    with pytest.raises(ValueError):
        report.render(report.build_table(data, "EER"), "html")


def test_generated_pooled_min_dcf_hits_target():
    sep = fixtures.find_separation()
    value = fixtures.pooled_min_dcf(sep)
    assert abs(value - fixtures.TARGET_MIN_DCF) <= 0.0005
    assert f"{value:.4f}" == "0.0937"


@pytest.mark.parametrize("name", ["minDCF.tsv", "minDCF.md", "EER.tsv", "EER.md"])
def test_golden_tables(name):
    expected = (fixtures.GOLDEN / name).read_text(encoding="utf-8")
    assert fixtures.golden_tables()[name] == expected
    if name == "minDCF.tsv":
        assert expected.splitlines()[2].split("\t")[1] == "0.0937"
