import json

import numpy as np
import pytest

from msclstm.errors import ValidationError
from msclstm.metrics import ConfusionMatrix, confusion, format_report, report

# production confusion counts used as a fixture throughout:
# 26430 true normals, 25903 true anomalies, 745 anomalies missed,
# 218 normals flagged
PROD_CM = ConfusionMatrix(tn=26430, fp=218, fn=745, tp=25903)


def test_confusion_perfect_two_samples():
    cm = confusion([0, 1], [0, 1])
    assert (cm.tn, cm.fp, cm.fn, cm.tp) == (1, 0, 0, 1)


def test_confusion_fully_inverted():
    cm = confusion([0, 0, 1, 1], [1, 1, 0, 0])
    assert (cm.tn, cm.fp, cm.fn, cm.tp) == (0, 2, 2, 0)


def test_confusion_reproduces_production_counts():
    y_true = np.concatenate([np.zeros(26648, dtype=int), np.ones(26648, dtype=int)])
    y_pred = np.concatenate([np.zeros(26430, dtype=int), np.ones(218, dtype=int),
                             np.zeros(745, dtype=int), np.ones(25903, dtype=int)])
    cm = confusion(y_true, y_pred)
    assert cm == PROD_CM
    assert cm.total == len(y_true)


def test_confusion_counts_sum_to_input_length():
    rng = np.random.default_rng(0)
    for _ in range(10):
        n = int(rng.integers(1, 200))
        y_true = rng.integers(0, 2, n)
        y_pred = rng.integers(0, 2, n)
        assert confusion(y_true, y_pred).total == n


def test_confusion_validates_input():
    with pytest.raises(ValidationError):
        confusion([0, 1], [0])
    with pytest.raises(ValidationError):
        confusion([0, 2], [0, 1])
    with pytest.raises(ValidationError):
        confusion([0, 1], [0, -1])


def test_label_swap_transposes_matrix_and_swaps_rows():
    rng = np.random.default_rng(1)
    y_true = rng.integers(0, 2, 300)
    y_pred = rng.integers(0, 2, 300)
    cm = confusion(y_true, y_pred)
    sw = confusion(1 - y_true, 1 - y_pred)
    assert (sw.tn, sw.fp, sw.fn, sw.tp) == (cm.tp, cm.fn, cm.fp, cm.tn)
    r, rs = report(cm), report(sw)
    assert rs.normal == r.anomaly
    assert rs.anomaly == r.normal
    assert rs.accuracy == r.accuracy


def test_report_production_fixture_values():
    r = report(PROD_CM)
    assert abs(r.anomaly.recall - 25903 / 26648) < 1e-12
    assert abs(r.normal.precision - 26430 / 27175) < 1e-12
    assert abs(r.accuracy - 52333 / 53296) < 1e-12
    assert abs(r.accuracy * 100 - 98.2) < 0.05
    assert r.normal.support == 26648 and r.anomaly.support == 26648


def test_report_production_fixture_rounds_within_one_point_of_summary_table():
    # published integer summary: normal P/R/F1 = 97/100/99,
    # anomaly P/R/F1 = 100/97/98, accuracy 99
    r = report(PROD_CM)
    table = {
        "normal": {"precision": 97, "recall": 100, "f1": 99},
        "anomaly": {"precision": 100, "recall": 97, "f1": 98},
    }
    for cls, metrics in (("normal", r.normal), ("anomaly", r.anomaly)):
        for field in ("precision", "recall", "f1"):
            got = round(getattr(metrics, field) * 100)
            assert abs(got - table[cls][field]) <= 1
    assert abs(round(r.accuracy * 100) - 99) <= 1


def test_report_all_correct():
    r = report(ConfusionMatrix(tn=5, fp=0, fn=0, tp=7))
    for m in (r.normal, r.anomaly):
        assert m.precision == m.recall == m.f1 == 1.0
    assert r.accuracy == 1.0
    assert not r.flags


def test_report_zero_denominators_give_zero_with_flags():
    r = report(ConfusionMatrix(tn=10, fp=0, fn=4, tp=0))
    assert r.anomaly.recall == 0.0
    assert r.anomaly.f1 == 0.0
    assert any("anomaly" in f for f in r.flags)


def test_report_empty_matrix_rejected():
    with pytest.raises(ValidationError):
        report(ConfusionMatrix(0, 0, 0, 0))


def test_format_text_rounds_half_up_to_integer_percent():
    text = format_report(report(PROD_CM), "text")
    lines = text.splitlines()
    assert lines[1].split() == ["Normal", "97%", "99%", "98%", "26648"]
    assert lines[2].split() == ["Anomaly", "99%", "97%", "98%", "26648"]
    assert lines[3].split()[:2] == ["Accuracy", "98%"]


def test_format_json_round_trips_numerically():
    r = report(PROD_CM)
    payload = json.loads(format_report(r, "json"))
    assert payload["accuracy"] == r.accuracy
    assert payload["classes"]["anomaly"]["recall"] == r.anomaly.recall
    assert payload["classes"]["normal"]["support"] == 26648
    assert payload["confusion"] == {"tn": 26430, "fp": 218, "fn": 745, "tp": 25903}


def test_format_empty_class_support_shows_zero_and_flags():
    r = report(ConfusionMatrix(tn=10, fp=0, fn=0, tp=0))
    text = format_report(r, "text")
    assert "note:" in text
    payload = json.loads(format_report(r, "json"))
    assert payload["classes"]["anomaly"]["support"] == 0
    assert payload["flags"]


def test_format_rejects_unknown_kind():
    with pytest.raises(ValidationError):
        format_report(report(PROD_CM), "xml")
