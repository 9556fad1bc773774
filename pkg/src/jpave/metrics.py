"""Exact-match evaluation: micro P/R/F1, Joint ACC, Instance ACC, Joint F1, per-attribute and seen/unseen scores.

Predictions and gold are mappings ``instance id -> set of (attribute, value)``.
A value predicted under the wrong attribute does not count as correct.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping

Pairs = Mapping[str, "set[tuple[str, str]]"]


class MetricsError(ValueError):
    pass


def prf(correct: int, predicted: int, gold: int) -> tuple[float, float, float]:
    """Precision, recall, F1 with 0 on empty denominators."""
    p = correct / predicted if predicted else 0.0
    r = correct / gold if gold else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def _check_ids(pred: Pairs, gold: Pairs) -> list[str]:
    if set(pred) != set(gold):
        missing = sorted(set(gold) ^ set(pred))[:5]
        raise MetricsError(f"prediction and gold instance ids differ (e.g. {missing})")
    return sorted(gold)


def counts(pred: Pairs, gold: Pairs) -> tuple[int, int, int]:
    ids = _check_ids(pred, gold)
    crt = sum(len(set(pred[i]) & set(gold[i])) for i in ids)
    return crt, sum(len(set(pred[i])) for i in ids), sum(len(set(gold[i])) for i in ids)


def micro_f1(pred: Pairs, gold: Pairs) -> tuple[float, float, float]:
    return prf(*counts(pred, gold))


def joint_acc(pred: Pairs, gold: Pairs) -> float:
    ids = _check_ids(pred, gold)
    if not ids:
        raise MetricsError("joint accuracy of an empty test set")
    return sum(set(pred[i]) == set(gold[i]) for i in ids) / len(ids)


def _instance_acc(p: set, g: set) -> float:
    if not g:
        return 1.0 if not p else 0.0
    return len(p & g) / len(g)


def _instance_f1(p: set, g: set) -> float:
    if not g:
        return 1.0 if not p else 0.0
    return prf(len(p & g), len(p), len(g))[2]


def instance_acc(pred: Pairs, gold: Pairs) -> float:
    ids = _check_ids(pred, gold)
    if not ids:
        raise MetricsError("instance accuracy of an empty test set")
    return sum(_instance_acc(set(pred[i]), set(gold[i])) for i in ids) / len(ids)


def joint_f1(pred: Pairs, gold: Pairs) -> float:
    ids = _check_ids(pred, gold)
    if not ids:
        raise MetricsError("joint F1 of an empty test set")
    return sum(_instance_f1(set(pred[i]), set(gold[i])) for i in ids) / len(ids)


@dataclass
class PRF:
    correct: int = 0
    predicted: int = 0
    gold: int = 0
    precision: float = 0.0
    recall: float = 0.0
    f1: float = 0.0

    @classmethod
    def from_counts(cls, correct: int, predicted: int, gold: int) -> "PRF":
        return cls(correct, predicted, gold, *prf(correct, predicted, gold))


def _restrict(pairs: Pairs, keep) -> dict:
    return {i: {x for x in ps if keep(x)} for i, ps in pairs.items()}


def partitioned_f1(pred: Pairs, gold: Pairs, unseen: Iterable[tuple[str, str]]) -> tuple[PRF, PRF]:
    """(seen, unseen) reports. A pair in ``unseen`` scores in the unseen report, every other pair in seen."""
    unseen = set(unseen)
    _check_ids(pred, gold)
    out = []
    for keep in (lambda x: x not in unseen, lambda x: x in unseen):
        out.append(PRF.from_counts(*counts(_restrict(pred, keep), _restrict(gold, keep))))
    return out[0], out[1]


def per_attribute(pred: Pairs, gold: Pairs, attributes: Iterable[str]) -> dict[str, PRF]:
    return {
        a: PRF.from_counts(*counts(_restrict(pred, lambda x, a=a: x[0] == a), _restrict(gold, lambda x, a=a: x[0] == a)))
        for a in attributes
    }


@dataclass
class EvalReport:
    n_total: int
    value: PRF
    jacc: float
    iacc: float
    jf1: float
    attribute: PRF | None = None
    per_attribute: dict = field(default_factory=dict)  # attr -> {"attribute": PRF|None, "value": PRF}
    seen: PRF | None = None
    unseen: PRF | None = None
    unseen_per_attribute: dict = field(default_factory=dict)

    @property
    def f1(self) -> float:
        return self.value.f1

    @property
    def attr_f1(self) -> float:
        return self.attribute.f1 if self.attribute is not None else 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def per_attribute_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["attribute", "attr_precision", "attr_recall", "attr_f1",
                    "value_precision", "value_recall", "value_f1"])
        for a, row in self.per_attribute.items():
            ar, vr = row.get("attribute"), row["value"]
            attr_cells = [ar.precision, ar.recall, ar.f1] if ar is not None else ["", "", ""]
            w.writerow([a, *attr_cells, vr.precision, vr.recall, vr.f1])
        return buf.getvalue()

    def unseen_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["attribute", "precision", "recall", "f1", "correct", "predicted", "gold"])
        rows = list(self.unseen_per_attribute.items())
        if self.unseen is not None:
            rows.append(("Overall", self.unseen))
        for a, r in rows:
            w.writerow([a, r.precision, r.recall, r.f1, r.correct, r.predicted, r.gold])
        return buf.getvalue()


def evaluate(pred: Pairs, gold: Pairs, attributes: Iterable[str] = (),
             pred_attrs: Mapping[str, set] | None = None, gold_attrs: Mapping[str, set] | None = None,
             unseen: Iterable[tuple[str, str]] | None = None) -> EvalReport:
    """Full report over value pairs, optionally attribute decisions and a seen/unseen split."""
    attributes = list(attributes)
    value = PRF.from_counts(*counts(pred, gold))
    report = EvalReport(len(gold), value, joint_acc(pred, gold), instance_acc(pred, gold), joint_f1(pred, gold))
    attr_rows = {}
    if pred_attrs is not None and gold_attrs is not None:
        pa = {i: {(a,) for a in s} for i, s in pred_attrs.items()}
        ga = {i: {(a,) for a in s} for i, s in gold_attrs.items()}
        report.attribute = PRF.from_counts(*counts(pa, ga))
        attr_rows = per_attribute(pa, ga, attributes)
    for a, vr in per_attribute(pred, gold, attributes).items():
        report.per_attribute[a] = {"attribute": attr_rows.get(a), "value": vr}
    if unseen is not None:
        unseen = set(unseen)
        report.seen, report.unseen = partitioned_f1(pred, gold, unseen)
        un_pred = _restrict(pred, lambda x: x in unseen)
        un_gold = _restrict(gold, lambda x: x in unseen)
        report.unseen_per_attribute = {
            a: r for a, r in per_attribute(un_pred, un_gold, attributes).items() if r.gold or r.predicted
        }
    return report
