"""Value normalization, per-field F1, aggregation and privacy-safe monitoring reports."""

from __future__ import annotations

import csv
import io
import json
import re
from collections import Counter, defaultdict
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from fractions import Fraction
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence

from .dates import canonical_date

GroundTruth = Dict[str, Dict[str, List[str]]]

_WS = re.compile(r"\s+")


def _text_norm(value) -> str:
    return _WS.sub(" ", str(value).casefold()).strip()


def _number_norm(value) -> Optional[str]:
    if isinstance(value, bool):
        return None
    cleaned = re.sub(r"[\s,$€£]", "", str(value))
    cleaned = re.sub(r"^(?:usd|eur|gbp)", "", cleaned, flags=re.I)
    try:
        d = Decimal(cleaned)
    except InvalidOperation:
        return None
    return str(d) if d.is_finite() else None


def normalize_value(value, field_type: str = "string"):
    """Canonical comparison form of an extracted or ground-truth value.

    Lists are normalized element-wise. Dates become ISO-8601 when they parse;
    numbers drop currency symbols and thousands separators. Everything is
    case-folded with whitespace collapsed.
    """
    if value is None:
        return None
    if isinstance(value, (list, tuple)):
        return [normalize_value(v, field_type) for v in value]
    if field_type == "date":
        iso = canonical_date(str(value))
        if iso:
            return iso
    elif field_type in ("number", "integer"):
        num = _number_norm(value)
        if num is not None:
            return num
    return _text_norm(value)


def as_value_list(value) -> list:
    if value is None:
        return []
    if isinstance(value, (list, tuple)):
        return [v for v in value if v is not None]
    return [value]


def normalized_multiset(value, field_type: str = "string") -> Counter:
    return Counter(normalize_value(v, field_type) for v in as_value_list(value))


def values_match(a, b, field_type: str = "string") -> bool:
    return normalized_multiset(a, field_type) == normalized_multiset(b, field_type)


@dataclass(frozen=True)
class FieldEval:
    doc_id: str
    field: str
    precision: Fraction
    recall: Fraction
    f1: Fraction

    def to_dict(self) -> dict:
        return {"doc_id": self.doc_id, "field": self.field, "precision": float(self.precision),
                "recall": float(self.recall), "f1": float(self.f1)}


def field_f1(extracted, truth, field_type: str = "string", doc_id: str = "",
             field: str = "") -> FieldEval:
    """Precision/recall/F1 over normalized value multisets, as exact fractions.

    Null (or empty) extraction against empty truth scores 1; any other case with
    an empty side scores 0.
    """
    ext = normalized_multiset(extracted, field_type)
    tru = normalized_multiset(truth, field_type)
    n_ext, n_tru = sum(ext.values()), sum(tru.values())
    if n_ext == 0 and n_tru == 0:
        one = Fraction(1)
        return FieldEval(doc_id, field, one, one, one)
    if n_ext == 0 or n_tru == 0:
        zero = Fraction(0)
        return FieldEval(doc_id, field, zero, zero, zero)
    correct = sum((ext & tru).values())
    p = Fraction(correct, n_ext)
    r = Fraction(correct, n_tru)
    f1 = Fraction(0) if p + r == 0 else 2 * p * r / (p + r)
    return FieldEval(doc_id, field, p, r, f1)


def aggregate_f1(evals: Sequence[FieldEval]) -> Fraction:
    if not evals:
        raise ValueError("aggregate_f1 needs at least one evaluation")
    return sum((e.f1 for e in evals), Fraction(0)) / len(evals)


def load_ground_truth(path) -> GroundTruth:
    """Read ``{doc_id: {field: [values]}}``; scalars become one-item lists, null becomes []."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    return parse_ground_truth(raw)


def parse_ground_truth(raw: Mapping) -> GroundTruth:
    if not isinstance(raw, Mapping):
        raise ValueError("ground truth must be a JSON object keyed by document id")
    out: GroundTruth = {}
    for doc_id, fields in raw.items():
        if not doc_id or not isinstance(fields, Mapping):
            raise ValueError(f"bad ground-truth entry for {doc_id!r}")
        out[doc_id] = {}
        for key, vals in fields.items():
            if not key:
                raise ValueError(f"empty field key in ground truth for {doc_id!r}")
            out[doc_id][key] = [str(v) for v in as_value_list(vals)]
    return out


def evaluate_documents(results: Mapping[str, Mapping[str, object]], truth: GroundTruth,
                       field_types: Mapping[str, str]) -> List[FieldEval]:
    """FieldEvals for every (doc, field) present in both results and ground truth."""
    evals = []
    for doc_id in sorted(results):
        if doc_id not in truth:
            continue
        for key, ftype in field_types.items():
            evals.append(field_f1(results[doc_id].get(key), truth[doc_id].get(key, []), ftype,
                                  doc_id, key))
    return evals


@dataclass
class MonitoringReport:
    success_rate: float
    field_type_distribution: Dict[str, float]
    quality_by_type: Dict[str, float]
    total_requests: int

    def to_dict(self) -> dict:
        return {
            "total_requests": self.total_requests,
            "success_rate": self.success_rate,
            "field_type_distribution": dict(self.field_type_distribution),
            "quality_by_type": dict(self.quality_by_type),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "bucket", "value"])
        w.writerow(["requests", "ALL", self.total_requests])
        w.writerow(["success_rate", "ALL", f"{self.success_rate:.6f}"])
        for bucket, share in sorted(self.field_type_distribution.items()):
            w.writerow(["field_type_share", bucket, f"{share:.6f}"])
        for bucket, q in sorted(self.quality_by_type.items()):
            w.writerow(["quality", bucket, f"{q:.6f}"])
        return buf.getvalue()


@dataclass(frozen=True)
class FieldRecord:
    """One (document, field) extraction outcome; holds no document text or values."""
    labels: Sequence[str]
    extracted: bool
    judge_score: Optional[float] = None


def monitoring_report(records: Iterable[FieldRecord]) -> MonitoringReport:
    """Aggregate extraction outcomes by the field's first entity label (OTHER if none)."""
    counts: Counter = Counter()
    scores: Dict[str, List[float]] = defaultdict(list)
    total = hits = 0
    for rec in records:
        bucket = rec.labels[0] if rec.labels else "OTHER"
        counts[bucket] += 1
        total += 1
        hits += bool(rec.extracted)
        if rec.judge_score is not None:
            scores[bucket].append(float(rec.judge_score))
    dist = {b: c / total for b, c in sorted(counts.items())} if total else {}
    quality = {b: sum(v) / len(v) for b, v in sorted(scores.items()) if v}
    return MonitoringReport(hits / total if total else 0.0, dist, quality, total)
