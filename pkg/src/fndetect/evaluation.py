"""Confusion matrices, per-class metrics and the comparison table.

Class indexing is [gold][predicted] over {0 = real, 1 = fake}. Stored metric
values keep full precision; rounding (half-up) happens only when rendering
tables, so reports stay comparable.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import DataError, PreconditionError, ShapeError

CLASS_NAMES = {0: "real", 1: "fake"}


def round_half_up(value: float, decimals: int = 2) -> float:
    """Decimal round-half-up of the shortest-repr value (presentation only)."""
    exp = Decimal(1).scaleb(-decimals)
    return float(Decimal(repr(float(value))).quantize(exp, rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class ConfusionMatrix:
    """2x2 counts, rows = gold class, columns = predicted class."""

    counts: tuple[tuple[int, int], tuple[int, int]]

    def __post_init__(self) -> None:
        rows = self.counts
        if len(rows) != 2 or any(len(r) != 2 for r in rows):
            raise ShapeError(f"confusion matrix must be 2x2, got {rows!r}")
        flat = [c for row in rows for c in row]
        if any((not isinstance(c, int)) or c < 0 for c in flat):
            raise DataError(f"confusion counts must be non-negative integers, got {rows!r}")

    @classmethod
    def from_counts(cls, real_real: int, real_fake: int, fake_real: int, fake_fake: int) -> "ConfusionMatrix":
        return cls(((real_real, real_fake), (fake_real, fake_fake)))

    def as_array(self) -> np.ndarray:
        return np.array(self.counts, dtype=np.int64)

    @property
    def total(self) -> int:
        return sum(c for row in self.counts for c in row)

    @property
    def accuracy(self) -> float:
        return (self.counts[0][0] + self.counts[1][1]) / self.total

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["gold\\predicted", "real", "fake"])
        writer.writerow(["real", self.counts[0][0], self.counts[0][1]])
        writer.writerow(["fake", self.counts[1][0], self.counts[1][1]])
        return buf.getvalue()


def confusion(gold, predicted) -> ConfusionMatrix:
    """Count gold/predicted label pairs into a 2x2 matrix."""
    gold = np.asarray(gold)
    predicted = np.asarray(predicted)
    if gold.shape != predicted.shape or gold.ndim != 1:
        raise ShapeError(f"gold {gold.shape} and predicted {predicted.shape} must be equal 1-d shapes")
    if gold.size < 1:
        raise PreconditionError("confusion needs at least one prediction")
    for name, arr in (("gold", gold), ("predicted", predicted)):
        if not np.isin(arr, (0, 1)).all():
            raise DataError(f"{name} labels must be 0 or 1")
    counts = [[0, 0], [0, 0]]
    for g in (0, 1):
        for p in (0, 1):
            counts[g][p] = int(((gold == g) & (predicted == p)).sum())
    return ConfusionMatrix(tuple(tuple(row) for row in counts))


@dataclass(frozen=True)
class ClassScores:
    precision: float
    recall: float
    f1: float
    support: int

    def to_json_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "support": self.support,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "ClassScores":
        return cls(data["precision"], data["recall"], data["f1"], data["support"])


@dataclass(frozen=True)
class ClassMetrics:
    real: ClassScores
    fake: ClassScores

    def for_label(self, label: int) -> ClassScores:
        return self.fake if label == 1 else self.real

    def to_json_dict(self) -> dict:
        return {"real": self.real.to_json_dict(), "fake": self.fake.to_json_dict()}

    @classmethod
    def from_json_dict(cls, data: dict) -> "ClassMetrics":
        return cls(
            real=ClassScores.from_json_dict(data["real"]),
            fake=ClassScores.from_json_dict(data["fake"]),
        )


def class_metrics(cm: ConfusionMatrix) -> ClassMetrics:
    """Per-class precision/recall/F1/support with the zero-denominator
    convention: undefined ratios are 0, and F1 is 0 when p + r = 0."""
    if cm.total < 1:
        raise PreconditionError("class_metrics needs a non-empty matrix")
    arr = cm.as_array()
    scores = {}
    for c in (0, 1):
        column = int(arr[:, c].sum())
        row = int(arr[c, :].sum())
        tp = int(arr[c, c])
        precision = tp / column if column else 0.0
        recall = tp / row if row else 0.0
        f1 = 2.0 * precision * recall / (precision + recall) if precision + recall else 0.0
        scores[c] = ClassScores(precision=precision, recall=recall, f1=f1, support=row)
    return ClassMetrics(real=scores[0], fake=scores[1])


@dataclass(frozen=True)
class EvalReport:
    """One model's evaluation. The timestamp lives only in memory and in run
    manifests, never in the report JSON, so report files are reproducible."""

    model: str
    confusion: ConfusionMatrix
    metrics: ClassMetrics
    accuracy: float
    config_hash: str
    timestamp: str | None = None

    def to_json_dict(self) -> dict:
        return {
            "schema_version": 1,
            "model": self.model,
            "confusion": [list(row) for row in self.confusion.counts],
            "metrics": self.metrics.to_json_dict(),
            "accuracy": self.accuracy,
            "config_hash": self.config_hash,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json_dict(cls, data: dict) -> "EvalReport":
        return cls(
            model=data["model"],
            confusion=ConfusionMatrix(tuple(tuple(int(c) for c in row) for row in data["confusion"])),
            metrics=ClassMetrics.from_json_dict(data["metrics"]),
            accuracy=data["accuracy"],
            config_hash=data["config_hash"],
        )

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        return cls.from_json_dict(json.loads(text))


def build_report(model: str, gold, predicted, config_hash: str = "", timestamp: str | None = None) -> EvalReport:
    """Confusion + metrics + accuracy for one prediction run."""
    cm = confusion(gold, predicted)
    return EvalReport(
        model=model,
        confusion=cm,
        metrics=class_metrics(cm),
        accuracy=cm.accuracy,
        config_hash=config_hash,
        timestamp=timestamp,
    )


def format_metrics_row(report: EvalReport) -> str:
    """One-line per-class summary (2-decimal, half-up) for stdout."""
    parts = [report.model]
    for label in (1, 0):
        s = report.metrics.for_label(label)
        parts.append(
            f"{CLASS_NAMES[label]} {round_half_up(s.precision):.2f}/{round_half_up(s.recall):.2f}"
            f"/{round_half_up(s.f1):.2f} (support {s.support})"
        )
    return "  ".join(parts)


def load_reference_rows(path: str | Path | None = None) -> list[dict]:
    """Static comparison rows (previously published scores, never recomputed)."""
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
    else:
        text = (resources.files("fndetect.data") / "comparison_references.json").read_text("utf-8")
    rows = json.loads(text)
    for row in rows:
        for key in ("method", "precision", "recall", "f1"):
            if key not in row:
                raise DataError(f"reference row missing {key!r}: {row}")
    return rows


def comparison_table(reports: list[EvalReport], reference_rows: list[dict] | None = None) -> list[dict]:
    """Rows for the comparison table: one per report (fake-class scores, the
    convention used for single-number comparisons) plus the static reference
    rows. The best F1 overall is flagged; ties share the flag."""
    if not reports:
        raise PreconditionError("comparison_table needs at least one report")
    if reference_rows is None:
        reference_rows = load_reference_rows()
    rows = []
    for report in sorted(reports, key=lambda r: r.model):
        fake = report.metrics.fake
        rows.append(
            {
                "method": report.model,
                "precision": f"{round_half_up(fake.precision):.2f}",
                "recall": f"{round_half_up(fake.recall):.2f}",
                "f1": f"{round_half_up(fake.f1):.2f}",
                "source": "this_work",
            }
        )
    for ref in reference_rows:
        rows.append(
            {
                "method": ref["method"],
                "precision": str(ref["precision"]),
                "recall": str(ref["recall"]),
                "f1": str(ref["f1"]),
                "source": "reference",
            }
        )
    best = max(float(r["f1"]) for r in rows)
    for r in rows:
        r["best"] = float(r["f1"]) == best
    return rows


def table_to_markdown(rows: list[dict]) -> str:
    lines = [
        "| Method | Precision | Recall | F1 |",
        "| --- | --- | --- | --- |",
    ]
    for r in rows:
        f1 = f"**{r['f1']}**" if r["best"] else r["f1"]
        lines.append(f"| {r['method']} | {r['precision']} | {r['recall']} | {f1} |")
    return "\n".join(lines) + "\n"


def table_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["method", "precision", "recall", "f1", "source", "best"])
    for r in rows:
        writer.writerow([r["method"], r["precision"], r["recall"], r["f1"], r["source"], str(r["best"]).lower()])
    return buf.getvalue()
