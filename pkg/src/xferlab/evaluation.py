"""Accuracy/F1 scoring and the source x target transfer matrix.

The positive class is the positive polarity. Accuracy is (tp+tn)/total;
F1 is the positive-class 2tp/(2tp+fp+fn), defined as 0 when that
denominator is 0. Because the printed tables do not pin down which F1
variant they use, the CSV additionally carries macro-F1 (mean of the
per-class F1s) so either reading can be compared. A prediction tie
(probabilities exactly 0.5/0.5) counts as negative.
"""

from __future__ import annotations

import io
import csv as _csv
from dataclasses import dataclass, field

from .corpus import Dataset, DatasetKind
from .errors import ValidationError, XferError
from .featurize import Encoder
from .model import ModelParams, predict_class


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class MetricPair:
    accuracy: float
    f1: float


def metrics_from_counts(c: ConfusionCounts) -> MetricPair:
    if c.total == 0:
        raise ValidationError("no evaluated examples")
    denom = 2 * c.tp + c.fp + c.fn
    f1 = 2 * c.tp / denom if denom else 0.0
    return MetricPair((c.tp + c.tn) / c.total, f1)


def macro_f1(c: ConfusionCounts) -> float:
    """Unweighted mean of positive-class and negative-class F1."""
    pos_denom = 2 * c.tp + c.fp + c.fn
    neg_denom = 2 * c.tn + c.fn + c.fp  # negative class: its fp are our fn
    pos = 2 * c.tp / pos_denom if pos_denom else 0.0
    neg = 2 * c.tn / neg_denom if neg_denom else 0.0
    return (pos + neg) / 2.0


def evaluate(
    params: ModelParams, encoder: Encoder, test: Dataset
) -> tuple[ConfusionCounts, MetricPair]:
    """Score a checkpoint on a fully labeled test split."""
    if test.kind is not DatasetKind.FLD:
        raise ValidationError(f"evaluation needs an FLD test split, got {test.kind.value}")
    if len(test) == 0:
        raise ValidationError(f"test split {test.name} is empty")
    if encoder.dim != params.input_dim:
        raise ValidationError(
            f"encoder dim {encoder.dim} != model input dim {params.input_dim}"
        )
    tp = fp = tn = fn = 0
    for ex in test.examples:
        predicted = predict_class(params, encoder.encode(ex))
        actual = ex.label.index
        if actual == 1:
            tp, fn = (tp + 1, fn) if predicted == 1 else (tp, fn + 1)
        else:
            fp, tn = (fp + 1, tn) if predicted == 1 else (fp, tn + 1)
    counts = ConfusionCounts(tp, fp, tn, fn)
    return counts, metrics_from_counts(counts)


@dataclass(frozen=True)
class Cell:
    """One (source run, target split) result; failed cells carry the error text."""

    metrics: MetricPair | None
    f1_macro: float | None = None
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass(frozen=True)
class TransferReport:
    sources: tuple[str, ...]
    targets: tuple[str, ...]
    cells: dict[tuple[str, str], Cell]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(set(self.sources)) != len(self.sources):
            raise ValidationError("duplicate source labels in report")
        if len(set(self.targets)) != len(self.targets):
            raise ValidationError("duplicate target labels in report")
        missing = [
            (s, t) for s in self.sources for t in self.targets if (s, t) not in self.cells
        ]
        if missing:
            raise ValidationError(f"report is missing cells: {missing}")

    @property
    def any_failed(self) -> bool:
        return any(c.failed for c in self.cells.values())


def transfer_matrix(
    runs: list[tuple[str, ModelParams]],
    targets: list[tuple[str, Dataset]],
    encoder: Encoder,
    metadata: dict | None = None,
    jobs: int = 1,
) -> TransferReport:
    """Evaluate every run on every target. A failing cell is flagged, not fatal."""

    def one(src_params, target):
        try:
            counts, pair = evaluate(src_params, encoder, target)
            return Cell(pair, macro_f1(counts))
        except XferError as err:
            return Cell(None, error=str(err))

    pairs = [(s, t) for s, _ in runs for t, _ in targets]
    run_map = dict(runs)
    target_map = dict(targets)
    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(
                pool.map(lambda st: one(run_map[st[0]], target_map[st[1]]), pairs)
            )
    else:
        results = [one(run_map[s], target_map[t]) for s, t in pairs]
    cells = dict(zip(pairs, results))
    return TransferReport(
        tuple(label for label, _ in runs),
        tuple(label for label, _ in targets),
        cells,
        metadata or {},
    )


# --- rendering ----------------------------------------------------------------
#
# Accuracy prints as a percentage with two decimals ("82.50"), F1 with
# three ("0.809"). The markdown grid bolds the best accuracy per target
# column and italicizes the second best.


def format_accuracy(value: float) -> str:
    return f"{100.0 * value:.2f}"


def format_f1(value: float) -> str:
    return f"{value:.3f}"


def render_report(report: TransferReport, format: str = "csv") -> str:
    if format == "csv":
        return _render_csv(report)
    if format == "markdown":
        return _render_markdown(report)
    raise ValidationError(f"unknown report format {format!r}")


def _render_csv(report: TransferReport) -> str:
    buf = io.StringIO()
    writer = _csv.writer(buf, lineterminator="\n")
    header = ["source"]
    for t in report.targets:
        header += [f"{t}_acc", f"{t}_f1", f"{t}_f1_macro"]
    writer.writerow(header)
    if not report.targets:  # nothing to score against: header-only output
        return buf.getvalue()
    for s in report.sources:
        row = [s]
        for t in report.targets:
            cell = report.cells[(s, t)]
            if cell.failed:
                row += ["ERR", "ERR", "ERR"]
            else:
                row += [
                    format_accuracy(cell.metrics.accuracy),
                    format_f1(cell.metrics.f1),
                    format_f1(cell.f1_macro),
                ]
        writer.writerow(row)
    return buf.getvalue()


def _column_rank_marks(report: TransferReport, target: str) -> dict[str, str]:
    """source -> "best" | "second" for this target's accuracy column."""
    scored = [
        (s, report.cells[(s, target)].metrics.accuracy)
        for s in report.sources
        if not report.cells[(s, target)].failed
    ]
    if not scored:
        return {}
    values = sorted({acc for _, acc in scored}, reverse=True)
    marks = {}
    for s, acc in scored:
        if acc == values[0]:
            marks[s] = "best"
        elif len(values) > 1 and acc == values[1]:
            marks[s] = "second"
    return marks


def _render_markdown(report: TransferReport) -> str:
    marks = {t: _column_rank_marks(report, t) for t in report.targets}
    head = ["source"]
    for t in report.targets:
        head += [f"{t} acc", f"{t} F1"]
    lines = [
        "| " + " | ".join(head) + " |",
        "|" + "|".join(["---"] * len(head)) + "|",
    ]
    if not report.targets:
        return "\n".join(lines) + "\n"
    for s in report.sources:
        row = [s]
        for t in report.targets:
            cell = report.cells[(s, t)]
            if cell.failed:
                row += ["ERR", "ERR"]
                continue
            acc = format_accuracy(cell.metrics.accuracy)
            mark = marks[t].get(s)
            if mark == "best":
                acc = f"**{acc}**"
            elif mark == "second":
                acc = f"*{acc}*"
            row += [acc, format_f1(cell.metrics.f1)]
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"
