"""Sequence- and participant-level regression metrics plus report tables.

Two aggregation levels: mse_seq treats every prediction independently;
mse_part first collapses each participant to the per-trait median of their
predictions (even counts take the midpoint of the two central values),
then scores those.  Pearson correlation is computed at the participant
level per trait.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "TRAITS",
    "PredictionRecord",
    "UndefinedCorrelationError",
    "mse_seq",
    "aggregate_participant",
    "mse_part",
    "pearson_part",
    "report_table",
    "render_report",
]

TRAITS = ("O", "C", "E", "A", "N")


class UndefinedCorrelationError(ValueError):
    """A trait's correlation is undefined (zero variance on one side)."""


@dataclass(frozen=True)
class PredictionRecord:
    """One sequence-level prediction next to its ground truth."""

    session_id: str
    task: str
    participant_id: str
    sequence_start: int
    prediction: np.ndarray  # (5,)
    ground_truth: np.ndarray  # (5,)

    def __post_init__(self):
        for name in ("prediction", "ground_truth"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != (5,) or not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be 5 finite reals, got {arr!r}")
            object.__setattr__(self, name, arr)


def _check_records(records: Sequence[PredictionRecord]) -> None:
    if not records:
        raise ValueError("metrics need at least one prediction record")


def mse_seq(records: Sequence[PredictionRecord]) -> np.ndarray:
    """Per-trait mean squared error over all sequence records."""
    _check_records(records)
    preds = np.array([r.prediction for r in records])
    truth = np.array([r.ground_truth for r in records])
    return ((preds - truth) ** 2).mean(axis=0)


def aggregate_participant(
    records: Sequence[PredictionRecord],
) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Median prediction and ground truth per participant.

    The median is taken per trait across the participant's sequence
    records; an even count averages the two central values.  Ground truth
    must be constant within a participant.
    """
    _check_records(records)
    grouped: dict[str, list[PredictionRecord]] = {}
    for r in records:
        grouped.setdefault(r.participant_id, []).append(r)
    out: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    for pid, rs in grouped.items():
        truth = rs[0].ground_truth
        for r in rs[1:]:
            if not np.array_equal(r.ground_truth, truth):
                raise ValueError(f"participant {pid!r} has inconsistent ground truth")
        preds = np.array([r.prediction for r in rs])
        out[pid] = (np.median(preds, axis=0), truth)
    return out


def mse_part(records: Sequence[PredictionRecord]) -> np.ndarray:
    """Per-trait MSE over participants' median-aggregated predictions."""
    agg = aggregate_participant(records)
    med = np.array([v[0] for v in agg.values()])
    truth = np.array([v[1] for v in agg.values()])
    return ((med - truth) ** 2).mean(axis=0)


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    # sequential scalar arithmetic: BLAS reductions reorder additions, which
    # would break bit-exact agreement with a naive reimplementation
    n = len(x)
    mx = sum(float(v) for v in x) / n
    my = sum(float(v) for v in y) / n
    num = sx = sy = 0.0
    for a, b in zip(x, y):
        da = float(a) - mx
        db = float(b) - my
        num += da * db
        sx += da * da
        sy += db * db
    if sx == 0.0 or sy == 0.0:
        raise UndefinedCorrelationError("zero variance")
    return num / math.sqrt(sx * sy)


def pearson_part(records: Sequence[PredictionRecord], strict: bool = True) -> np.ndarray:
    """Per-trait Pearson correlation at the participant level.

    Needs at least two participants.  A trait with zero variance on either
    side raises UndefinedCorrelationError naming the trait; with
    strict=False that trait is reported as NaN (missing) instead of 0.
    """
    agg = aggregate_participant(records)
    if len(agg) < 2:
        raise ValueError("pearson needs at least two participants")
    med = np.array([v[0] for v in agg.values()])
    truth = np.array([v[1] for v in agg.values()])
    out = np.empty(5)
    for k, trait in enumerate(TRAITS):
        try:
            out[k] = _pearson(med[:, k], truth[:, k])
        except UndefinedCorrelationError:
            if strict:
                raise UndefinedCorrelationError(
                    f"correlation undefined for trait {trait} (zero variance)"
                ) from None
            out[k] = np.nan
    return out


# ---------------------------------------------------------------------------
# reports


def report_table(
    records: Sequence[PredictionRecord], group_by: str = "task"
) -> list[tuple[str, str, str, float]]:
    """Machine-readable metric rows: (task, trait, metric, value).

    group_by="task" yields one group per task present (fixed task order)
    plus an "Overall" group; group_by="overall" yields only the latter.
    Each metric contributes its 5 trait values and their mean under the
    pseudo-trait "Avg"; undefined correlations appear as NaN.
    """
    _check_records(records)
    if group_by not in ("task", "overall"):
        raise ValueError(f"group_by must be 'task' or 'overall', got {group_by!r}")
    from .data import TASKS  # canonical task order

    groups: list[tuple[str, list[PredictionRecord]]] = []
    if group_by == "task":
        for task in TASKS:
            sub = [r for r in records if r.task == task]
            if sub:
                groups.append((task, sub))
    groups.append(("Overall", list(records)))

    rows: list[tuple[str, str, str, float]] = []
    for gname, recs in groups:
        metric_values = {
            "mse_seq": mse_seq(recs),
            "mse_part": mse_part(recs),
        }
        try:
            metric_values["pearson_part"] = pearson_part(recs, strict=False)
        except ValueError:
            metric_values["pearson_part"] = np.full(5, np.nan)
        for metric, vals in metric_values.items():
            for k, trait in enumerate(TRAITS):
                rows.append((gname, trait, metric, float(vals[k])))
            rows.append((gname, "Avg", metric, float(np.mean(vals))))
    return rows


def render_report(rows: Iterable[tuple[str, str, str, float]]) -> str:
    """Aligned text table from report rows; deterministic for fixed rows."""
    by_group: dict[str, dict[str, dict[str, float]]] = {}
    for group, trait, metric, value in rows:
        by_group.setdefault(group, {}).setdefault(metric, {})[trait] = value

    cols = list(TRAITS) + ["Avg"]
    name_w = max(len("metric"), max((len(m) for g in by_group.values() for m in g), default=6))
    lines = []
    for group, metrics in by_group.items():
        lines.append(f"== {group} ==")
        header = "  ".join([f"{'metric':<{name_w}}"] + [f"{c:>8}" for c in cols])
        lines.append(header)
        for metric, vals in metrics.items():
            cells = []
            for c in cols:
                v = vals.get(c, float("nan"))
                cells.append(f"{'n/a':>8}" if math.isnan(v) else f"{v:8.3f}")
            lines.append("  ".join([f"{metric:<{name_w}}"] + cells))
        lines.append("")
    return "\n".join(lines)
