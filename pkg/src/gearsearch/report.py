"""Running-best series and per-quarter improvement summaries for a run log."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

from .logio import LogFile
from .model import Success
from .replay import walk_states

CRASH_MARKER = "CRASH"


@dataclass(frozen=True)
class ReportRow:
    step: int
    bpb: Optional[float]  # None on crash
    running_best: Optional[float]  # None until the first success
    frontier_size: int
    operator: str
    promotion: str


@dataclass(frozen=True)
class QuarterSummary:
    index: int
    start_step: int
    end_step: int
    improvement_mbpb: float


@dataclass(frozen=True)
class ReportSeries:
    start_bpb: float  # step-0 baseline evaluation
    rows: Tuple[ReportRow, ...]
    quarters: Tuple[QuarterSummary, ...]

    @property
    def final_best(self) -> float:
        for row in reversed(self.rows):
            if row.running_best is not None:
                return row.running_best
        return self.start_bpb

    @property
    def total_improvement_mbpb(self) -> float:
        return (self.start_bpb - self.final_best) * 1000.0


def report_running_best(log: LogFile, blocks: int = 4) -> ReportSeries:
    """Per-step series plus improvement per block of the run, in milli-bpb.

    Block improvements are anchored at the baseline evaluation, so they
    telescope exactly to the total improvement.
    """
    rows: List[ReportRow] = []
    experiment_best: Optional[float] = None
    for state in walk_states(log.header, log.records):
        record = state.record
        if isinstance(record.outcome, Success):
            bpb: Optional[float] = record.outcome.metrics.bpb
            experiment_best = bpb if experiment_best is None else min(experiment_best, bpb)
        else:
            bpb = None
        rows.append(
            ReportRow(
                step=record.step,
                bpb=bpb,
                running_best=experiment_best,
                frontier_size=len(state.frontier_after),
                operator=record.operator.value,
                promotion=record.promotion.kind.value,
            )
        )

    start = log.header.root_metrics.bpb

    def best_through(step: int) -> float:
        value = start
        for row in rows[:step]:
            if row.running_best is not None:
                value = min(value, row.running_best)
        return value

    quarters: List[QuarterSummary] = []
    n = len(rows)
    if n and blocks > 0:
        boundaries = [round(k * n / blocks) for k in range(blocks + 1)]
        for k in range(blocks):
            lo, hi = boundaries[k], boundaries[k + 1]
            if hi <= lo:
                continue
            gain = (best_through(lo) - best_through(hi)) * 1000.0
            quarters.append(QuarterSummary(k + 1, rows[lo].step, rows[hi - 1].step, gain))

    return ReportSeries(start_bpb=start, rows=tuple(rows), quarters=tuple(quarters))


def series_to_csv(series: ReportSeries, include_quarters: bool = False) -> str:
    lines = ["step,bpb,running_best,frontier_size,operator,promotion"]
    for row in series.rows:
        bpb = CRASH_MARKER if row.bpb is None else repr(row.bpb)
        best = "" if row.running_best is None else repr(row.running_best)
        lines.append(f"{row.step},{bpb},{best},{row.frontier_size},{row.operator},{row.promotion}")
    if include_quarters:
        lines.append("")
        lines.append("quarter,start_step,end_step,improvement_mbpb")
        for quarter in series.quarters:
            lines.append(
                f"{quarter.index},{quarter.start_step},{quarter.end_step},"
                f"{quarter.improvement_mbpb:.5f}"
            )
    return "\n".join(lines) + "\n"
