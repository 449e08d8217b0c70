"""Energy bookkeeping and event-counting statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class RunLedger:
    input_total: float
    dissipated_total: float
    stored_delta: float

    @property
    def residual(self) -> float:
        return self.input_total - self.dissipated_total - self.stored_delta

    @property
    def relative_residual(self) -> float:
        scale = max(abs(self.input_total), abs(self.dissipated_total), abs(self.stored_delta))
        return abs(self.residual) / scale if scale else 0.0

    def balanced(self, rtol: float = 1e-9) -> bool:
        return self.relative_residual <= rtol


def ledger(series, input_per_period: Optional[float] = None) -> RunLedger:
    """Input, dissipated and stored energy of a completed run.

    ``input_per_period`` overrides the series' own input record (use it for
    constant-pump models; the Poisson reference has no pump and its input is
    its output).
    """
    if series.n == 0:
        return RunLedger(0.0, 0.0, 0.0)
    inp = series.input_total if input_per_period is None else series.n * input_per_period
    return RunLedger(
        input_total=float(inp),
        dissipated_total=math.fsum(series.event_marks),
        stored_delta=series.stored_delta,
    )


@dataclass(frozen=True)
class CountingStats:
    window: int
    n_windows: int
    mean_count: float
    var_count: float
    fano: float


def _event_indices(events):
    # Accepts a series, an index array, or a list of DissipationEvent records.
    if hasattr(events, "event_k"):
        return np.asarray(events.event_k, dtype=np.int64)
    if not isinstance(events, np.ndarray):
        events = [getattr(e, "k", e) for e in events]
    return np.asarray(events, dtype=np.int64)


def fano_factor(events, window: int, n: int, min_windows: int = 10) -> CountingStats:
    """Counts of events in disjoint windows of ``window`` periods over ``[0, n)``.

    Variance is unbiased (``ddof=1``).  The Fano factor is ``nan`` when no
    event falls in any window.
    """
    window = int(window)
    if window < 1:
        raise ValueError("window must be >= 1")
    nw = n // window
    if nw < min_windows:
        raise ValueError(f"only {nw} windows of {window} periods in {n}; need >= {min_windows}")
    k = _event_indices(events)
    k = k[k < nw * window]
    counts = np.bincount(k // window, minlength=nw).astype(float)
    mean = counts.mean()
    var = counts.var(ddof=1)
    fano = var / mean if mean > 0 else math.nan
    return CountingStats(window, nw, float(mean), float(var), float(fano))


@dataclass(frozen=True)
class InterEventStats:
    mean_gap: float
    var_gap: float
    hist_counts: np.ndarray
    hist_edges: np.ndarray


def gaps(events) -> np.ndarray:
    k = _event_indices(events)
    if k.size < 2:
        raise ValueError("need at least 2 events for inter-event gaps")
    return np.diff(k)


def interevent_stats(events, bin_width: int = 10) -> InterEventStats:
    g = gaps(events)
    top = int(g.max()) + bin_width
    edges = np.arange(0, top + 1, bin_width)
    counts, edges = np.histogram(g, bins=edges)
    var = float(g.var(ddof=1)) if g.size > 1 else 0.0
    return InterEventStats(float(g.mean()), var, counts, edges)


@dataclass(frozen=True)
class MarkStats:
    mean: float
    var: float
    min: float
    max: float


def mark_stats(marks) -> MarkStats:
    m = np.asarray(getattr(marks, "event_marks", marks), dtype=float)
    if m.size == 0:
        raise ValueError("no events")
    mean = math.fsum(m) / m.size
    lo, hi = float(m.min()), float(m.max())
    # Deviations about the correctly rounded mean, so constant marks give exactly 0.
    var = math.fsum((m - mean) ** 2) / (m.size - 1) if m.size > 1 and lo != hi else 0.0
    return MarkStats(mean, var, lo, hi)


def gap_mark_correlation(series) -> float:
    """Pearson correlation of each event's mark with the gap preceding it."""
    k = np.asarray(series.event_k)
    marks = np.asarray(series.event_marks)
    if k.size < 3:
        raise ValueError("need at least 3 events")
    g = np.diff(k).astype(float)
    return float(np.corrcoef(g, marks[1:])[0, 1])
