"""Error metrics over simulation traces.

A trace is a time-ordered sequence of SampleFrame objects, each holding the
per-node clock errors (logical minus true time, seconds) of the nodes booted
at that sample instant.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence


@dataclass(frozen=True)
class SampleFrame:
    """Snapshot of per-node clock errors at one sample instant."""

    time_s: float
    errors_s: dict[int, float]
    logical_s: dict[int, float] | None = None


def max_global_error(frame: SampleFrame) -> float | None:
    """Spread between the fastest and slowest clock, max_i e_i - min_i e_i.

    None when fewer than two nodes are up (no pair to compare).
    """
    if len(frame.errors_s) < 2:
        return None
    vals = frame.errors_s.values()
    return max(vals) - min(vals)


def max_local_error(
    frame: SampleFrame, edges: Iterable[tuple[int, int]]
) -> float | None:
    """Largest |e_i - e_j| over edges whose both endpoints are up."""
    worst: float | None = None
    errs = frame.errors_s
    for i, j in edges:
        if i in errs and j in errs:
            d = abs(errs[i] - errs[j])
            if worst is None or d > worst:
                worst = d
    return worst


def convergence_time(
    frames: Sequence[SampleFrame],
    threshold_s: float,
    window: int = 5,
    *,
    start_after: float = 0.0,
) -> float | None:
    """Earliest sample time from which max_global_error stays below
    threshold_s for ``window`` consecutive samples.

    Samples at t < start_after (e.g. before the last node boots) are
    excluded. Frames with an undefined global error (fewer than two nodes)
    break any run in progress. Returns None when no qualifying window
    exists.
    """
    if threshold_s <= 0:
        raise ValueError("threshold_s must be positive")
    if window < 1:
        raise ValueError("window must be >= 1")
    run_start: float | None = None
    run_len = 0
    for fr in frames:
        if fr.time_s < start_after:
            continue
        g = max_global_error(fr)
        if g is not None and g < threshold_s:
            if run_len == 0:
                run_start = fr.time_s
            run_len += 1
            if run_len >= window:
                return run_start
        else:
            run_start = None
            run_len = 0
    return None


@dataclass(frozen=True)
class TraceSummary:
    """Per-run summary statistics.

    steady_state_max_global_err_s is the median of max_global_error over the
    samples from the convergence instant onward (robust to isolated drift
    steps); peak_err_after_convergence_s is their maximum. Both are None for
    runs that never converge.
    """

    convergence_time_s: float | None
    steady_state_max_global_err_s: float | None
    peak_err_after_convergence_s: float | None


def _median(values: list[float]) -> float:
    vs = sorted(values)
    n = len(vs)
    mid = n // 2
    if n % 2:
        return vs[mid]
    return 0.5 * (vs[mid - 1] + vs[mid])


def summarize(
    frames: Sequence[SampleFrame],
    threshold_s: float,
    window: int = 5,
    *,
    start_after: float = 0.0,
) -> TraceSummary:
    t_conv = convergence_time(frames, threshold_s, window, start_after=start_after)
    if t_conv is None:
        return TraceSummary(None, None, None)
    tail = [
        g
        for fr in frames
        if fr.time_s >= t_conv and (g := max_global_error(fr)) is not None
    ]
    if not tail:
        return TraceSummary(t_conv, None, None)
    return TraceSummary(t_conv, _median(tail), max(tail))
