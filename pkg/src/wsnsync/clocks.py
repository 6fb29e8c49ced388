"""Hardware and logical clock models.

A hardware clock counts oscillator ticks. The oscillator runs at a nominal
frequency plus a drift term that is piecewise constant in time: the drift is
redrawn uniformly from [-max_drift_hz, +max_drift_hz] at fixed resample
boundaries anchored at the clock's start time. Tick counts are exact floats
by default; an optional quantization flag floors readings to whole ticks.

A logical clock maps tick readings to seconds through an affine
(value, rate, anchor) state. Synchronization protocols adjust the value and
rate; the hardware clock is never adjusted.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class ClockRegressionError(ValueError):
    """Raised when a clock is asked to move backwards in time or ticks."""


@dataclass(frozen=True)
class OscillatorParams:
    """Physical oscillator description.

    nominal_hz: ideal tick rate f, in ticks per second.
    max_drift_hz: drift bound; instantaneous rate stays within
        [nominal - max_drift, nominal + max_drift].
    resample_interval_s: length of each constant-drift segment.
    quantize_ticks: floor readings to whole ticks when True.
    """

    nominal_hz: float
    max_drift_hz: float = 0.0
    resample_interval_s: float = 30.0
    quantize_ticks: bool = False

    def __post_init__(self) -> None:
        if not self.nominal_hz > 0:
            raise ValueError(f"nominal_hz must be positive, got {self.nominal_hz}")
        if not 0 <= self.max_drift_hz < self.nominal_hz:
            raise ValueError(
                "max_drift_hz must satisfy 0 <= max_drift < nominal, got "
                f"{self.max_drift_hz}"
            )
        if not self.resample_interval_s > 0:
            raise ValueError("resample_interval_s must be positive")


class HardwareClock:
    """Free-running tick counter with piecewise-constant drift.

    The drift value for each segment is drawn lazily from ``rng`` as segment
    boundaries are crossed, so the tick trajectory is a pure function of
    (params, rng seed, start_time, initial_ticks) and does not depend on how
    an advance is split into calls.
    """

    def __init__(
        self,
        params: OscillatorParams,
        rng: np.random.Generator,
        *,
        start_time: float = 0.0,
        initial_ticks: float = 0.0,
    ) -> None:
        if initial_ticks < 0:
            raise ValueError("initial_ticks must be nonnegative")
        self.params = params
        self._rng = rng
        self._ticks = float(initial_ticks)
        self._now = float(start_time)
        self._drift_hz = self._draw_drift()
        self._next_resample = self._now + params.resample_interval_s

    def _draw_drift(self) -> float:
        m = self.params.max_drift_hz
        return float(self._rng.uniform(-m, m))

    @property
    def now(self) -> float:
        return self._now

    @property
    def current_drift_hz(self) -> float:
        return self._drift_hz

    def read_ticks(self) -> float:
        if self.params.quantize_ticks:
            return float(math.floor(self._ticks))
        return self._ticks

    def advance(self, to_time: float) -> float:
        """Run the oscillator forward to ``to_time``; return ticks elapsed.

        Elapsed ticks are reported in the same (possibly quantized) view as
        read_ticks().
        """
        if to_time < self._now:
            raise ClockRegressionError(
                f"advance to {to_time} before current time {self._now}"
            )
        before = self.read_ticks()
        rate = self.params.nominal_hz
        # Each constant-drift segment is accumulated separately so the
        # trajectory does not depend on call partitioning.
        while self._next_resample <= to_time:
            self._ticks += (rate + self._drift_hz) * (self._next_resample - self._now)
            self._now = self._next_resample
            self._drift_hz = self._draw_drift()
            self._next_resample += self.params.resample_interval_s
        self._ticks += (rate + self._drift_hz) * (to_time - self._now)
        self._now = to_time
        return self.read_ticks() - before


@dataclass
class LogicalClock:
    """Affine mapping from hardware ticks to protocol time.

    value: logical seconds at the anchor point.
    rate: seconds advanced per hardware tick. Nominal is 1/nominal_hz.
    anchor_ticks: hardware reading where (value, rate) were last set.
    """

    value: float
    rate: float
    anchor_ticks: float = 0.0

    def read(self, at_ticks: float) -> float:
        if at_ticks < self.anchor_ticks:
            raise ClockRegressionError(
                f"read at {at_ticks} before anchor {self.anchor_ticks}"
            )
        return self.value + self.rate * (at_ticks - self.anchor_ticks)

    def apply_correction(
        self,
        at_ticks: float,
        offset_s: float = 0.0,
        new_rate: float | None = None,
    ) -> None:
        """Re-anchor at ``at_ticks``, shifting value by ``offset_s``.

        The read up to ``at_ticks`` uses the old rate (the clock physically
        ran at it until this instant); ``new_rate`` takes effect afterwards.
        Passing new_rate=None keeps the current rate.
        """
        self.value = self.read(at_ticks) + offset_s
        if new_rate is not None:
            self.rate = new_rate
        self.anchor_ticks = at_ticks
