"""Input power traces and the converter stage in front of the buffer."""

from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np


class TraceError(ValueError):
    """Malformed or invalid power trace."""


@dataclass(frozen=True)
class Trace:
    """Piecewise-constant input power: sample i holds until sample i+1."""
    times: tuple[float, ...]  # s
    powers: tuple[float, ...]  # W
    duration: float  # s

    def __post_init__(self):
        if not self.times:
            raise TraceError("no samples")
        if len(self.times) != len(self.powers):
            raise TraceError("times and powers differ in length")
        if self.times[0] != 0:
            raise TraceError(f"trace must start at t=0, got {self.times[0]}")
        for a, b in zip(self.times, self.times[1:]):
            if not b > a:
                raise TraceError(f"timestamps not strictly increasing at t={b}")
        for t, p in zip(self.times, self.powers):
            if p < 0 or not math.isfinite(p):
                raise TraceError(f"negative power {p} at t={t}")
        if not self.duration > self.times[-1]:
            raise TraceError("duration must extend past the last sample")

    @classmethod
    def from_samples(cls, samples: Sequence[tuple[float, float]],
                     duration: Optional[float] = None) -> "Trace":
        samples = list(samples)
        if not samples:
            raise TraceError("no samples")
        times = tuple(float(t) for t, _ in samples)
        powers = tuple(float(p) for _, p in samples)
        if duration is None:
            # hold the last sample for as long as the previous interval
            step = times[-1] - times[-2] if len(times) > 1 else 1.0
            duration = times[-1] + step
        return cls(times, powers, float(duration))

    @property
    def samples(self) -> list[tuple[float, float]]:
        return list(zip(self.times, self.powers))

    def energy(self) -> float:
        """Integral of raw power over the trace."""
        edges = list(self.times[1:]) + [self.duration]
        return sum(p * (e - t) for t, e, p in zip(self.times, edges, self.powers))

    def average_power(self) -> float:
        return self.energy() / self.duration


def power_at(trace: Trace, t: float) -> float:
    """Zero-order hold lookup; 0 W once the trace has ended."""
    if t < 0:
        raise ValueError("t must be >= 0")
    if t >= trace.duration:
        return 0.0
    i = bisect.bisect_right(trace.times, t) - 1
    return trace.powers[i]


def load_trace(path, duration: Optional[float] = None) -> Trace:
    """Read a ``time_s,power_w`` CSV file.

    A non-numeric first row is a header. A ``# duration_s=X`` comment sets
    the trace length unless ``duration`` is given.
    """
    path = Path(path)
    samples = []
    file_duration = None
    seen_row = False
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if row[0].lstrip().startswith("#"):
                key, _, value = row[0].lstrip("# ").partition("=")
                if key.strip() == "duration_s":
                    try:
                        file_duration = float(value)
                    except ValueError:
                        raise TraceError(f"{path}:{lineno}: bad duration {value!r}") from None
                continue
            if len(row) < 2:
                raise TraceError(f"{path}:{lineno}: expected 'time_s,power_w', got {row!r}")
            try:
                t, p = float(row[0]), float(row[1])
            except ValueError:
                if not seen_row:
                    seen_row = True
                    continue
                raise TraceError(f"{path}:{lineno}: cannot parse {row!r}") from None
            seen_row = True
            if p < 0:
                raise TraceError(f"{path}:{lineno}: negative power {p}")
            samples.append((t, p))
    if not samples:
        raise TraceError(f"{path}: no samples")
    return Trace.from_samples(samples, duration if duration is not None else file_duration)


def write_trace(trace: Trace, path) -> None:
    with Path(path).open("w", newline="") as fh:
        fh.write(f"# duration_s={trace.duration!r}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time_s", "power_w"])
        for t, p in trace.samples:
            w.writerow([repr(t), repr(p)])


def synth_trace(kind: str, params: dict, seed: int = 0) -> Trace:
    """Build a synthetic trace.

    kinds and their params:
      constant:    power, duration
      square:      high, low, period, duration, duty (default 0.5)
      two_phase:   p1, t1, p2, t2
      random_walk: duration, mean, step_std, interval (default 1 s),
                   p_max (default 2*mean)
    """
    p = dict(params)
    try:
        if kind == "constant":
            _positive(p, "duration")
            _nonneg(p, "power")
            return Trace((0.0,), (float(p["power"]),), float(p["duration"]))
        if kind == "square":
            _positive(p, "period", "duration")
            _nonneg(p, "high", "low")
            duty = float(p.get("duty", 0.5))
            if not 0 < duty < 1:
                raise TraceError("duty must be in (0, 1)")
            period, dur = float(p["period"]), float(p["duration"])
            samples, t = [], 0.0
            k = 0
            while t < dur:
                samples.append((t, float(p["high"])))
                t_low = k * period + duty * period
                if t_low < dur:
                    samples.append((t_low, float(p["low"])))
                k += 1
                t = k * period
            return Trace.from_samples(samples, dur)
        if kind == "two_phase":
            _positive(p, "t1", "t2")
            _nonneg(p, "p1", "p2")
            t1, t2 = float(p["t1"]), float(p["t2"])
            return Trace((0.0, t1), (float(p["p1"]), float(p["p2"])), t1 + t2)
        if kind == "random_walk":
            _positive(p, "duration", "mean", "step_std")
            interval = float(p.get("interval", 1.0))
            if interval <= 0:
                raise TraceError("interval must be > 0")
            mean = float(p["mean"])
            p_max = float(p.get("p_max", 2 * mean))
            n = max(1, int(math.ceil(float(p["duration"]) / interval)))
            rng = np.random.default_rng(seed)
            steps = rng.normal(0.0, float(p["step_std"]), size=n)
            level, powers = mean, []
            for s in steps:
                powers.append(level)
                level = min(max(level + s, 0.0), p_max)
            times = tuple(i * interval for i in range(n))
            return Trace(times, tuple(float(x) for x in powers), n * interval)
    except KeyError as exc:
        raise TraceError(f"{kind}: missing parameter {exc.args[0]!r}") from None
    raise TraceError(f"unknown trace kind {kind!r}")


def _positive(p: dict, *names: str) -> None:
    for n in names:
        if not float(p[n]) > 0:
            raise TraceError(f"{n} must be > 0")


def _nonneg(p: dict, *names: str) -> None:
    for n in names:
        if float(p[n]) < 0:
            raise TraceError(f"{n} must be >= 0")


@dataclass(frozen=True)
class HarvesterModel:
    """Fixed-efficiency converter with a cold-start cutoff."""
    efficiency: float = 0.8
    cold_start_threshold: float = 0.0  # W of raw input
    max_output_voltage: float = math.inf  # V

    def __post_init__(self):
        if not 0 < self.efficiency <= 1:
            raise ValueError(f"efficiency must be in (0, 1], got {self.efficiency}")
        if self.cold_start_threshold < 0:
            raise ValueError("cold_start_threshold must be >= 0")
        if not self.max_output_voltage > 0:
            raise ValueError("max_output_voltage must be > 0")


SOLAR_PANEL = HarvesterModel(efficiency=0.22)
BOOST_STAGE = HarvesterModel(efficiency=0.8)


def converter_output(model: HarvesterModel, raw_power: float) -> float:
    if raw_power < 0:
        raise ValueError("raw_power must be >= 0")
    if raw_power < model.cold_start_threshold:
        return 0.0
    return model.efficiency * raw_power
