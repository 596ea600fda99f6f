"""Benchmark applications as per-step current draws.

DE  data encryption: continuous compute while powered.
SC  sense and compute: periodic short bursts; deadlines can be missed.
RT  radio transmission: atomic, energy-hungry sends gated on stored energy.
PF  packet forwarding: receive on unpredictable arrivals, then retransmit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

KINDS = ("DE", "SC", "RT", "PF")

# gate(required_level) -> True to proceed. Provided by the engine.
GateFn = Callable[[int], bool]


def _always(_level: int) -> bool:
    return True


@dataclass(frozen=True)
class WorkloadSpec:
    kind: str = "DE"
    active_current: float = 1.5e-3  # A, MCU running
    sleep_current: float = 1e-6  # A
    op_duration: Optional[float] = None  # s; default depends on kind
    op_current: Optional[float] = None  # A; default depends on kind
    period: float = 5.0  # s, SC sampling period
    required_level: Optional[int] = None  # RT/PF transmit; None -> derived from buffer
    receive_duration: float = 0.1  # s, PF
    receive_current: float = 5e-3  # A, PF
    receive_level: Optional[int] = None  # PF; None -> derived from buffer
    event_times: tuple[float, ...] = ()  # s, PF arrivals
    load_model: str = "current"  # or "resistance"
    nominal_voltage: float = 3.3  # V, only for the resistance model

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"workload kind must be one of {KINDS}, got {self.kind!r}")
        for name in ("active_current", "sleep_current", "receive_current"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.op_duration is None:
            object.__setattr__(self, "op_duration", _DEFAULT_DURATION[self.kind])
        if self.op_current is None:
            object.__setattr__(self, "op_current", _DEFAULT_CURRENT[self.kind])
        if not self.op_duration > 0 or self.op_current < 0:
            raise ValueError("op_duration must be > 0 and op_current >= 0")
        if not self.period > 0 or not self.receive_duration > 0:
            raise ValueError("period and receive_duration must be > 0")
        if self.load_model not in ("current", "resistance"):
            raise ValueError(f"unknown load_model {self.load_model!r}")
        if self.nominal_voltage <= 0:
            raise ValueError("nominal_voltage must be > 0")
        times = tuple(sorted(float(t) for t in self.event_times))
        if any(t < 0 for t in times):
            raise ValueError("event times must be >= 0")
        object.__setattr__(self, "event_times", times)

    def transmit_energy(self, voltage: float) -> float:
        return self.op_current * self.op_duration * voltage

    def receive_energy(self, voltage: float) -> float:
        return self.receive_current * self.receive_duration * voltage


# DE's op is an accounting unit of active time, not a separate peripheral.
_DEFAULT_DURATION = {"DE": 0.01, "SC": 0.05, "RT": 0.2, "PF": 0.2}
_DEFAULT_CURRENT = {"DE": 1.5e-3, "SC": 3e-3, "RT": 10e-3, "PF": 10e-3}


@dataclass
class OpCounters:
    completed: int = 0
    failed: int = 0
    received: int = 0
    transmitted: int = 0
    missed_deadlines: int = 0

    def to_dict(self) -> dict:
        return {
            "completed": self.completed,
            "failed": self.failed,
            "received": self.received,
            "transmitted": self.transmitted,
            "missed_deadlines": self.missed_deadlines,
        }


def load_event_file(path) -> tuple[float, ...]:
    """One arrival time in seconds per line; blank lines and '#' comments skipped."""
    times = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            t = float(line)
        except ValueError:
            raise ValueError(f"{path}:{lineno}: not a time: {line!r}") from None
        if t < 0:
            raise ValueError(f"{path}:{lineno}: negative time {t}")
        times.append(t)
    return tuple(sorted(times))


def deadline_schedule(w: WorkloadSpec, horizon: float) -> list[float]:
    if horizon <= 0:
        raise ValueError("horizon must be > 0")
    if w.kind == "SC":
        n = int(math.floor(horizon / w.period + 1e-9))
        return [k * w.period for k in range(1, n + 1)]
    if w.kind == "PF":
        return [t for t in w.event_times if t <= horizon]
    return []


@dataclass
class Workload:
    """Mutable per-simulation instance of a benchmark."""
    spec: WorkloadSpec
    dt: float
    duty_penalty: float = 0.0
    tx_level: int = 0
    rx_level: int = 0
    counters: OpCounters = field(default_factory=OpCounters)
    _busy_steps: int = 0
    _busy_op: str = ""
    _units: float = 0.0
    _queue: int = 0

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        s = self.spec
        self._op_steps = max(1, round(s.op_duration / self.dt))
        self._rx_steps = max(1, round(s.receive_duration / self.dt))

    @property
    def busy(self) -> bool:
        return self._busy_steps > 0

    def step(self, powered: bool, voltage: float, n_events: int = 0,
             gate: GateFn = _always) -> float:
        """Advance one step and return the current drawn from the buffer.

        ``n_events`` counts SC deadlines or PF arrivals falling in this step.
        """
        c = self.counters
        kind = self.spec.kind
        if not powered:
            if self._busy_steps:
                # atomic op cut short: its energy is wasted
                c.failed += 1
                if self._busy_op in ("burst", "rx"):
                    c.missed_deadlines += 1  # that deadline was never serviced
                self._busy_steps = 0
            if kind in ("SC", "PF"):
                c.missed_deadlines += n_events
            return 0.0

        if kind == "DE":
            self._units += (1.0 - self.duty_penalty) * self.dt / self.spec.op_duration
            done = int(self._units + 1e-9)  # absorb float drift in the running sum
            if done:
                c.completed += done
                self._units -= done
            return self._scale(self.spec.active_current, voltage)

        if kind == "SC":
            for _ in range(n_events):
                if self._busy_steps:
                    c.missed_deadlines += 1
                else:
                    self._start("burst", self._op_steps)
        elif kind == "RT":
            if not self._busy_steps and gate(self.tx_level):
                self._start("tx", self._op_steps)
        else:
            for _ in range(n_events):
                # receiving overrides a pending transmit's longevity floor
                if not self._busy_steps and gate(self.rx_level):
                    self._start("rx", self._rx_steps)
                else:
                    c.missed_deadlines += 1
            if not self._busy_steps and self._queue and gate(self.tx_level):
                self._start("tx", self._op_steps)

        if not self._busy_steps:
            return self._scale(self.spec.sleep_current, voltage)
        current = self.spec.receive_current if self._busy_op == "rx" else self.spec.op_current
        self._busy_steps -= 1
        if not self._busy_steps:
            self._finish()
        return self._scale(current, voltage)

    def _start(self, op: str, steps: int) -> None:
        self._busy_op = op
        self._busy_steps = steps

    def _finish(self) -> None:
        c = self.counters
        op = self._busy_op
        if op == "rx":
            c.received += 1
            self._queue += 1
        elif op == "tx":
            c.transmitted += 1
            c.completed += 1
            if self.spec.kind == "PF":
                self._queue -= 1
        else:
            c.completed += 1

    def _scale(self, current: float, voltage: float) -> float:
        if self.spec.load_model == "resistance":
            return current * voltage / self.spec.nominal_voltage
        return current


def workload_step(w: Workload, powered: bool, voltage: float, n_events: int = 0,
                  gate: GateFn = _always) -> tuple[float, dict]:
    """Functional wrapper: current draw plus the counter changes of this step."""
    before = w.counters.to_dict()
    current = w.step(powered, voltage, n_events, gate)
    after = w.counters.to_dict()
    return current, {k: after[k] - before[k] for k in after}


def event_steps(times: Sequence[float], dt: float) -> dict[int, int]:
    """Map event times to the index of the step that contains them."""
    out: dict[int, int] = {}
    for t in times:
        k = int(math.floor(t / dt + 1e-9))
        out[k] = out.get(k, 0) + 1
    return out
