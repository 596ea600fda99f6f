"""Bank-switching control logic.

The isolated-bank controller keeps one state machine per bank and walks a
single pointer up (on overvoltage) or down (on undervoltage) through the
configured bank order. The ladder controller for the interconnected array
just moves an index along a list of partitions.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import NamedTuple, Optional, Sequence

from .circuit import BankMode


class Signal(Enum):
    OVER = "over"
    UNDER = "under"
    OK = "ok"


class ActionKind(Enum):
    NONE = "None"
    CONNECT_SERIES = "ConnectSeries"
    TO_PARALLEL = "ToParallel"
    TO_SERIES = "ToSeries"
    DISCONNECT = "Disconnect"
    LADDER_UP = "LadderUp"
    LADDER_DOWN = "LadderDown"


class Action(NamedTuple):
    kind: ActionKind
    bank: Optional[int] = None

    def __str__(self):
        if self.kind is ActionKind.NONE:
            return "None"
        return f"{self.kind.value}({self.bank})"


NO_ACTION = Action(ActionKind.NONE)

# mode each action leaves its bank in
_TARGET = {
    ActionKind.CONNECT_SERIES: BankMode.SERIES,
    ActionKind.TO_PARALLEL: BankMode.PARALLEL,
    ActionKind.TO_SERIES: BankMode.SERIES,
    ActionKind.DISCONNECT: BankMode.DISCONNECTED,
}


def action_target_mode(action: Action) -> Optional[BankMode]:
    return _TARGET.get(action.kind)


@dataclass(frozen=True)
class Thresholds:
    v_enable: float = 3.3
    v_min: float = 1.8
    v_low: float = 1.9
    v_high: float = 3.5
    v_max: float = 3.6

    def __post_init__(self):
        if not (self.v_min <= self.v_low < self.v_enable <= self.v_high < self.v_max):
            raise ValueError(
                "thresholds must satisfy v_min <= v_low < v_enable <= v_high < v_max, got "
                f"v_min={self.v_min} v_low={self.v_low} v_enable={self.v_enable} "
                f"v_high={self.v_high} v_max={self.v_max}")
        if self.v_min <= 0:
            raise ValueError("v_min must be > 0")


@dataclass(frozen=True)
class ControllerCosts:
    hardware_power: float = 68e-6  # W while the system is powered
    software_duty_penalty: float = 0.018  # fraction of useful work at the reference poll rate
    reference_poll_period: float = 0.1  # s

    def __post_init__(self):
        if self.hardware_power < 0 or self.software_duty_penalty < 0:
            raise ValueError("controller costs must be >= 0")
        if self.reference_poll_period <= 0:
            raise ValueError("reference_poll_period must be > 0")

    def duty_penalty(self, poll_period: Optional[float]) -> float:
        """Penalty scales linearly with poll rate; no polling costs nothing."""
        if poll_period is None:
            return 0.0
        return min(self.software_duty_penalty * self.reference_poll_period / poll_period, 1.0)


ZERO_COSTS = ControllerCosts(hardware_power=0.0, software_duty_penalty=0.0)


@dataclass(frozen=True)
class ControllerState:
    bank_modes: tuple[BankMode, ...]
    step_pointer: int = -1  # -1: no bank advanced yet
    min_capacitance_level: int = 0
    poll_period: Optional[float] = 0.1

    def __post_init__(self):
        modes = tuple(self.bank_modes)
        object.__setattr__(self, "bank_modes", modes)
        if not -1 <= self.step_pointer < len(modes):
            raise ValueError(f"step_pointer {self.step_pointer} out of range")
        for i, m in enumerate(modes):
            if i > self.step_pointer and m is not BankMode.DISCONNECTED:
                raise ValueError(f"bank {i} connected beyond the step pointer")
            if i < self.step_pointer and m is not BankMode.PARALLEL:
                raise ValueError(f"bank {i} must be parallel below the step pointer")
        if self.step_pointer >= 0 and modes[self.step_pointer] is BankMode.DISCONNECTED:
            raise ValueError("step pointer rests on a disconnected bank")
        if self.min_capacitance_level < 0:
            raise ValueError("min_capacitance_level must be >= 0")
        if self.poll_period is not None and self.poll_period <= 0:
            raise ValueError("poll_period must be > 0 or None")

    @classmethod
    def reset(cls, n_banks: int, poll_period: Optional[float] = 0.1) -> "ControllerState":
        return cls((BankMode.DISCONNECTED,) * n_banks, -1, 0, poll_period)


def comparator_signal(v_last: float, th: Thresholds) -> Signal:
    if v_last >= th.v_high:
        return Signal.OVER
    if v_last <= th.v_low:
        return Signal.UNDER
    return Signal.OK


def capacitance_level(state: ControllerState) -> int:
    level = 0
    for m in state.bank_modes:
        if m is BankMode.SERIES:
            level += 1
        elif m is BankMode.PARALLEL:
            level += 2
    return level


def _apply(state: ControllerState, action: Action, pointer: int) -> ControllerState:
    modes = list(state.bank_modes)
    modes[action.bank] = _TARGET[action.kind]
    return replace(state, bank_modes=tuple(modes), step_pointer=pointer)


def controller_step(state: ControllerState, signal: Signal) -> tuple[ControllerState, Action]:
    p = state.step_pointer
    modes = state.bank_modes
    if signal is Signal.OVER:
        if p >= 0 and modes[p] is BankMode.SERIES:
            a = Action(ActionKind.TO_PARALLEL, p)
            return _apply(state, a, p), a
        if p + 1 < len(modes):
            a = Action(ActionKind.CONNECT_SERIES, p + 1)
            return _apply(state, a, p + 1), a
        return state, NO_ACTION
    if signal is Signal.UNDER:
        if p < 0 or capacitance_level(state) - 1 < state.min_capacitance_level:
            return state, NO_ACTION
        if modes[p] is BankMode.PARALLEL:
            a = Action(ActionKind.TO_SERIES, p)
            return _apply(state, a, p), a
        a = Action(ActionKind.DISCONNECT, p)
        return _apply(state, a, p - 1), a
    return state, NO_ACTION


class Gate(Enum):
    PROCEED = "proceed"
    SLEEP = "sleep"


def longevity_gate(state: ControllerState, task_required_level: int) -> tuple[Gate, ControllerState]:
    """Hold off a task until enough capacitance (hence energy) is banked.

    Sleeping pins the step-down floor at the required level so the banked
    energy is not spent elsewhere; proceeding releases the floor. A
    higher-priority task is let through simply by gating it on its own,
    lower, level.
    """
    if task_required_level < 0:
        raise ValueError("task_required_level must be >= 0")
    if capacitance_level(state) >= task_required_level:
        return Gate.PROCEED, replace(state, min_capacitance_level=0)
    return Gate.SLEEP, replace(state, min_capacitance_level=task_required_level)


def required_level_for_energy(energy: float, last_capacitance: float,
                              banks: Sequence[tuple[float, int]], v_low: float) -> int:
    """Smallest level whose capacitance holds ``energy`` at ``v_low``.

    ``banks`` lists (unit capacitance, count) in connection order. If even the
    full array falls short the top level is returned.
    """
    c_total = last_capacitance
    if 0.5 * c_total * v_low ** 2 >= energy:
        return 0
    level = 0
    for c_unit, n in banks:
        level += 1
        if 0.5 * (c_total + c_unit / n) * v_low ** 2 >= energy:
            return level
        level += 1
        c_total += n * c_unit
        if 0.5 * c_total * v_low ** 2 >= energy:
            return level
    return level


# -- ladder controller for the interconnected array --------------------------

def default_morphy_ladder() -> list[tuple[int, ...]]:
    """Eleven partitions of seven capacitors, in order of rising capacitance."""
    ladder = [(7,), (6, 1), (5, 2), (4, 3), (5, 1, 1), (3, 2, 2), (4, 1, 1, 1),
              (2, 2, 2, 1), (3, 1, 1, 1, 1), (2, 1, 1, 1, 1, 1), (1,) * 7]
    return sorted(ladder, key=lambda part: sum(1.0 / n for n in part))


def morphy_controller_step(index: int, signal: Signal, ladder_size: int) -> int:
    if not 0 <= index < ladder_size:
        raise ValueError(f"ladder index {index} outside [0, {ladder_size})")
    if signal is Signal.OVER:
        return min(index + 1, ladder_size - 1)
    if signal is Signal.UNDER:
        return max(index - 1, 0)
    return index
