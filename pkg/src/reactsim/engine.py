"""Fixed-timestep simulation loop and energy accounting.

Each step runs, in order: harvester injection, output-diode equalization,
power gating, workload draw, controller poll, leakage, controller
overhead. Internally the buffers keep mutable per-capacitor charges for
speed; the circuit module supplies the physics for anything that is not
on the per-step hot path.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

from .circuit import (
    LEAK_LINEAR, BankMode, CapacitorSpec, EnergyLedger, MorphyNetwork, SimpleBuffer,
    equalize, leak_step, max_unit_capacitance, morphy_equivalent_capacitance,
    morphy_reconfigure, validate_partition,
)
from .controller import (
    NO_ACTION, Action, ActionKind, ControllerCosts, ControllerState, Gate, Signal, Thresholds,
    action_target_mode, capacitance_level, comparator_signal, controller_step,
    default_morphy_ladder, longevity_gate, morphy_controller_step,
    required_level_for_energy,
)
from .harvester import HarvesterModel, Trace, converter_output
from .workload import OpCounters, Workload, WorkloadSpec, deadline_schedule, event_steps

logger = logging.getLogger(__name__)

EQ_INSTANT = "instantaneous"
EQ_LOAD_FOLLOWING = "load_following"

LEDGER_RTOL = 1e-9
LEDGER_FLOOR = 1e-6  # J


class LedgerError(RuntimeError):
    """Energy accounting failed to balance: an engine bug, never a result."""


# -- configuration -----------------------------------------------------------

@dataclass(frozen=True)
class StaticBufferConfig:
    spec: CapacitorSpec
    initial_voltage: float = 0.0
    name: str = "static"


@dataclass(frozen=True)
class ReactBufferConfig:
    last_level: CapacitorSpec
    banks: tuple[tuple[CapacitorSpec, int], ...]
    costs: ControllerCosts = ControllerCosts()
    equalization: str = EQ_INSTANT
    poll_period: Optional[float] = 0.1  # None disables the software component
    bank_order: str = "ascending"  # or "as_given"
    forward_drop: float = 0.0  # V, output diodes
    initial_voltage: float = 0.0
    # (mode, per-capacitor voltage) for each bank, in connection order
    initial_banks: Optional[tuple[tuple[BankMode, float], ...]] = None
    name: str = "react"

    def __post_init__(self):
        object.__setattr__(self, "banks", tuple((s, int(n)) for s, n in self.banks))
        if self.equalization not in (EQ_INSTANT, EQ_LOAD_FOLLOWING):
            raise ValueError(f"unknown equalization mode {self.equalization!r}")
        if self.bank_order not in ("ascending", "as_given"):
            raise ValueError(f"unknown bank_order {self.bank_order!r}")
        if self.poll_period is not None and self.poll_period <= 0:
            raise ValueError("poll_period must be > 0 or null")
        if self.forward_drop < 0:
            raise ValueError("forward_drop must be >= 0")
        if any(n < 1 for _, n in self.banks):
            raise ValueError("bank count must be >= 1")
        if self.initial_banks is not None and len(self.initial_banks) != len(self.banks):
            raise ValueError("initial_banks must list every bank")

    def ordered_banks(self) -> list[tuple[CapacitorSpec, int]]:
        if self.bank_order == "as_given":
            return list(self.banks)
        return sorted(self.banks, key=lambda b: b[0].capacitance * b[1])


@dataclass(frozen=True)
class MorphyBufferConfig:
    unit_spec: CapacitorSpec
    count: int = 7
    task_spec: Optional[CapacitorSpec] = None
    ladder: tuple[tuple[int, ...], ...] = tuple(default_morphy_ladder())
    poll_period: float = 0.1
    initial_voltage: float = 0.0
    name: str = "morphy"

    def __post_init__(self):
        ladder = tuple(validate_partition(p, self.count) for p in self.ladder)
        if not ladder:
            raise ValueError("ladder must not be empty")
        object.__setattr__(self, "ladder", ladder)
        if self.poll_period <= 0:
            raise ValueError("poll_period must be > 0")


BufferConfig = Union[StaticBufferConfig, ReactBufferConfig, MorphyBufferConfig]


@dataclass(frozen=True)
class SimConfig:
    buffer: BufferConfig
    trace: Trace
    harvester: HarvesterModel = HarvesterModel()
    workload: WorkloadSpec = WorkloadSpec()
    thresholds: Thresholds = Thresholds()
    dt: float = 1e-3
    drain_after_trace: bool = True
    max_drain_time: float = 600.0  # s
    leakage: bool = True
    leakage_model: str = LEAK_LINEAR
    seed: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if self.max_drain_time < 0:
            raise ValueError("max_drain_time must be >= 0")
        b = self.buffer
        if isinstance(b, ReactBufferConfig):
            th = self.thresholds
            for spec, n in b.banks:
                limit = max_unit_capacitance(n, b.last_level.capacitance, th.v_high, th.v_low)
                if spec.capacitance >= limit:
                    logger.warning(
                        "bank of %d x %.4g F exceeds the unit-capacitance limit %.4g F; "
                        "reclamation may push the last-level buffer above v_high",
                        n, spec.capacitance, limit)


# -- report ------------------------------------------------------------------

@dataclass
class Report:
    name: str
    latency_to_first_on: Optional[float]
    on_time_fraction: float
    mean_power_cycle_length: float
    power_cycles: int
    counters: OpCounters
    ledger: EnergyLedger
    ledger_residual: float
    peak_v_last: float
    final_v_last: float
    simulated_time: float
    drain_truncated: bool
    action_counts: dict
    final_bank_states: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "latency_to_first_on": self.latency_to_first_on,
            "on_time_fraction": self.on_time_fraction,
            "mean_power_cycle_length": self.mean_power_cycle_length,
            "power_cycles": self.power_cycles,
            "counters": self.counters.to_dict(),
            "ledger": self.ledger.to_dict(),
            "ledger_residual": self.ledger_residual,
            "peak_v_last": self.peak_v_last,
            "final_v_last": self.final_v_last,
            "simulated_time": self.simulated_time,
            "drain_truncated": self.drain_truncated,
            "action_counts": dict(sorted(self.action_counts.items())),
            "final_bank_states": self.final_bank_states,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


class WaveformRecorder:
    """Collects decimated per-step samples and controller actions."""

    COLUMNS = ("time_s", "v_last", "power_in_w", "gate_on", "level", "bank_modes")

    def __init__(self, decimation: int = 1):
        if decimation < 1:
            raise ValueError("decimation must be >= 1")
        self.decimation = decimation
        self.rows: list[tuple] = []
        self.actions: list[tuple[float, str]] = []

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(",".join(self.COLUMNS) + "\n")
            for t, v, p, on, level, modes in self.rows:
                fh.write(f"{t!r},{v!r},{p!r},{int(on)},{level},{modes}\n")


# -- ledger ------------------------------------------------------------------

def ledger_check(ledger: EnergyLedger, stored_before: float, stored_after: float) -> float:
    """Return the accounting residual; raise LedgerError if it is too large."""
    residual = ledger.harvested - (stored_after - stored_before + ledger.outflow())
    scale = max(ledger.harvested, stored_before, LEDGER_FLOOR)
    if not abs(residual) <= LEDGER_RTOL * scale:
        raise LedgerError(
            f"energy ledger imbalance {residual:.3e} J exceeds {LEDGER_RTOL:g} x {scale:.3e} J "
            f"(harvested={ledger.harvested:.6e}, stored {stored_before:.6e} -> {stored_after:.6e}, "
            f"outflow={ledger.outflow():.6e})")
    return residual


# -- buffer models -----------------------------------------------------------

class _StaticModel:
    polls_when_off = False
    direct_only_after_action = False

    def __init__(self, cfg: StaticBufferConfig, leakage: bool):
        self.spec = cfg.spec if leakage else cfg.spec.without_leakage()
        self.c = self.spec.capacitance
        self.q = cfg.initial_voltage * self.c
        self.duty_penalty = 0.0
        self.hardware_power = 0.0
        self.poll_period = None

    def v_last(self) -> float:
        return self.q / self.c

    def stored(self) -> float:
        return self.q * self.q / (2.0 * self.c)

    def inject(self, energy: float, v_clip: float, direct_only: bool) -> float:
        v = self.q / self.c
        room = 0.5 * self.c * (v_clip * v_clip - v * v)
        if room <= 0:
            return 0.0
        if energy >= room:
            self.q = v_clip * self.c
            return room
        self.q = math.sqrt(v * v + 2.0 * energy / self.c) * self.c
        return energy

    def settle(self) -> float:
        return 0.0

    def draw_charge(self, charge: float) -> float:
        q0 = self.q
        self.q = max(q0 - charge, 0.0)
        return (q0 * q0 - self.q * self.q) / (2.0 * self.c)

    def draw_energy(self, energy: float) -> float:
        q0 = self.q
        v2 = max((q0 / self.c) ** 2 - 2.0 * energy / self.c, 0.0)
        self.q = math.sqrt(v2) * self.c
        return (q0 * q0 - self.q * self.q) / (2.0 * self.c)

    def leak(self, dt: float, model: str) -> float:
        self.q, lost = leak_step(self.spec, self.q, dt, model)
        return lost

    def poll(self, signal: Signal) -> tuple[Action, float]:
        return NO_ACTION, 0.0

    def gate_off(self) -> None:
        pass

    def quiescent(self) -> bool:
        return True

    def level(self) -> int:
        return 0

    def required_level(self, energy: float, v_low: float) -> int:
        return 0

    def gate(self, required: int) -> bool:
        return True

    def modes_str(self) -> str:
        return ""

    def bank_states(self) -> list:
        return []


class _ReactModel:
    polls_when_off = False
    direct_only_after_action = True

    def __init__(self, cfg: ReactBufferConfig, th: Thresholds, leakage: bool):
        fix = (lambda s: s) if leakage else CapacitorSpec.without_leakage
        self.last_spec = fix(cfg.last_level)
        self.c_last = self.last_spec.capacitance
        self.q_last = cfg.initial_voltage * self.c_last
        banks = cfg.ordered_banks()
        self.specs = [fix(s) for s, _ in banks]
        self.cu = [s.capacitance for s in self.specs]
        self.n = [n for _, n in banks]
        if cfg.initial_banks is None:
            self.mode = [BankMode.DISCONNECTED] * len(banks)
            self.q = [0.0] * len(banks)
        else:
            self.mode = [m for m, _ in cfg.initial_banks]
            self.q = [v * c for (_, v), c in zip(cfg.initial_banks, self.cu)]
        pointer = max((i for i, m in enumerate(self.mode) if m is not BankMode.DISCONNECTED),
                      default=-1)
        self.state = ControllerState(tuple(self.mode), pointer, 0, cfg.poll_period)
        self.poll_period = cfg.poll_period
        self.duty_penalty = cfg.costs.duty_penalty(cfg.poll_period)
        self.hardware_power = cfg.costs.hardware_power
        self.equalization = cfg.equalization
        self.drop = cfg.forward_drop
        self.th = th

    # bank helpers
    def _ceq(self, i: int) -> float:
        m = self.mode[i]
        if m is BankMode.PARALLEL:
            return self.n[i] * self.cu[i]
        if m is BankMode.SERIES:
            return self.cu[i] / self.n[i]
        return 0.0

    def _vout(self, i: int) -> float:
        v = self.q[i] / self.cu[i]
        return self.n[i] * v if self.mode[i] is BankMode.SERIES else v

    def _set_vout(self, i: int, v: float) -> None:
        c = self.cu[i]
        self.q[i] = v * c / self.n[i] if self.mode[i] is BankMode.SERIES else v * c

    def _remove_out_charge(self, i: int, charge: float) -> None:
        if self.mode[i] is BankMode.SERIES:
            self.q[i] -= charge
        else:
            self.q[i] -= charge / self.n[i]
        if self.q[i] < 0:
            self.q[i] = 0.0

    def _connected(self) -> list[int]:
        return [i for i, m in enumerate(self.mode) if m is not BankMode.DISCONNECTED]

    def v_last(self) -> float:
        return self.q_last / self.c_last

    def stored(self) -> float:
        e = self.q_last * self.q_last / (2.0 * self.c_last)
        for q, c, n in zip(self.q, self.cu, self.n):
            e += n * q * q / (2.0 * c)
        return e

    def inject(self, energy: float, v_clip: float, direct_only: bool) -> float:
        # Harvester current flows into the lowest-voltage reservoir first:
        # fill the lowest group up to the next reservoir's voltage, merge, repeat.
        res = [(self.q_last / self.c_last, self.c_last, -1)]
        if not direct_only:
            res.extend((self._vout(i), self._ceq(i), i) for i in self._connected())
            res.sort(key=lambda r: r[0])
        v_g = res[0][0]
        c_g = 0.0
        j = 0
        remaining = energy
        while v_g < v_clip:
            while j < len(res) and res[j][0] <= v_g:
                c_g += res[j][1]
                j += 1
            target = min(res[j][0], v_clip) if j < len(res) else v_clip
            need = 0.5 * c_g * (target * target - v_g * v_g)
            if remaining <= need:
                v_g = math.sqrt(v_g * v_g + 2.0 * remaining / c_g)
                remaining = 0.0
                break
            remaining -= need
            v_g = target
        if remaining == energy:
            return 0.0
        for v, _, i in res[:j]:
            if v < v_g:
                if i < 0:
                    self.q_last = v_g * self.c_last
                else:
                    self._set_vout(i, v_g)
        return energy - remaining

    def settle(self) -> float:
        if self.equalization != EQ_INSTANT:
            return 0.0
        v_last = self.q_last / self.c_last
        cands = [(self._vout(i), i) for i in self._connected()]
        cands = [c for c in cands if c[0] > v_last + self.drop]
        if not cands:
            return 0.0
        dissipated = 0.0
        # the last-level buffer pulls from the highest-voltage bank first
        for v_b, i in sorted(cands, key=lambda c: (-c[0], c[1])):
            v_new, lost = equalize(self._ceq(i), v_b, self.c_last, v_last, self.drop)
            if lost == 0.0 and v_new == v_last:
                continue
            moved = self.c_last * (v_new - v_last)
            self._remove_out_charge(i, moved)
            self.q_last = v_new * self.c_last
            v_last = v_new
            dissipated += lost
        return dissipated

    def _lf_supply(self, energy: float) -> float:
        """Load-following: banks above the rail feed the load directly."""
        v_last = self.q_last / self.c_last
        left = energy
        cands = sorted(((self._vout(i), i) for i in self._connected()), key=lambda c: (-c[0], c[1]))
        for v_b, i in cands:
            if left <= 0 or v_b <= v_last:
                break
            ceq = self._ceq(i)
            avail = 0.5 * ceq * (v_b * v_b - v_last * v_last)
            take = min(avail, left)
            self._set_vout(i, math.sqrt(max(v_b * v_b - 2.0 * take / ceq, 0.0)))
            left -= take
        return energy - left

    def draw_charge(self, charge: float) -> float:
        if self.equalization == EQ_LOAD_FOLLOWING:
            got = self._lf_supply(charge * self.q_last / self.c_last)
            return got + self._draw_last_energy(charge * self.q_last / self.c_last - got)
        q0 = self.q_last
        self.q_last = max(q0 - charge, 0.0)
        return (q0 * q0 - self.q_last * self.q_last) / (2.0 * self.c_last)

    def draw_energy(self, energy: float) -> float:
        if self.equalization == EQ_LOAD_FOLLOWING:
            got = self._lf_supply(energy)
            return got + self._draw_last_energy(energy - got)
        return self._draw_last_energy(energy)

    def _draw_last_energy(self, energy: float) -> float:
        if energy <= 0:
            return 0.0
        q0 = self.q_last
        v2 = max((q0 / self.c_last) ** 2 - 2.0 * energy / self.c_last, 0.0)
        self.q_last = math.sqrt(v2) * self.c_last
        return (q0 * q0 - self.q_last * self.q_last) / (2.0 * self.c_last)

    def leak(self, dt: float, model: str) -> float:
        self.q_last, lost = leak_step(self.last_spec, self.q_last, dt, model)
        for i, spec in enumerate(self.specs):
            self.q[i], l_i = leak_step(spec, self.q[i], dt, model)
            lost += self.n[i] * l_i
        return lost

    def poll(self, signal: Signal) -> tuple[Action, float]:
        self.state, action = controller_step(self.state, signal)
        target = action_target_mode(action)
        if target is not None:
            # lossless rewiring: per-capacitor charge is untouched
            self.mode[action.bank] = target
        return action, 0.0

    def gate_off(self) -> None:
        # normally-open bank switches drop out with the MCU; charge stays put
        self.mode = [BankMode.DISCONNECTED] * len(self.mode)
        self.state = ControllerState.reset(len(self.mode), self.poll_period)

    def quiescent(self) -> bool:
        return True

    def level(self) -> int:
        return capacitance_level(self.state)

    def required_level(self, energy: float, v_low: float) -> int:
        return required_level_for_energy(energy, self.c_last, list(zip(self.cu, self.n)), v_low)

    def gate(self, required: int) -> bool:
        decision, self.state = longevity_gate(self.state, required)
        return decision is Gate.PROCEED

    def modes_str(self) -> str:
        return "".join(m.value for m in self.mode)

    def bank_states(self) -> list:
        out = []
        for i, m in enumerate(self.mode):
            out.append({
                "mode": m.value,
                "count": self.n[i],
                "unit_capacitance": self.cu[i],
                "cap_voltage": self.q[i] / self.cu[i],
            })
        return out


class _MorphyModel:
    polls_when_off = True  # the array controller has its own supply
    direct_only_after_action = False

    def __init__(self, cfg: MorphyBufferConfig, leakage: bool):
        fix = (lambda s: s) if leakage else CapacitorSpec.without_leakage
        self.spec = fix(cfg.unit_spec)
        self.c = self.spec.capacitance
        self.task_spec = fix(cfg.task_spec) if cfg.task_spec is not None else None
        self.c_t = self.task_spec.capacitance if self.task_spec is not None else 0.0
        self.ladder = cfg.ladder
        self.index = 0
        self.floor = 0
        self.poll_period = cfg.poll_period
        self.duty_penalty = 0.0
        self.hardware_power = 0.0
        self.q = [0.0] * cfg.count
        self.q_t = 0.0
        self._set_partition(self.ladder[0])
        if cfg.initial_voltage:
            v = cfg.initial_voltage
            for idx, _ in self.chains:
                for i in idx:
                    self.q[i] = v * self.c / len(idx)
            self.q_t = v * self.c_t

    def _set_partition(self, part: tuple[int, ...]) -> None:
        self.partition = part
        chains, start = [], 0
        for n in part:
            chains.append((tuple(range(start, start + n)), self.c / n))
            start += n
        self.chains = chains
        self.c_total = morphy_equivalent_capacitance(part, self.c) + self.c_t

    def _network(self) -> MorphyNetwork:
        task = None
        if self.task_spec is not None:
            task = SimpleBuffer(self.task_spec, max(self.q_t, 0.0))
        return MorphyNetwork(self.spec, self.partition, tuple(self.q), task)

    def v_last(self) -> float:
        num = self.q_t
        for idx, ceq in self.chains:
            num += ceq * sum(self.q[i] for i in idx) / self.c
        return num / self.c_total

    def stored(self) -> float:
        e = sum(q * q for q in self.q) / (2.0 * self.c)
        if self.c_t:
            e += self.q_t * self.q_t / (2.0 * self.c_t)
        return e

    def _shift(self, dv: float) -> None:
        for idx, ceq in self.chains:
            dq = ceq * dv
            for i in idx:
                self.q[i] += dq
        self.q_t += self.c_t * dv

    def inject(self, energy: float, v_clip: float, direct_only: bool) -> float:
        v = self.v_last()
        room = 0.5 * self.c_total * (v_clip * v_clip - v * v)
        if room <= 0:
            return 0.0
        if energy >= room:
            self._shift(v_clip - v)
            return room
        self._shift(math.sqrt(v * v + 2.0 * energy / self.c_total) - v)
        return energy

    def settle(self) -> float:
        return 0.0

    def draw_charge(self, charge: float) -> float:
        before = self.stored()
        self._shift(-min(charge / self.c_total, max(self.v_last(), 0.0)))
        return before - self.stored()

    def draw_energy(self, energy: float) -> float:
        v = self.v_last()
        v_new = math.sqrt(max(v * v - 2.0 * energy / self.c_total, 0.0))
        before = self.stored()
        self._shift(v_new - v)
        return before - self.stored()

    def leak(self, dt: float, model: str) -> float:
        lost = 0.0
        for i, q in enumerate(self.q):
            self.q[i], l_i = leak_step(self.spec, q, dt, model)
            lost += l_i
        if self.task_spec is not None:
            self.q_t, l_t = leak_step(self.task_spec, self.q_t, dt, model)
            lost += l_t
        return lost

    def rebalance(self) -> float:
        """Re-equalize chains whose voltages drifted apart (uneven leakage)."""
        caps = [ceq for _, ceq in self.chains]
        volts = [sum(self.q[i] for i in idx) / self.c for idx, _ in self.chains]
        if self.c_t:
            caps.append(self.c_t)
            volts.append(self.q_t / self.c_t)
        v_hi, v_lo = max(volts), min(volts)
        if v_hi - v_lo <= 1e-9 * max(abs(v_hi), abs(v_lo)):
            return 0.0
        v_f = sum(c * v for c, v in zip(caps, volts)) / self.c_total
        for (idx, ceq), v in zip(self.chains, volts):
            dq = ceq * (v_f - v)
            for i in idx:
                self.q[i] += dq
        if self.c_t:
            self.q_t = v_f * self.c_t
        return 0.5 * sum(c * (v - v_f) ** 2 for c, v in zip(caps, volts))

    def poll(self, signal: Signal) -> tuple[Action, float]:
        new = morphy_controller_step(self.index, signal, len(self.ladder))
        if signal is Signal.UNDER and new < self.floor:
            new = self.index
        if new == self.index:
            return NO_ACTION, 0.0
        net, lost = morphy_reconfigure(self._network(), self.ladder[new])
        self.q = list(net.per_cap_charges)
        if net.task_cap is not None:
            self.q_t = net.task_cap.charge
        kind = ActionKind.LADDER_UP if new > self.index else ActionKind.LADDER_DOWN
        self.index = new
        self._set_partition(self.ladder[new])
        return Action(kind, new), lost

    def gate_off(self) -> None:
        self.floor = 0

    def quiescent(self) -> bool:
        return self.index == 0

    def level(self) -> int:
        return self.index

    def required_level(self, energy: float, v_low: float) -> int:
        for k, part in enumerate(self.ladder):
            c = morphy_equivalent_capacitance(part, self.c) + self.c_t
            if 0.5 * c * v_low * v_low >= energy:
                return k
        return len(self.ladder) - 1

    def gate(self, required: int) -> bool:
        if self.index >= required:
            self.floor = 0
            return True
        self.floor = required
        return False

    def modes_str(self) -> str:
        return "+".join(str(n) for n in self.partition)

    def bank_states(self) -> list:
        return [{
            "ladder_index": self.index,
            "partition": list(self.partition),
            "cap_voltages": [q / self.c for q in self.q],
            "task_voltage": self.q_t / self.c_t if self.c_t else None,
        }]


def _build_model(config: SimConfig):
    b = config.buffer
    if isinstance(b, StaticBufferConfig):
        return _StaticModel(b, config.leakage)
    if isinstance(b, ReactBufferConfig):
        return _ReactModel(b, config.thresholds, config.leakage)
    if isinstance(b, MorphyBufferConfig):
        return _MorphyModel(b, config.leakage)
    raise TypeError(f"unknown buffer config {type(b).__name__}")


# -- simulation --------------------------------------------------------------

def simulate(config: SimConfig, recorder: Optional[WaveformRecorder] = None) -> Report:
    th = config.thresholds
    dt = config.dt
    model = _build_model(config)
    trace = config.trace
    wspec = config.workload
    v_clip = min(th.v_max, config.harvester.max_output_voltage)

    tx_level = wspec.required_level
    if tx_level is None:
        tx_level = model.required_level(wspec.transmit_energy(th.v_high), th.v_low)
    rx_level = wspec.receive_level
    if rx_level is None:
        rx_level = model.required_level(wspec.receive_energy(th.v_high), th.v_low)
    work = Workload(wspec, dt, duty_penalty=model.duty_penalty,
                    tx_level=tx_level, rx_level=rx_level)

    n_trace = int(math.ceil(trace.duration / dt - 1e-9))
    n_drain = int(math.ceil(config.max_drain_time / dt - 1e-9)) if config.drain_after_trace else 0
    n_max = n_trace + n_drain
    events = event_steps(deadline_schedule(wspec, n_max * dt), dt) if wspec.kind in ("SC", "PF") else {}
    poll_steps = None
    if model.poll_period is not None:
        poll_steps = max(1, round(model.poll_period / dt))

    ledger = EnergyLedger()
    stored_before = model.stored()
    ledger.initial_stored = stored_before

    # per-step raw power via a moving pointer into the trace
    times, powers = trace.times, trace.powers
    seg = 0
    n_seg = len(times)

    gate_on = False
    first_on: Optional[float] = None
    on_steps = 0
    cycles: list[float] = []
    on_since = 0.0
    peak = model.v_last()
    direct_only = False
    action_counts: dict[str, int] = {}
    hw_power = model.hardware_power
    leak_model = config.leakage_model
    decim = recorder.decimation if recorder is not None else 0
    truncated = False
    k = 0

    for k in range(n_max):
        t = k * dt
        # (1) harvest
        if k < n_trace:
            while seg + 1 < n_seg and times[seg + 1] <= t + 1e-12:
                seg += 1
            p_in = converter_output(config.harvester, powers[seg])
        else:
            p_in = 0.0
        v_before = model.v_last()
        if p_in > 0.0:
            e_in = p_in * dt
            absorbed = model.inject(e_in, v_clip, direct_only)
            ledger.harvested += e_in
            ledger.clipped += e_in - absorbed
        direct_only = False

        # (2) output diodes
        ledger.dissipated_switching += model.settle()

        # (3) power gate with hysteresis
        v = model.v_last()
        if not gate_on and v >= th.v_enable:
            gate_on = True
            on_since = t + dt
            if first_on is None:
                first_on = _crossing_time(t, dt, v_before, v, th.v_enable)
        elif gate_on and v < th.v_min:
            gate_on = False
            cycles.append(t + dt - on_since)
            model.gate_off()

        # (4) workload
        current = work.step(gate_on, v, events.get(k, 0), model.gate)
        if current > 0.0:
            ledger.delivered_to_load += model.draw_charge(current * dt)

        # (5) controller poll
        if poll_steps is not None and (k + 1) % poll_steps == 0 and (gate_on or model.polls_when_off):
            action, lost = model.poll(comparator_signal(model.v_last(), th))
            ledger.dissipated_switching += lost
            if action.kind is not ActionKind.NONE:
                label = action.kind.value
                action_counts[label] = action_counts.get(label, 0) + 1
                direct_only = model.direct_only_after_action
                if recorder is not None:
                    recorder.actions.append((t + dt, str(action)))

        # (6) leakage
        if config.leakage:
            ledger.leaked += model.leak(dt, leak_model)
            if isinstance(model, _MorphyModel):
                ledger.dissipated_switching += model.rebalance()

        # (7) controller overhead
        if gate_on and hw_power > 0.0:
            ledger.controller_overhead += model.draw_energy(hw_power * dt)

        if gate_on:
            on_steps += 1
        v = model.v_last()
        if v > peak:
            peak = v
        if recorder is not None and (k + 1) % decim == 0:
            recorder.rows.append((t + dt, v, p_in, gate_on, model.level(), model.modes_str()))

        if k + 1 >= n_trace and config.drain_after_trace and not gate_on and model.quiescent():
            break
    else:
        truncated = config.drain_after_trace and gate_on

    steps = k + 1 if n_max else 0
    sim_time = steps * dt
    if gate_on:
        cycles.append(sim_time - on_since)

    stored_after = model.stored()
    ledger.residual_stored = stored_after
    residual = ledger_check(ledger, stored_before, stored_after)

    return Report(
        name=config.buffer.name,
        latency_to_first_on=first_on,
        on_time_fraction=on_steps / steps if steps else 0.0,
        mean_power_cycle_length=sum(cycles) / len(cycles) if cycles else 0.0,
        power_cycles=len(cycles),
        counters=work.counters,
        ledger=ledger,
        ledger_residual=residual,
        peak_v_last=peak,
        final_v_last=model.v_last(),
        simulated_time=sim_time,
        drain_truncated=truncated,
        action_counts=action_counts,
        final_bank_states=model.bank_states(),
    )


def _crossing_time(t: float, dt: float, v0: float, v1: float, v_th: float) -> float:
    # under constant power V^2 rises linearly within the step
    if v0 >= v_th or v1 <= v0:
        return t if v0 >= v_th else t + dt
    frac = (v_th * v_th - v0 * v0) / (v1 * v1 - v0 * v0)
    return t + min(max(frac, 0.0), 1.0) * dt


def run_comparison(configs: Sequence[SimConfig], max_workers: int = 1) -> list[Report]:
    """Simulate several buffers against one trace and workload."""
    configs = list(configs)
    if len(configs) < 2:
        raise ValueError("comparison requires at least 2 configs")
    ref = configs[0]
    for c in configs[1:]:
        if c.trace != ref.trace or c.workload != ref.workload:
            raise ValueError("all configs in a comparison must share trace and workload")
    if max_workers <= 1:
        return [simulate(c) for c in configs]
    with ProcessPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(simulate, configs))
