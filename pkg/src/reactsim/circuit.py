"""Capacitor, bank and switched-capacitor network physics.

Everything here is value-semantics: functions take frozen dataclasses or
plain floats and return new values, so they are safe to share between
simulations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Sequence

# Relative slack when checking per-capacitor voltage against its rating.
_RATING_SLACK = 1e-9


class BankMode(Enum):
    DISCONNECTED = "D"
    SERIES = "S"
    PARALLEL = "P"


@dataclass(frozen=True)
class CapacitorSpec:
    capacitance: float  # F
    rated_voltage: float  # V
    leakage_current_at_rated: float = 0.0  # A

    def __post_init__(self):
        if not self.capacitance > 0:
            raise ValueError(f"capacitance must be > 0, got {self.capacitance}")
        if not self.rated_voltage > 0:
            raise ValueError(f"rated_voltage must be > 0, got {self.rated_voltage}")
        if self.leakage_current_at_rated < 0:
            raise ValueError("leakage_current_at_rated must be >= 0")

    def without_leakage(self) -> "CapacitorSpec":
        return replace(self, leakage_current_at_rated=0.0)


def _check_rating(spec: CapacitorSpec, charge: float) -> None:
    if charge < 0:
        raise ValueError(f"charge must be >= 0, got {charge}")
    v = charge / spec.capacitance
    if v > spec.rated_voltage * (1 + _RATING_SLACK):
        raise ValueError(
            f"capacitor voltage {v:.4g} V exceeds rating {spec.rated_voltage} V")


@dataclass(frozen=True)
class SimpleBuffer:
    """A single capacitor, e.g. the last-level buffer or a static buffer."""
    spec: CapacitorSpec
    charge: float = 0.0  # C

    def __post_init__(self):
        _check_rating(self.spec, self.charge)

    @property
    def capacitance(self) -> float:
        return self.spec.capacitance

    @property
    def voltage(self) -> float:
        return self.charge / self.spec.capacitance

    @property
    def energy(self) -> float:
        return self.charge * self.charge / (2.0 * self.spec.capacitance)

    @classmethod
    def at_voltage(cls, spec: CapacitorSpec, voltage: float) -> "SimpleBuffer":
        return cls(spec, voltage * spec.capacitance)


@dataclass(frozen=True)
class Bank:
    """N identical capacitors switched together as full-series or full-parallel.

    Both configurations force every capacitor to carry the same charge, so
    one scalar per bank describes the whole charge state.
    """
    spec: CapacitorSpec
    count: int
    mode: BankMode = BankMode.DISCONNECTED
    charge_per_cap: float = 0.0  # C

    def __post_init__(self):
        if self.count < 1:
            raise ValueError(f"bank count must be >= 1, got {self.count}")
        _check_rating(self.spec, self.charge_per_cap)

    @property
    def capacitance(self) -> float:
        return bank_equivalent_capacitance(self)

    @property
    def output_voltage(self) -> Optional[float]:
        return bank_output_voltage(self)

    @property
    def energy(self) -> float:
        return bank_energy(self)

    @property
    def cap_voltage(self) -> float:
        return self.charge_per_cap / self.spec.capacitance


def bank_equivalent_capacitance(bank: Bank) -> float:
    if bank.mode is BankMode.SERIES:
        return bank.spec.capacitance / bank.count
    if bank.mode is BankMode.PARALLEL:
        return bank.count * bank.spec.capacitance
    return 0.0


def bank_output_voltage(bank: Bank) -> Optional[float]:
    """Voltage presented at the bank terminals, or None when disconnected."""
    v_cap = bank.charge_per_cap / bank.spec.capacitance
    if bank.mode is BankMode.PARALLEL:
        return v_cap
    if bank.mode is BankMode.SERIES:
        return bank.count * v_cap
    return None


def bank_energy(bank: Bank) -> float:
    # Mode independent: each capacitor holds q^2 / 2C regardless of wiring.
    q = bank.charge_per_cap
    return bank.count * q * q / (2.0 * bank.spec.capacitance)


def set_bank_mode(bank: Bank, new_mode: BankMode) -> Bank:
    """Rewire a bank. Isolated banks exchange no charge, so this is lossless."""
    if new_mode is bank.mode:
        return bank
    return replace(bank, mode=new_mode)


def bank_discharge(bank: Bank, charge: float, v_floor: float = 0.0) -> tuple[Bank, float]:
    """Pull ``charge`` coulombs out of the bank terminals.

    The draw is clamped so the terminal voltage never drops below
    ``v_floor``. Returns the new bank and the energy delivered.
    """
    if bank.mode is BankMode.DISCONNECTED:
        raise ValueError("cannot discharge a disconnected bank")
    if charge < 0:
        raise ValueError("charge must be >= 0")
    c = bank.spec.capacitance
    if bank.mode is BankMode.SERIES:
        # the same current flows through every capacitor in the string
        per_cap = charge
        floor_q = v_floor * c / bank.count
    else:
        per_cap = charge / bank.count
        floor_q = v_floor * c
    q_new = max(bank.charge_per_cap - per_cap, min(floor_q, bank.charge_per_cap))
    new_bank = replace(bank, charge_per_cap=q_new)
    return new_bank, bank_energy(bank) - bank_energy(new_bank)


def equalize(source_capacitance: float, source_voltage: float,
             sink_capacitance: float, sink_voltage: float,
             forward_drop: float = 0.0) -> tuple[float, float]:
    """Merge two capacitors through an ideal diode pointing source -> sink.

    Returns ``(final_voltage, dissipated)`` where ``final_voltage`` is the
    sink-side voltage after charge stops flowing. With a nonzero
    ``forward_drop`` the source settles ``forward_drop`` volts above the
    sink. When the diode blocks, nothing moves and no energy is lost.
    """
    if source_capacitance <= 0 or sink_capacitance <= 0:
        raise ValueError("capacitances must be > 0")
    if forward_drop < 0:
        raise ValueError("forward_drop must be >= 0")
    gap = source_voltage - sink_voltage - forward_drop
    if gap <= 0:
        return sink_voltage, 0.0
    cs, ct = source_capacitance, sink_capacitance
    if forward_drop == 0.0:
        v_final = (cs * source_voltage + ct * sink_voltage) / (cs + ct)
        dissipated = 0.5 * (cs * ct / (cs + ct)) * gap * gap
        return v_final, dissipated
    moved = gap * cs * ct / (cs + ct)
    v_sink = sink_voltage + moved / ct
    v_src = source_voltage - moved / cs
    before = 0.5 * cs * source_voltage ** 2 + 0.5 * ct * sink_voltage ** 2
    after = 0.5 * cs * v_src ** 2 + 0.5 * ct * v_sink ** 2
    return v_sink, max(before - after, 0.0)


def reclaim_voltage(count: int, unit_capacitance: float, last_capacitance: float,
                    v_low: float) -> float:
    """Last-level voltage after a parallel bank at ``v_low`` flips to series."""
    c_series = unit_capacitance / count
    total = last_capacitance + c_series
    return (count * v_low) * c_series / total + v_low * last_capacitance / total


def max_unit_capacitance(count: int, last_capacitance: float,
                         v_high: float, v_low: float) -> float:
    """Largest per-capacitor size whose reclamation spike stays under v_high.

    Returns ``math.inf`` when a parallel->series flip at ``v_low`` cannot
    exceed ``v_high`` at all.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if not v_high > v_low > 0:
        raise ValueError("need v_high > v_low > 0")
    denom = count * v_low - v_high
    if denom <= 0:
        return math.inf
    return count * last_capacitance * (v_high - v_low) / denom


# -- fully interconnected (Morphy-style) arrays -----------------------------

def validate_partition(partition: Sequence[int], count: int) -> tuple[int, ...]:
    part = tuple(int(n) for n in partition)
    if not part:
        raise ValueError("partition must be non-empty")
    if any(n < 1 for n in part):
        raise ValueError(f"partition entries must be >= 1: {part}")
    if sum(part) != count:
        raise ValueError(f"partition {part} does not sum to {count}")
    return part


def morphy_equivalent_capacitance(partition: Sequence[int], unit_capacitance: float) -> float:
    """Series chains of equal capacitors, all chains in parallel."""
    if not partition or any(n < 1 for n in partition):
        raise ValueError(f"invalid partition {partition!r}")
    return sum(unit_capacitance / n for n in partition)


@dataclass(frozen=True)
class MorphyNetwork:
    """Equal capacitors grouped into series chains that share one output rail.

    ``per_cap_charges`` is ordered; chain k of the partition takes the next
    ``partition[k]`` capacitors in that order.
    """
    unit_spec: CapacitorSpec
    partition: tuple[int, ...]
    per_cap_charges: tuple[float, ...]
    task_cap: Optional[SimpleBuffer] = None

    def __post_init__(self):
        object.__setattr__(self, "partition",
                           validate_partition(self.partition, len(self.per_cap_charges)))
        object.__setattr__(self, "per_cap_charges", tuple(float(q) for q in self.per_cap_charges))
        # regrouping can leave a capacitor reverse-charged inside a series chain
        for q in self.per_cap_charges:
            _check_rating(self.unit_spec, abs(q))

    @classmethod
    def empty(cls, unit_spec: CapacitorSpec, partition: Sequence[int],
              task_cap: Optional[CapacitorSpec] = None, count: int = 7) -> "MorphyNetwork":
        task = SimpleBuffer(task_cap) if task_cap is not None else None
        return cls(unit_spec, tuple(partition), (0.0,) * count, task)

    @property
    def reconfigurable_count(self) -> int:
        return len(self.per_cap_charges)

    def chains(self) -> list[tuple[int, ...]]:
        out, start = [], 0
        for n in self.partition:
            out.append(tuple(range(start, start + n)))
            start += n
        return out

    def chain_voltages(self) -> list[float]:
        c = self.unit_spec.capacitance
        return [sum(self.per_cap_charges[i] for i in idx) / c for idx in self.chains()]

    @property
    def capacitance(self) -> float:
        total = morphy_equivalent_capacitance(self.partition, self.unit_spec.capacitance)
        if self.task_cap is not None:
            total += self.task_cap.capacitance
        return total

    @property
    def output_voltage(self) -> float:
        """Charge-weighted rail voltage; exact once chains are equalized."""
        c = self.unit_spec.capacitance
        num = sum((c / n) * v for n, v in zip(self.partition, self.chain_voltages()))
        if self.task_cap is not None:
            num += self.task_cap.charge
        return num / self.capacitance

    @property
    def energy(self) -> float:
        c = self.unit_spec.capacitance
        e = sum(q * q for q in self.per_cap_charges) / (2.0 * c)
        if self.task_cap is not None:
            e += self.task_cap.energy
        return e


def morphy_reconfigure(network: MorphyNetwork,
                       new_partition: Sequence[int]) -> tuple[MorphyNetwork, float]:
    """Regroup the array and let the chains (and task capacitor) equalize.

    Each capacitor keeps its charge through the regrouping; afterwards the
    parallel chains share charge until they sit at one rail voltage. Every
    capacitor in a chain shifts by the same charge, so a weakly charged one
    may end up reverse-charged. The energy lost in the switches is returned
    alongside the new network.
    """
    part = validate_partition(new_partition, network.reconfigurable_count)
    c = network.unit_spec.capacitance
    regrouped = replace(network, partition=part)
    chains = regrouped.chains()
    caps = [c / n for n in part]
    volts = regrouped.chain_voltages()
    if network.task_cap is not None:
        caps.append(network.task_cap.capacitance)
        volts.append(network.task_cap.voltage)
    c_total = sum(caps)
    v_final = sum(ci * vi for ci, vi in zip(caps, volts)) / c_total
    # same as energy before minus after, without the cancellation
    dissipated = 0.5 * sum(ci * (vi - v_final) ** 2 for ci, vi in zip(caps, volts))

    charges = list(network.per_cap_charges)
    for idx, cj, vj in zip(chains, caps, volts):
        dq = cj * (v_final - vj)
        for i in idx:
            charges[i] += dq
    task = network.task_cap
    if task is not None:
        task = replace(task, charge=max(task.capacitance * v_final, 0.0))
    out = MorphyNetwork(network.unit_spec, part, tuple(charges), task)
    return out, max(dissipated, 0.0)


# -- leakage -----------------------------------------------------------------

LEAK_LINEAR = "linear"
LEAK_CONSTANT = "constant"


def leak_step(spec: CapacitorSpec, charge: float, dt: float,
              model: str = LEAK_LINEAR) -> tuple[float, float]:
    """Self-discharge of one capacitor over ``dt``.

    ``linear`` scales the rated leakage current by V / V_rated; ``constant``
    applies the rated current whenever the capacitor holds charge. Returns
    the new charge and the stored energy lost.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    if charge <= 0 or spec.leakage_current_at_rated == 0:
        return charge, 0.0
    c = spec.capacitance
    if model == LEAK_LINEAR:
        dq = spec.leakage_current_at_rated * (charge / c / spec.rated_voltage) * dt
    elif model == LEAK_CONSTANT:
        dq = spec.leakage_current_at_rated * dt
    else:
        raise ValueError(f"unknown leakage model {model!r}")
    q_new = max(charge - dq, 0.0)
    return q_new, (charge * charge - q_new * q_new) / (2.0 * c)


# -- accounting --------------------------------------------------------------

@dataclass
class EnergyLedger:
    """Where every joule that entered the system went (all fields joules)."""
    harvested: float = 0.0
    delivered_to_load: float = 0.0
    leaked: float = 0.0
    clipped: float = 0.0
    dissipated_switching: float = 0.0
    controller_overhead: float = 0.0
    residual_stored: float = 0.0
    initial_stored: float = field(default=0.0)

    def outflow(self) -> float:
        return (self.delivered_to_load + self.leaked + self.clipped
                + self.dissipated_switching + self.controller_overhead)

    def to_dict(self) -> dict:
        return {
            "harvested": self.harvested,
            "delivered_to_load": self.delivered_to_load,
            "leaked": self.leaked,
            "clipped": self.clipped,
            "dissipated_switching": self.dissipated_switching,
            "controller_overhead": self.controller_overhead,
            "residual_stored": self.residual_stored,
            "initial_stored": self.initial_stored,
        }
