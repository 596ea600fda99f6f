"""Closed-form reference values the simulator must reproduce."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from .circuit import (
    Bank, BankMode, CapacitorSpec, MorphyNetwork, bank_discharge, bank_energy,
    bank_output_voltage, equalize, leak_step, max_unit_capacitance,
    morphy_equivalent_capacitance, morphy_reconfigure, reclaim_voltage, set_bank_mode,
)
from .controller import ControllerState, Signal, Thresholds, comparator_signal, controller_step
from .harvester import HarvesterModel, converter_output


@dataclass
class Check:
    name: str
    expected: float
    got: float
    tol: float  # absolute unless rel
    rel: bool = False

    @property
    def ok(self) -> bool:
        if math.isinf(self.expected) or math.isinf(self.got):
            return self.expected == self.got
        err = abs(self.got - self.expected)
        if self.rel:
            err /= abs(self.expected)
        return err <= self.tol

    def line(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        return f"{status}  {self.name}: expected {self.expected:.6g}, got {self.got:.6g}"


def _morphy_fraction(count: int, old: tuple, new: tuple, per_cap_v: float):
    spec = CapacitorSpec(1e-3, 100.0)
    net = MorphyNetwork(spec, old, (per_cap_v * spec.capacitance,) * count)
    out, lost = morphy_reconfigure(net, new)
    return out.output_voltage, lost / net.energy


def _golden_sequence() -> bool:
    st = ControllerState.reset(2)
    script = [Signal.OVER] * 4 + [Signal.OK] + [Signal.UNDER] * 4
    got = []
    for sig in script:
        st, a = controller_step(st, sig)
        got.append(str(a))
    return got == ["ConnectSeries(0)", "ToParallel(0)", "ConnectSeries(1)", "ToParallel(1)",
                   "None", "ToSeries(1)", "Disconnect(1)", "ToSeries(0)", "Disconnect(0)"]


def _reclamation_ratio(n: int) -> float:
    spec = CapacitorSpec(220e-6, 6.3)
    v_low = 1.9
    bank = Bank(spec, n, BankMode.PARALLEL, 3.5 * spec.capacitance)
    while bank.output_voltage > v_low:
        bank, _ = bank_discharge(bank, 1.5e-3 * 1e-3, v_floor=v_low)
    stranded = bank_energy(bank)
    bank = set_bank_mode(bank, BankMode.SERIES)
    while bank.output_voltage > v_low:
        bank, _ = bank_discharge(bank, 1.5e-3 * 1e-3, v_floor=v_low)
    return bank_energy(bank) / stranded


def checks() -> list[Check]:
    v = 1.0
    out = []
    v4, f4 = _morphy_fraction(4, (4,), (3, 1), v / 4)
    out.append(Check("morphy 4-cap (4)->(3,1) output voltage / V", 3 / 8, v4, 1e-9, rel=True))
    out.append(Check("morphy 4-cap (4)->(3,1) dissipated fraction", 0.25, f4, 1e-9, rel=True))
    _, f8 = _morphy_fraction(8, (1,) * 8, (7, 1), v)
    out.append(Check("morphy 8-cap (1x8)->(7,1) dissipated fraction", 0.5625, f8, 1e-9, rel=True))
    out.append(Check("morphy full series C_eq / C", 0.25,
                     morphy_equivalent_capacitance((4,), 1.0), 1e-12))
    out.append(Check("morphy full parallel C_eq / C", 4.0,
                     morphy_equivalent_capacitance((1, 1, 1, 1), 1.0), 1e-12))
    out.append(Check("morphy (3,1) C_eq / C", 4 / 3,
                     morphy_equivalent_capacitance((3, 1), 1.0), 1e-12))

    spec = CapacitorSpec(220e-6, 6.3)
    par = Bank(spec, 3, BankMode.PARALLEL, 418e-6)
    ser = set_bank_mode(par, BankMode.SERIES)
    out.append(Check("parallel->series keeps energy (J)", bank_energy(par), bank_energy(ser),
                     1e-12, rel=True))
    out.append(Check("parallel->series boosts 1.9 V to N x 1.9 V", 5.7, bank_output_voltage(ser), 1e-9))
    out.append(Check("reclamation residual ratio, N=3", 1 / 9, _reclamation_ratio(3), 1e-6, rel=True))

    v_new, _ = equalize(220e-6 / 3, 3 * 1.9, 770e-6, 1.9)
    out.append(Check("post-reclamation last-level voltage (V)", 2.2305, v_new, 1e-3))
    out.append(Check("closed-form reclamation voltage (V)", 2.2305,
                     reclaim_voltage(3, 220e-6, 770e-6, 1.9), 1e-3))
    out.append(Check("unit-capacitance limit N=3 (uF)", 1680.0,
                     max_unit_capacitance(3, 770e-6, 3.5, 1.9) * 1e6, 1.0))
    out.append(Check("unit-capacitance limit N=2 (uF)", 8213.3,
                     max_unit_capacitance(2, 770e-6, 3.5, 1.9) * 1e6, 1.0))
    out.append(Check("unit-capacitance limit N=1 (unconstrained)", math.inf,
                     max_unit_capacitance(1, 770e-6, 3.5, 1.9), 0.0))

    leak_spec = CapacitorSpec(220e-6, 6.3, 28e-6)
    q0 = 6.3 * 220e-6
    q1, _ = leak_step(leak_spec, q0, 1.0)
    out.append(Check("leakage at rated voltage over 1 s (uC)", 28.0, (q0 - q1) * 1e6, 1e-9))
    out.append(Check("22% panel, 10 mW raw (mW)", 2.2,
                     converter_output(HarvesterModel(0.22), 10e-3) * 1e3, 1e-12))
    th = Thresholds()
    out.append(Check("3.55 V reads as overvoltage", 1.0,
                     float(comparator_signal(3.55, th) is Signal.OVER), 0.0))
    out.append(Check("controller golden step sequence", 1.0, float(_golden_sequence()), 0.0))
    return out


def run(echo: Callable[[str], None] = print) -> bool:
    results = checks()
    for c in results:
        echo(c.line())
    n_ok = sum(c.ok for c in results)
    echo(f"{n_ok}/{len(results)} checks passed")
    return n_ok == len(results)
