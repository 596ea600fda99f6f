import dataclasses
import logging

import pytest
from hypothesis import given, settings, strategies as st

from reactsim.circuit import BankMode, CapacitorSpec, EnergyLedger
from reactsim.config import ceramic, reference_morphy, reference_react, reference_static
from reactsim.controller import ZERO_COSTS, Thresholds
from reactsim.engine import (
    LedgerError, MorphyBufferConfig, ReactBufferConfig, SimConfig, StaticBufferConfig,
    WaveformRecorder, ledger_check, run_comparison, simulate,
)
from reactsim.harvester import HarvesterModel, synth_trace
from reactsim.workload import WorkloadSpec

IDEAL = HarvesterModel(efficiency=1.0)
TH = Thresholds()


def static(c, **kw):
    return StaticBufferConfig(CapacitorSpec(c, 6.3), **kw)


def const(power, duration):
    return synth_trace("constant", dict(power=power, duration=duration))


def cfg(buffer, trace, **kw):
    kw.setdefault("harvester", IDEAL)
    return SimConfig(buffer=buffer, trace=trace, **kw)


# -- latency -----------------------------------------------------------------

def test_static_latency_closed_form():
    r = simulate(cfg(static(1e-3), const(5e-3, 3), leakage=False, drain_after_trace=False))
    assert r.latency_to_first_on == pytest.approx(0.5 * 1e-3 * 3.3 ** 2 / 5e-3, rel=1e-9)


@settings(max_examples=8, deadline=None)
@given(c=st.floats(2e-4, 3e-3))
def test_static_latency_linear_in_capacitance(c):
    run = lambda cap: simulate(cfg(static(cap), const(5e-3, 4), leakage=False,
                                   drain_after_trace=False)).latency_to_first_on
    assert run(c) / c == pytest.approx(run(1e-3) / 1e-3, rel=1e-9)


def test_zero_power_never_turns_on():
    for buf in (static(1e-3), reference_react(), reference_morphy()):
        r = simulate(cfg(buf, const(0.0, 5)))
        assert r.latency_to_first_on is None
        assert r.on_time_fraction == 0.0
        assert all(v == 0 for v in r.counters.to_dict().values())


def test_no_input_no_load_residual_is_exactly_zero():
    r = simulate(cfg(static(1e-3, initial_voltage=2.0), const(0.0, 2), leakage=False))
    assert r.ledger_residual == 0.0


def test_injection_is_energy_exact():
    r = simulate(cfg(static(10e-3), const(5e-3, 2), leakage=False, drain_after_trace=False))
    assert r.ledger.residual_stored == pytest.approx(10e-3, rel=1e-12)


# -- ledger ------------------------------------------------------------------

def test_ledger_check_catches_corruption():
    r = simulate(cfg(reference_react(), const(10e-3, 10)))
    ok = r.ledger
    ledger_check(ok, ok.initial_stored, ok.residual_stored)
    bad = dataclasses.replace(ok, leaked=ok.leaked + 1e-6)
    with pytest.raises(LedgerError, match="imbalance"):
        ledger_check(bad, bad.initial_stored, bad.residual_stored)


def test_ledger_check_tolerance_scale():
    lg = EnergyLedger(harvested=1.0, delivered_to_load=1.0 - 5e-10)
    assert abs(ledger_check(lg, 0.0, 0.0)) <= 1e-9
    lg = EnergyLedger(harvested=1.0, delivered_to_load=1.0 - 5e-9)
    with pytest.raises(LedgerError):
        ledger_check(lg, 0.0, 0.0)


@pytest.mark.parametrize("eq", ["instantaneous", "load_following"])
@pytest.mark.parametrize("drop", [0.0, 0.2])
def test_react_variants_balance(eq, drop):
    trace = synth_trace("two_phase", dict(p1=20e-3, t1=10, p2=0.0, t2=10))
    r = simulate(cfg(reference_react(equalization=eq, forward_drop=drop), trace,
                     harvester=HarvesterModel(0.8)))
    assert r.latency_to_first_on is not None
    assert r.action_counts.get("ToParallel", 0) >= 1


def test_load_following_dissipates_less():
    trace = synth_trace("two_phase", dict(p1=20e-3, t1=10, p2=0.0, t2=20))
    res = {eq: simulate(cfg(reference_react(equalization=eq), trace, leakage=False))
           for eq in ("instantaneous", "load_following")}
    assert (res["load_following"].ledger.dissipated_switching
            < res["instantaneous"].ledger.dissipated_switching)


def test_constant_leakage_model_runs():
    r = simulate(cfg(reference_react(), const(10e-3, 5), leakage_model="constant"))
    assert r.ledger.leaked > 0


# -- gate and clipping -------------------------------------------------------

def test_gate_hysteresis():
    trace = synth_trace("square", dict(high=8e-3, low=0.0, period=6.0, duration=30.0, duty=0.3))
    rec = WaveformRecorder()
    simulate(cfg(static(1e-3), trace, workload=WorkloadSpec("DE", active_current=3e-3)), rec)
    rows = rec.rows
    assert any(r[3] for r in rows) and not all(r[3] for r in rows)
    for prev, cur in zip(rows, rows[1:]):
        _, v, p_in, on, _, _ = cur
        if v >= TH.v_enable:
            assert on
        if prev[1] < TH.v_min and p_in == 0.0:
            assert not on


def test_clipping_requires_all_parallel():
    # moderate input: the last-level buffer climbs slower than the poll period
    rec = WaveformRecorder()
    r = simulate(cfg(reference_react(costs=ZERO_COSTS), const(2.5e-3, 120), leakage=False,
                     workload=WorkloadSpec("DE", active_current=0.1e-3),
                     drain_after_trace=False), rec)
    assert r.ledger.clipped > 0
    # rows are sampled after the load draw, so "at v_max" means within a couple of mV
    at_max = [row for row in rec.rows if row[1] >= TH.v_max - 2e-3]
    assert at_max and all(row[5] == "PPPPP" for row in at_max)


def test_no_clipping_before_full():
    r = simulate(cfg(reference_react(), const(10e-3, 5), harvester=HarvesterModel(0.8)))
    assert r.ledger.clipped == 0.0


def test_static_clips_at_v_max():
    r = simulate(cfg(static(1e-3), const(20e-3, 5), leakage=False, drain_after_trace=False))
    assert r.peak_v_last == pytest.approx(TH.v_max, abs=2e-3)
    assert r.ledger.clipped > 0


# -- reclamation -------------------------------------------------------------

def _full_react(**kw):
    init = tuple((BankMode.PARALLEL, 3.5) for _ in range(5))
    return reference_react(initial_voltage=3.5, initial_banks=init, **kw)


def _spikes(rec):
    """Upward V_last steps that directly follow a ToSeries action."""
    times = {round(t, 9) for t, a in rec.actions if a.startswith("ToSeries")}
    out = 0
    for prev, cur in zip(rec.rows, rec.rows[1:]):
        if round(prev[0], 9) in times and cur[1] > prev[1] + 1e-3:
            out += 1
    return out


def test_five_spikes_at_full_load_with_fast_polling():
    rec = WaveformRecorder()
    r = simulate(cfg(_full_react(poll_period=0.02), const(0.0, 1), leakage=False), rec)
    assert r.action_counts["ToSeries"] == 5
    assert _spikes(rec) == 5


def test_slow_polling_misses_small_bank_spikes():
    # at 1.5 mA the two smallest banks drain through v_low..v_min between polls
    rec = WaveformRecorder()
    simulate(cfg(_full_react(), const(0.0, 1), leakage=False), rec)
    assert _spikes(rec) < 5


def test_bank_over_limit_warns(caplog):
    big = ReactBufferConfig(last_level=ceramic(770e-6), banks=((ceramic(2000e-6), 3),))
    with caplog.at_level(logging.WARNING, logger="reactsim"):
        SimConfig(buffer=big, trace=const(1e-3, 1))
    assert "unit-capacitance limit" in caplog.text


def test_gate_off_disconnects_banks():
    r = simulate(cfg(_full_react(), const(0.0, 1)))
    assert all(b["mode"] == "D" for b in r.final_bank_states)
    assert r.final_v_last < TH.v_min


def test_polling_disabled_never_switches():
    r = simulate(cfg(reference_react(poll_period=None), const(10e-3, 10)))
    assert r.action_counts == {}


def test_longevity_gate_holds_transmissions():
    trace = const(4e-3, 30)
    gated = simulate(cfg(reference_react(costs=ZERO_COSTS), trace,
                         workload=WorkloadSpec("RT", required_level=6)))
    eager = simulate(cfg(reference_react(costs=ZERO_COSTS), trace,
                         workload=WorkloadSpec("RT", required_level=0)))
    assert gated.counters.failed <= eager.counters.failed


# -- interconnected array ----------------------------------------------------

def test_morphy_run_reconfigures_and_balances():
    trace = synth_trace("two_phase", dict(p1=20e-3, t1=15, p2=0.0, t2=15))
    r = simulate(cfg(reference_morphy(), trace, harvester=HarvesterModel(0.8)))
    assert r.action_counts["LadderUp"] >= 1
    assert r.ledger.dissipated_switching > 0


def test_morphy_validates_ladder():
    with pytest.raises(ValueError):
        MorphyBufferConfig(CapacitorSpec(1e-3, 6.3), count=7, ladder=((4, 4),))


# -- workloads through the engine --------------------------------------------

@pytest.mark.parametrize("kind", ["SC", "RT", "PF"])
def test_event_workloads_run(kind):
    wl = WorkloadSpec(kind, event_times=(2.0, 4.0, 6.0))
    r = simulate(cfg(reference_react(), const(10e-3, 12), workload=wl, harvester=HarvesterModel(0.8)))
    c = r.counters
    if kind == "SC":
        assert c.completed + c.missed_deadlines >= 2
    elif kind == "PF":
        assert c.received + c.missed_deadlines == 3
    else:
        assert c.transmitted >= 1


def test_drain_cap_sets_truncated_flag():
    buf = static(1.0, initial_voltage=3.5)
    r = simulate(cfg(buf, const(0.0, 1), leakage=False, max_drain_time=2.0))
    assert r.drain_truncated


# -- determinism and comparison ----------------------------------------------

def test_reports_are_deterministic():
    trace = synth_trace("random_walk", dict(duration=20, mean=8e-3, step_std=2e-3), seed=5)
    a = simulate(cfg(reference_react(), trace))
    b = simulate(cfg(reference_react(), trace))
    assert a.to_json() == b.to_json()


def test_run_comparison_rows_and_order():
    trace = synth_trace("two_phase", dict(p1=20e-3, t1=5, p2=0.0, t2=5))
    bufs = [reference_static("770uF"), reference_static("10mF"),
            static(17e-3, name="static_17mF"), reference_morphy(), reference_react()]
    configs = [cfg(b, trace) for b in bufs]
    serial = run_comparison(configs)
    assert [r.name for r in serial] == [b.name for b in bufs]
    parallel = run_comparison(configs, max_workers=2)
    assert [r.to_json() for r in parallel] == [r.to_json() for r in serial]
    twin = run_comparison([configs[0], configs[0]])
    assert twin[0].to_json() == twin[1].to_json()


def test_run_comparison_rejects_bad_input():
    trace = const(1e-3, 1)
    with pytest.raises(ValueError, match="at least 2"):
        run_comparison([cfg(static(1e-3), trace)])
    with pytest.raises(ValueError, match="share"):
        run_comparison([cfg(static(1e-3), trace), cfg(static(1e-3), const(2e-3, 1))])


def test_config_validation():
    with pytest.raises(ValueError):
        cfg(static(1e-3), const(1e-3, 1), dt=0)
    with pytest.raises(ValueError):
        ReactBufferConfig(last_level=ceramic(770e-6), banks=(), equalization="slow")
