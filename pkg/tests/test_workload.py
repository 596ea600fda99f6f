import math

import pytest
from hypothesis import given, settings, strategies as st

from reactsim.workload import (
    Workload, WorkloadSpec, deadline_schedule, event_steps, load_event_file, workload_step,
)

DT = 1e-3


def test_spec_defaults_per_kind():
    assert WorkloadSpec("SC").op_duration == 0.05 and WorkloadSpec("SC").op_current == 3e-3
    assert WorkloadSpec("RT").op_current == 10e-3
    assert WorkloadSpec("PF").receive_current == 5e-3
    with pytest.raises(ValueError):
        WorkloadSpec("XX")
    with pytest.raises(ValueError):
        WorkloadSpec(active_current=-1)


def test_de_energy_over_one_second():
    w = Workload(WorkloadSpec("DE"), DT)
    energy = sum(w.step(True, 2.5) * 2.5 * DT for _ in range(1000))
    assert energy == pytest.approx(3.75e-3, rel=1e-9)
    assert w.counters.completed == 100


def test_de_duty_penalty_reduces_work():
    w = Workload(WorkloadSpec("DE"), DT, duty_penalty=0.018)
    for _ in range(100_000):
        w.step(True, 3.0)
    assert w.counters.completed == 9820


@pytest.mark.parametrize("kind", ["DE", "SC", "RT", "PF"])
def test_unpowered_draws_nothing(kind):
    w = Workload(WorkloadSpec(kind), DT)
    for _ in range(100):
        assert w.step(False, 3.0, n_events=1) == 0.0


def test_rt_power_loss_mid_transmit_fails():
    w = Workload(WorkloadSpec("RT"), DT)
    for _ in range(100):  # half of the 200 ms transmit
        w.step(True, 3.0)
    _, delta = workload_step(w, False, 3.0)
    assert delta["failed"] == 1
    assert w.counters.completed == 0


def test_rt_completes_and_respects_gate():
    w = Workload(WorkloadSpec("RT"), DT, tx_level=3)
    for _ in range(500):
        w.step(True, 3.0, gate=lambda lvl: lvl <= 2)
    assert w.counters.transmitted == 0
    for _ in range(200):
        w.step(True, 3.0)
    assert w.counters.transmitted == 1 and w.counters.completed == 1


def test_resistance_load_scales_with_voltage():
    w = Workload(WorkloadSpec("DE", load_model="resistance"), DT)
    assert w.step(True, 1.65) == pytest.approx(0.75e-3)


def test_deadline_schedule():
    assert deadline_schedule(WorkloadSpec("SC", period=5), 12) == [5, 10]
    assert deadline_schedule(WorkloadSpec("PF", event_times=(3.2, 7.9)), 20) == [3.2, 7.9]
    assert deadline_schedule(WorkloadSpec("DE"), 20) == []


def test_event_file(tmp_path):
    f = tmp_path / "ev.txt"
    f.write_text("# arrivals\n7.9\n\n3.2\n")
    assert load_event_file(f) == (3.2, 7.9)
    f.write_text("1\nnope\n")
    with pytest.raises(ValueError, match=":2:"):
        load_event_file(f)


def test_event_steps():
    assert event_steps([0.0005, 0.0009, 0.002], DT) == {0: 2, 2: 1}


@settings(max_examples=60, deadline=None)
@given(outages=st.lists(st.tuples(st.floats(0, 30), st.floats(0.01, 3)), max_size=6),
       horizon=st.floats(5, 30))
def test_sc_deadlines_serviced_or_missed(outages, horizon):
    spec = WorkloadSpec("SC", period=5)
    w = Workload(spec, DT)
    events = event_steps(deadline_schedule(spec, horizon), DT)
    n_steps = int(math.ceil(horizon / DT)) + 200  # let the last burst finish
    for k in range(n_steps):
        t = k * DT
        powered = not any(a <= t < a + d for a, d in outages) and t < horizon + 0.1
        w.step(powered, 3.0, events.get(k, 0))
    c = w.counters
    assert c.completed + c.missed_deadlines == math.floor(horizon / 5 + 1e-9)


@settings(max_examples=60, deadline=None)
@given(kind=st.sampled_from(["RT", "PF"]),
       outages=st.lists(st.tuples(st.floats(0, 5), st.floats(0.001, 0.5)), max_size=6))
def test_atomic_ops_need_full_power(kind, outages):
    spec = WorkloadSpec(kind, event_times=(0.1, 1.0, 2.5))
    w = Workload(spec, DT)
    events = event_steps(spec.event_times, DT)
    powered_run = 0
    for k in range(6000):
        t = k * DT
        powered = not any(a <= t < a + d for a, d in outages)
        before = w.counters.completed
        w.step(powered, 3.0, events.get(k, 0))
        powered_run = powered_run + 1 if powered else 0
        if w.counters.completed > before:
            assert powered_run >= round(spec.op_duration / DT)


def test_pf_receive_then_transmit():
    spec = WorkloadSpec("PF", event_times=(0.0,))
    w = Workload(spec, DT)
    events = event_steps(spec.event_times, DT)
    for k in range(400):
        w.step(True, 3.0, events.get(k, 0))
    assert w.counters.received == 1 and w.counters.transmitted == 1


def test_pf_arrival_while_busy_is_missed():
    spec = WorkloadSpec("PF")
    w = Workload(spec, DT)
    w.step(True, 3.0, 1)
    w.step(True, 3.0, 1)
    assert w.counters.missed_deadlines == 1
