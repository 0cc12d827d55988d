import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ionlab import paulvm
from ionlab.pulsec import compile_source
from ionlab.pulsec.isa import Instruction, Program


def run(src, **kw):
    return paulvm.execute(compile_source(src.replace("\n", "\r\n")), **kw)


def test_pulse_edges_and_total():
    tl = run("ttl0 = 1\nwait 1us\nttl0 = 0\n")
    edges = [(e.cycle, e.change) for e in tl.on("ttl0")]
    assert edges == [(0, 1), (101, 0)]
    assert tl.total_cycles == 102
    assert tl.total_cycles == paulvm.predict_cycles(compile_source("ttl0 = 1\r\nwait 1us\r\nttl0 = 0"))


def test_loop_timing():
    # LOOP 1 + 3 * (TTL, WAIT 10, TTL, ENDLOOP) = 1 + 3 * 13
    tl = run("loop (3) {\n    ttl1 = 1\n    wait 10\n    ttl1 = 0\n}\n")
    assert tl.total_cycles == 40
    rises = [e.cycle for e in tl.on("ttl1") if e.change == 1]
    assert rises == [1, 14, 27]


def test_sub_call_timing():
    tl = run("sub s {\n    wait 5\n}\ns()\ns()\n")
    # CALL 1 + WAIT 5 + RET 1, twice
    assert tl.total_cycles == 14


def test_trigger_resumes_at_arrival():
    tl = run("wait trigger3\nttl0 = 1\n", trigger_trace=[(500, 3, 1)])
    assert tl.on("trigger3")[0].cycle == 500
    assert tl.on("ttl0")[0].cycle == 501


def test_trigger_any_input():
    tl = run("wait triggerX\nttl0 = 1\n", trigger_trace=[(70, 5, 1), (40, 2, 1)])
    assert tl.on("trigger2")[0].cycle == 40


def test_trigger_already_high():
    tl = run("wait 10\nwait trigger0\n", trigger_trace=[(3, 0, 1)])
    assert tl.on("trigger0")[0].cycle == 10


def test_deadlock_and_timeout():
    with pytest.raises(paulvm.DeadlockError):
        run("wait trigger0\n")
    with pytest.raises(paulvm.ExecutionTimeout):
        run("loop {\n    wait 1000\n}\n", timeout_cycles=10**6)


def test_unknown_opcode_faults():
    prog = Program((Instruction(0x3F),), 0).to_bytes()
    with pytest.raises(paulvm.VMFault):
        paulvm.execute(prog)


def test_dds_update_commits_registers():
    tl = run("dds1.profile0.frequency = 100\nwait 5\ndds1.update()\n")
    ev = tl.on("dds1")
    assert len(ev) == 1 and ev[0].cycle == 6
    assert ev[0].change[0] == pytest.approx(100, abs=1e-6)


def test_dds_jitter_is_sub_cycle():
    tl = run("dds1.update()\n", dds_jitter=True, seed=3)
    c = tl.on("dds1")[0].cycle
    assert 0 <= c < 1


def test_attenuator_span():
    assert paulvm.attenuator_output(1.0) == 1.0
    assert paulvm.attenuator_output(0.0) == pytest.approx(10 ** -2.6)
    with pytest.raises(ValueError):
        paulvm.attenuator_output(1.2)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 15), st.integers(0, 1), st.integers(0, 10**6)), max_size=20))
def test_predict_matches_execution(steps):
    src = "".join(f"ttl{i} = {v}\r\nwait {w}\r\n" for i, v, w in steps)
    b = compile_source(src)
    assert paulvm.execute(b).total_cycles == paulvm.predict_cycles(b)


def test_mapping_errors():
    with pytest.raises(paulvm.MappingError):
        paulvm.timeline_to_pulses(run("ttl12 = 1\n"), paulvm.ChannelMap())
    with pytest.raises(paulvm.MappingError):
        paulvm.timeline_to_pulses(run("dds0.frequency = 1\ndds0.update()\n"), paulvm.ChannelMap())
    # a broadcast update that leaves unused boards at zero is fine
    paulvm.timeline_to_pulses(run("dds1.frequency = 1\nddsX.update()\n"), paulvm.ChannelMap())
    with pytest.raises(paulvm.MappingError):
        paulvm.ChannelMap((paulvm.Beam("a", 0), paulvm.Beam("b", 0)))


def test_pulse_intervals():
    tl = run("dds1.frequency = 100\ndds1.update()\nttl4 = 1\nwait 50\n"
             "dds1.frequency = 101\ndds1.update()\nwait 50\nttl4 = 0\n")
    pulses = paulvm.timeline_to_pulses(tl, paulvm.ChannelMap())["B1"]
    assert [(p.start, p.end) for p in pulses] == [(2, 54), (54, 105)]
    assert pulses[0].frequency_mhz == pytest.approx(100, abs=1e-6)
    assert pulses[1].frequency_mhz == pytest.approx(101, abs=1e-6)


PI_PULSE = ("dds1.frequency = 100\ndds2.frequency = 100\nddsX.update()\n"
            "ttl4 = 1\nttl5 = 1\nwait {t}\nttl4 = 0\nttl5 = 0\nttl0 = 1\nwait 20us\nttl0 = 0\n")


def schedule(t):
    return paulvm.timeline_to_pulses(run(PI_PULSE.format(t=t)), paulvm.ChannelMap())


def test_pi_pulse_darkens_ion():
    res = paulvm.run_experiment(schedule(248), repetitions=500, rng_seed=1)
    assert res.p_bright_model < 0.01
    assert 1 - res.p_bright > 0.93


def test_half_pi_pulse_gives_half():
    res = paulvm.run_experiment(schedule(124), repetitions=10_000, rng_seed=2)
    assert abs(np.mean(res.state_bright) - 0.5) < 0.02


def test_bright_counts_and_determinism(tmp_path):
    sched = paulvm.timeline_to_pulses(run("ttl0 = 1\nwait 20us\nttl0 = 0\n"), paulvm.ChannelMap())
    a = paulvm.run_experiment(sched, repetitions=2000, rng_seed=5)
    b = paulvm.run_experiment(sched, repetitions=2000, rng_seed=5)
    assert np.array_equal(a.counts, b.counts)
    assert abs(a.counts.mean() - 4.2) < 0.5
    path = tmp_path / "r.csv"
    paulvm.write_results_csv(path, a)
    rows = list(csv.DictReader(open(path)))
    assert [int(r["counts"]) for r in rows] == a.counts.tolist()
    assert [bool(int(r["bright"])) for r in rows] == a.bright.tolist()


def test_detection_window_required():
    with pytest.raises(paulvm.InvalidScheduleError):
        paulvm.run_experiment({}, repetitions=10)


def test_sideband_order_from_difference_frequency():
    # B1 + R2 detuned by -2 MHz from resonance drives the red sideband
    src = ("dds1.frequency = 98\ndds3.frequency = 100\nddsX.update()\n"
           "ttl4 = 1\nttl6 = 1\nwait 10us\nttl4 = 0\nttl6 = 0\nttl0 = 1\nwait 20us\nttl0 = 0\n")
    sched = paulvm.timeline_to_pulses(run(src), paulvm.ChannelMap())
    ground = paulvm.PhysicsConfig(initial=paulvm.MotionalDistribution.point(0, 5))
    pop = paulvm.electronic_populations(sched, ground)
    assert pop[0].sum() == pytest.approx(1.0)  # no red sideband from n = 0
