import itertools
import random

import pytest

from modules.controller import (
    AlarmKind,
    GateCommand,
    GateFeedback,
    NoticeKind,
    SensorEvent,
    SensorId,
    Side,
    SignalState,
    new_controller,
    on_gate_feedback,
    on_sensor_event,
    system_occupied,
    tick,
)
from modules.protocol import Phase, TrainPacket
from modules.settings import InvalidConfig

A0 = SensorId(Side.A, 0)
B0 = SensorId(Side.B, 0)
A1 = SensorId(Side.A, 1)


def event(train, phase, sensor, time=0.0):
    return SensorEvent(TrainPacket(train, phase), sensor, time)


def feed(state, *events):
    for ev in events:
        state, _ = on_sensor_event(state, ev)
    return state


def assert_coupled(state):
    if system_occupied(state):
        assert state.gate_cmd is GateCommand.CLOSE
    if state.gate_cmd is GateCommand.CLOSE:
        assert state.street_signal is SignalState.RED
    if state.train_signal is SignalState.GREEN:
        assert state.gate_fb is GateFeedback.CLOSED
    if not system_occupied(state) and state.alarm is None:
        assert state.gate_cmd is GateCommand.OPEN
    assert state.audio_on == (state.gate_cmd is GateCommand.CLOSE)


def test_initial_state_is_quiescent():
    state = new_controller(8, 600)
    assert not system_occupied(state)
    assert state.gate_cmd is GateCommand.OPEN
    assert state.street_signal is SignalState.GREEN
    assert state.train_signal is SignalState.RED
    assert state.audio_on is False
    assert state.alarm is None


@pytest.mark.parametrize("m, timeout", [(0, 600), (8, 0), (8, -1)])
def test_new_controller_rejects_bad_config(m, timeout):
    with pytest.raises(InvalidConfig):
        new_controller(m, timeout)


def test_head_closes_gate_and_tail_at_far_side_reopens():
    state, output = on_sensor_event(new_controller(8, 600), event(7, Phase.HEAD, A0))
    assert state.memory.train_ids == {7}
    assert output.gate_cmd is GateCommand.CLOSE
    assert output.street_signal is SignalState.RED
    assert output.audio_on is True
    assert output.train_signal is SignalState.RED
    assert output.notices[0].kind is NoticeKind.ENTERED
    assert output.notices[0].direction.value == "AtoB"

    state, output = on_sensor_event(state, event(7, Phase.TAIL, B0, 30.0))
    assert not system_occupied(state)
    assert output.gate_cmd is GateCommand.OPEN
    assert output.street_signal is SignalState.GREEN
    assert output.notices[0].kind is NoticeKind.LEFT


def test_tail_at_entry_side_keeps_train():
    state = feed(new_controller(8, 600), event(7, Phase.HEAD, A0))
    state, output = on_sensor_event(state, event(7, Phase.TAIL, A0, 7.0))
    assert state.memory.train_ids == {7}
    assert state.gate_cmd is GateCommand.CLOSE
    assert output.notices[0].kind is NoticeKind.CLEARING


def test_second_train_on_other_track():
    state = feed(new_controller(8, 600), event(7, Phase.HEAD, A0), event(9, Phase.HEAD, A1, 1.0))
    assert state.memory.train_ids == {7, 9}
    state = feed(state, event(7, Phase.TAIL, B0, 20.0))
    assert state.memory.train_ids == {9}
    assert state.gate_cmd is GateCommand.CLOSE


def test_duplicate_head_is_idempotent():
    once = feed(new_controller(8, 600), event(7, Phase.HEAD, A0))
    twice = feed(once, event(7, Phase.HEAD, A0))
    assert twice == once


def test_unknown_tail_is_reported_and_ignored():
    start = new_controller(8, 600)
    state, output = on_sensor_event(start, event(5, Phase.TAIL, B0))
    assert state == start
    assert output.notices[0].kind is NoticeKind.UNKNOWN_TAIL


def test_capacity_boundary_and_overflow():
    state = feed(new_controller(1, 600), event(7, Phase.HEAD, A0))
    assert state.memory.is_full
    assert state.alarm is None
    state, output = on_sensor_event(state, event(9, Phase.HEAD, A1))
    assert state.memory.train_ids == {7}
    assert state.alarm.kind is AlarmKind.MEMORY_OVERFLOW
    assert output.gate_cmd is GateCommand.CLOSE
    # the alarm latches: the gate stays closed after the train leaves
    state = feed(state, event(7, Phase.TAIL, B0, 30.0))
    assert not system_occupied(state)
    assert state.gate_cmd is GateCommand.CLOSE


def test_train_signal_follows_feedback():
    state = feed(new_controller(8, 600), event(7, Phase.HEAD, A0))
    state, output = on_gate_feedback(state, GateFeedback.CLOSED)
    assert output.train_signal is SignalState.GREEN
    state, output = on_gate_feedback(state, GateFeedback.OPEN)
    assert output.train_signal is SignalState.RED
    state, output = on_gate_feedback(new_controller(8, 600), GateFeedback.CLOSED)
    assert output.train_signal is SignalState.RED
    assert output.street_signal is SignalState.GREEN


def test_watchdog_boundary():
    state = feed(new_controller(8, 600), event(7, Phase.HEAD, A0, 0.0))
    quiet, output = tick(state, 599.0)
    assert quiet.alarm is None
    assert output.notices == ()
    stuck, output = tick(state, 601.0)
    assert stuck.alarm.kind is AlarmKind.STUCK_TRAIN
    assert stuck.alarm.train_id == 7
    assert stuck.gate_cmd is GateCommand.CLOSE
    assert stuck.memory.train_ids == {7}
    assert [n.kind for n in output.notices] == [NoticeKind.STUCK_TRAIN]


def test_watchdog_names_only_expired_train_once():
    state = feed(new_controller(8, 600), event(7, Phase.HEAD, A0, 0.0), event(9, Phase.HEAD, A1, 300.0))
    state, output = tick(state, 601.0)
    assert state.alarm.train_id == 7
    assert [n.train_id for n in output.notices] == [7]
    state, output = tick(state, 602.0)
    assert output.notices == ()


def test_train_back_after_leaving_can_be_stuck_again():
    state = feed(new_controller(8, 600), event(7, Phase.HEAD, A0, 0.0))
    state, _ = tick(state, 601.0)
    assert 7 in state.flagged
    state = feed(state, event(7, Phase.TAIL, B0, 700.0))
    assert 7 not in state.flagged
    state = feed(state, event(7, Phase.HEAD, A0, 1000.0))
    state, output = tick(state, 1601.0)
    assert [n.kind for n in output.notices] == [NoticeKind.STUCK_TRAIN]
    assert output.notices[0].train_id == 7


def test_unchanged_feedback_keeps_state():
    state = feed(new_controller(8, 600), event(7, Phase.HEAD, A0))
    same, output = on_gate_feedback(state, state.gate_fb)
    assert same is state
    assert output.gate_cmd is GateCommand.CLOSE


def test_register_then_deregister_empties_memory():
    state = feed(new_controller(8, 600), event(7, Phase.HEAD, B0), event(7, Phase.TAIL, A0))
    assert not system_occupied(state)


def test_random_event_sequences_keep_coupling_rules():
    rng = random.Random(3)
    sensors = [SensorId(side, track) for side, track in itertools.product(Side, range(2))]
    for _ in range(200):
        state = new_controller(3, 50)
        for t in range(60):
            roll = rng.random()
            if roll < 0.7:
                ev = event(rng.randrange(5), rng.choice(list(Phase)), rng.choice(sensors), float(t))
                state, _ = on_sensor_event(state, ev)
                again, _ = on_sensor_event(state, ev)
                assert again.memory == state.memory
            elif roll < 0.9:
                state, _ = on_gate_feedback(state, rng.choice(list(GateFeedback)))
            else:
                state, _ = tick(state, float(t))
            assert_coupled(state)
