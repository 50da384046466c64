"""
faulty_Controllers.py

Deliberately broken controllers used to prove the acceptance harness can
fail. Each one wraps the reference transitions and breaks one rule:

  always-open  gate never closes, street always green
  no-feedback  train signal ignores the gate feedback
  no-memory    only the latest head is remembered and any tail releases it
"""
from dataclasses import replace
from typing import Dict, Optional, Tuple

from . import controller as ctl
from .controller import (
    REFERENCE_LOGIC,
    ControllerLogic,
    ControllerMemory,
    ControllerOutput,
    ControllerState,
    GateCommand,
    MemorySlot,
    Notice,
    NoticeKind,
    SensorEvent,
    SignalState,
)
from .protocol import Phase


def _force_open(result: Tuple[ControllerState, ControllerOutput]) -> Tuple[ControllerState, ControllerOutput]:
    state, output = result
    state = replace(state, gate_cmd=GateCommand.OPEN, street_signal=SignalState.GREEN, audio_on=False)
    return state, ctl.output_of(state, output.notices)


def _ignore_feedback(result: Tuple[ControllerState, ControllerOutput]) -> Tuple[ControllerState, ControllerOutput]:
    state, output = result
    signal = SignalState.GREEN if ctl.system_occupied(state) else SignalState.RED
    state = replace(state, train_signal=signal)
    return state, ctl.output_of(state, output.notices)


def _forgetful_sensor_event(state: ControllerState, event: SensorEvent) -> Tuple[ControllerState, ControllerOutput]:
    packet = event.packet
    capacity = state.memory.capacity
    if packet.phase is Phase.HEAD:
        memory = ControllerMemory(capacity, (MemorySlot(packet.train_id, event.sensor, event.time),))
        notice = Notice(NoticeKind.ENTERED, packet.train_id, event.time, event.sensor)
    else:
        memory = ControllerMemory(capacity)
        notice = Notice(NoticeKind.LEFT, packet.train_id, event.time, event.sensor)
    state = ctl.derive_outputs(replace(state, memory=memory))
    return state, ctl.output_of(state, (notice,))


ALWAYS_OPEN = ControllerLogic(
    "always-open",
    lambda s, e: _force_open(ctl.on_sensor_event(s, e)),
    lambda s, fb: _force_open(ctl.on_gate_feedback(s, fb)),
    lambda s, now: _force_open(ctl.tick(s, now)),
)

NO_FEEDBACK = ControllerLogic(
    "no-feedback",
    lambda s, e: _ignore_feedback(ctl.on_sensor_event(s, e)),
    lambda s, fb: _ignore_feedback(ctl.on_gate_feedback(s, fb)),
    lambda s, now: _ignore_feedback(ctl.tick(s, now)),
)

NO_MEMORY = ControllerLogic("no-memory", _forgetful_sensor_event, ctl.on_gate_feedback, ctl.tick)

FAULTY_CONTROLLERS: Dict[str, ControllerLogic] = {
    logic.name: logic for logic in (ALWAYS_OPEN, NO_FEEDBACK, NO_MEMORY)
}


def get_controller_logic(name: Optional[str]) -> ControllerLogic:
    if name is None or name == REFERENCE_LOGIC.name:
        return REFERENCE_LOGIC
    try:
        return FAULTY_CONTROLLERS[name]
    except KeyError:
        raise ValueError(f"unknown faulty controller {name!r}; choose from {sorted(FAULTY_CONTROLLERS)}")
