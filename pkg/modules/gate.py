"""
gate.py

Half-barrier gate actuator. The two barriers are driven together by one
motor and modelled as a single position: 0.0 fully open, 1.0 fully closed.
The motor moves linearly at 1/transit_time_s per second in either direction.
"""
from dataclasses import dataclass, replace
from typing import Tuple

from .controller import GateCommand, GateFeedback
from .settings import InvalidConfig

# closer than this to an endpoint counts as the endpoint
_SNAP = 1e-9


@dataclass(frozen=True)
class GateActuator:
    commanded: GateCommand
    position: float
    transit_time_s: float

    def __post_init__(self):
        if not self.transit_time_s > 0:
            raise InvalidConfig(f"gate transit_time_s must be > 0, got {self.transit_time_s}")
        if not 0.0 <= self.position <= 1.0:
            raise InvalidConfig(f"gate position must be in [0, 1], got {self.position}")

    @property
    def feedback(self) -> GateFeedback:
        return GateFeedback.CLOSED if self.position == 1.0 else GateFeedback.OPEN


def new_gate(transit_time_s: float) -> GateActuator:
    return GateActuator(GateCommand.OPEN, 0.0, transit_time_s)


def command_gate(actuator: GateActuator, cmd: GateCommand) -> GateActuator:
    return replace(actuator, commanded=cmd)


def step_gate(actuator: GateActuator, dt: float) -> Tuple[GateActuator, GateFeedback]:
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    target = 1.0 if actuator.commanded is GateCommand.CLOSE else 0.0
    if actuator.position == target:
        return actuator, actuator.feedback
    travel = dt / actuator.transit_time_s
    if target > actuator.position:
        position = min(target, actuator.position + travel)
    else:
        position = max(target, actuator.position - travel)
    if abs(target - position) < _SNAP:
        position = target
    moved = replace(actuator, position=position)
    return moved, moved.feedback
