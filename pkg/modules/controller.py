"""
controller.py

Crossing controller: keeps the memory table of trains inside the protected
system and derives gate command, street signal, train signal and audio from
it plus the gate feedback.

Every transition is a pure function (state, input) -> (state, output).
The only side effect is logging of the notices a transition produces.

Coupling rules (derive_outputs):
  - gate Close while any train is registered or an alarm is latched, Open otherwise
  - street Red exactly when the gate is commanded Close
  - train signal Green only when a train is registered and the gate reports Closed
  - audio on exactly when the gate is commanded Close
"""
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, FrozenSet, NamedTuple, Optional, Tuple

from .protocol import Phase, TrainId, TrainPacket
from .settings import InvalidConfig

logger = logging.getLogger(__name__)


class SignalState(Enum):
    GREEN = "green"
    RED = "red"


class GateCommand(Enum):
    OPEN = "open"
    CLOSE = "close"


class GateFeedback(Enum):
    OPEN = "open"
    CLOSED = "closed"


class Side(Enum):
    A = "A"
    B = "B"

    @property
    def opposite(self) -> "Side":
        return Side.B if self is Side.A else Side.A


class Direction(Enum):
    A_TO_B = "AtoB"
    B_TO_A = "BtoA"

    @property
    def near_side(self) -> Side:
        return Side.A if self is Direction.A_TO_B else Side.B

    @property
    def far_side(self) -> Side:
        return self.near_side.opposite

    @classmethod
    def from_entry_side(cls, side: Side) -> "Direction":
        return cls.A_TO_B if side is Side.A else cls.B_TO_A


@dataclass(frozen=True)
class SensorId:
    side: Side
    track: int

    def __post_init__(self):
        if self.track < 0:
            raise ValueError(f"track index must be >= 0, got {self.track}")

    def __str__(self):
        return f"{self.side.value}{self.track}"


@dataclass(frozen=True)
class SensorEvent:
    packet: TrainPacket
    sensor: SensorId
    time: float

    def __post_init__(self):
        if self.time < 0:
            raise ValueError(f"sensor event time must be >= 0, got {self.time}")


@dataclass(frozen=True)
class MemorySlot:
    train_id: TrainId
    entry_sensor: SensorId
    registered_at: float

    @property
    def direction(self) -> Direction:
        return Direction.from_entry_side(self.entry_sensor.side)


@dataclass(frozen=True)
class ControllerMemory:
    capacity: int
    slots: Tuple[MemorySlot, ...] = ()

    def __post_init__(self):
        if self.capacity < 1:
            raise InvalidConfig(f"memory capacity must be >= 1, got {self.capacity}")
        if len(self.slots) > self.capacity:
            raise InvalidConfig(f"{len(self.slots)} slots exceed capacity {self.capacity}")
        ids = [slot.train_id for slot in self.slots]
        if len(set(ids)) != len(ids):
            raise InvalidConfig(f"duplicate train ids in memory: {ids}")

    def find(self, train: int) -> Optional[MemorySlot]:
        for slot in self.slots:
            if slot.train_id == train:
                return slot
        return None

    @property
    def is_empty(self) -> bool:
        return not self.slots

    @property
    def is_full(self) -> bool:
        return len(self.slots) >= self.capacity

    @property
    def train_ids(self) -> FrozenSet[int]:
        return frozenset(slot.train_id for slot in self.slots)

    def register(self, slot: MemorySlot) -> "ControllerMemory":
        return replace(self, slots=self.slots + (slot,))

    def deregister(self, train: int) -> "ControllerMemory":
        return replace(self, slots=tuple(s for s in self.slots if s.train_id != train))


class AlarmKind(Enum):
    MEMORY_OVERFLOW = "MemoryOverflow"
    STUCK_TRAIN = "StuckTrain"


@dataclass(frozen=True)
class Alarm:
    kind: AlarmKind
    train_id: int

    def __str__(self):
        return f"{self.kind.value}:{self.train_id}"


class NoticeKind(Enum):
    ENTERED = "Entered"
    CLEARING = "Clearing"
    LEFT = "Left"
    UNKNOWN_TAIL = "UnknownTail"
    MEMORY_OVERFLOW = "MemoryOverflow"
    STUCK_TRAIN = "StuckTrain"

    @property
    def is_anomaly(self) -> bool:
        return self in (NoticeKind.UNKNOWN_TAIL, NoticeKind.MEMORY_OVERFLOW, NoticeKind.STUCK_TRAIN)


@dataclass(frozen=True)
class Notice:
    kind: NoticeKind
    train_id: int
    time: float
    sensor: Optional[SensorId] = None
    direction: Optional[Direction] = None


@dataclass(frozen=True)
class ControllerState:
    memory: ControllerMemory
    gate_cmd: GateCommand
    gate_fb: GateFeedback
    street_signal: SignalState
    train_signal: SignalState
    audio_on: bool
    alarm: Optional[Alarm]
    watchdog_timeout_s: float
    # trains already reported as stuck; each is flagged once
    flagged: FrozenSet[int] = field(default_factory=frozenset)


@dataclass(frozen=True)
class ControllerOutput:
    gate_cmd: GateCommand
    street_signal: SignalState
    train_signal: SignalState
    audio_on: bool
    alarm: Optional[Alarm]
    notices: Tuple[Notice, ...] = ()


def new_controller(memory_capacity: int, watchdog_timeout_s: float) -> ControllerState:
    if memory_capacity < 1:
        raise InvalidConfig(f"memory capacity must be >= 1, got {memory_capacity}")
    if not watchdog_timeout_s > 0:
        raise InvalidConfig(f"watchdog timeout must be > 0, got {watchdog_timeout_s}")
    return ControllerState(
        memory=ControllerMemory(memory_capacity),
        gate_cmd=GateCommand.OPEN,
        gate_fb=GateFeedback.OPEN,
        street_signal=SignalState.GREEN,
        train_signal=SignalState.RED,
        audio_on=False,
        alarm=None,
        watchdog_timeout_s=watchdog_timeout_s,
    )


def system_occupied(state: ControllerState) -> bool:
    return not state.memory.is_empty


def derive_outputs(state: ControllerState) -> ControllerState:
    occupied = system_occupied(state)
    close = occupied or state.alarm is not None
    train_green = occupied and state.gate_fb is GateFeedback.CLOSED
    return replace(
        state,
        gate_cmd=GateCommand.CLOSE if close else GateCommand.OPEN,
        street_signal=SignalState.RED if close else SignalState.GREEN,
        train_signal=SignalState.GREEN if train_green else SignalState.RED,
        audio_on=close,
    )


def output_of(state: ControllerState, notices: Tuple[Notice, ...] = ()) -> ControllerOutput:
    return ControllerOutput(
        gate_cmd=state.gate_cmd,
        street_signal=state.street_signal,
        train_signal=state.train_signal,
        audio_on=state.audio_on,
        alarm=state.alarm,
        notices=notices,
    )


def _log_notices(notices: Tuple[Notice, ...]) -> None:
    for notice in notices:
        if notice.kind.is_anomaly:
            logger.warning("anomaly %s train=%s t=%.3f sensor=%s",
                           notice.kind.value, notice.train_id, notice.time, notice.sensor)
        else:
            logger.debug("train %s %s t=%.3f sensor=%s",
                         notice.train_id, notice.kind.value, notice.time, notice.sensor)


def on_sensor_event(state: ControllerState, event: SensorEvent) -> Tuple[ControllerState, ControllerOutput]:
    packet = event.packet
    slot = state.memory.find(packet.train_id)
    notice = None

    if packet.phase is Phase.HEAD:
        if slot is not None:
            pass  # duplicate or far-side head of a registered train
        elif state.memory.is_full:
            state = replace(state, alarm=Alarm(AlarmKind.MEMORY_OVERFLOW, packet.train_id))
            notice = Notice(NoticeKind.MEMORY_OVERFLOW, packet.train_id, event.time, event.sensor)
        else:
            new_slot = MemorySlot(packet.train_id, event.sensor, event.time)
            state = replace(state, memory=state.memory.register(new_slot))
            notice = Notice(NoticeKind.ENTERED, packet.train_id, event.time, event.sensor, new_slot.direction)
    else:
        if slot is None:
            notice = Notice(NoticeKind.UNKNOWN_TAIL, packet.train_id, event.time, event.sensor)
        elif event.sensor.side is not slot.entry_sensor.side:
            state = replace(
                state,
                memory=state.memory.deregister(packet.train_id),
                flagged=state.flagged - {packet.train_id},
            )
            notice = Notice(NoticeKind.LEFT, packet.train_id, event.time, event.sensor, slot.direction)
        else:
            # tail passing the approach sensor, train still inside
            notice = Notice(NoticeKind.CLEARING, packet.train_id, event.time, event.sensor, slot.direction)

    state = derive_outputs(state)
    notices = (notice,) if notice is not None else ()
    _log_notices(notices)
    return state, output_of(state, notices)


def on_gate_feedback(state: ControllerState, fb: GateFeedback) -> Tuple[ControllerState, ControllerOutput]:
    if fb is state.gate_fb:
        return state, output_of(state)
    state = derive_outputs(replace(state, gate_fb=fb))
    return state, output_of(state)


def tick(state: ControllerState, now: float) -> Tuple[ControllerState, ControllerOutput]:
    """Watchdog. A slot older than the timeout raises StuckTrain once; the
    slot is kept and the gate never reopens on a timeout."""
    expired = [
        slot for slot in state.memory.slots
        if now - slot.registered_at > state.watchdog_timeout_s and slot.train_id not in state.flagged
    ]
    if not expired:
        return state, output_of(state)

    oldest = min(expired, key=lambda s: s.registered_at)
    state = replace(
        state,
        alarm=Alarm(AlarmKind.STUCK_TRAIN, oldest.train_id),
        flagged=state.flagged | {slot.train_id for slot in expired},
    )
    state = derive_outputs(state)
    notices = tuple(Notice(NoticeKind.STUCK_TRAIN, slot.train_id, now, slot.entry_sensor) for slot in expired)
    _log_notices(notices)
    return state, output_of(state, notices)


class ControllerLogic(NamedTuple):
    """The transition functions the simulator drives; faulty stubs swap
    some of them out."""
    name: str
    on_sensor_event: Callable[[ControllerState, SensorEvent], Tuple[ControllerState, ControllerOutput]]
    on_gate_feedback: Callable[[ControllerState, GateFeedback], Tuple[ControllerState, ControllerOutput]]
    tick: Callable[[ControllerState, float], Tuple[ControllerState, ControllerOutput]]


REFERENCE_LOGIC = ControllerLogic("real", on_sensor_event, on_gate_feedback, tick)
