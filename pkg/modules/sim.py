"""
sim.py

Fixed-step world model around the crossing controller: multi-track layout,
trains carrying head and tail transmitters, trackside sensors, the radio
channel, the gate actuator and road vehicles, plus the omniscient occupancy
oracle and the collision detector the controller is judged against.

Geometry. Every track has its own axis with the crossing centre at 0. A
train's coordinates are measured along its direction of travel, so the near
sensor sits at -sensor_offset_m and the far sensor at +sensor_offset_m for
every train. Side A is the negative end of the AtoB axis.

Trains run at constant speed, so the instant a transmitter reaches a
coordinate is computed in closed form. Sensor firing, the oracle and the
danger-zone test all use those instants, never step boundaries.
"""
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import AbstractSet, List, Optional, Sequence, Tuple

from .channel import ChannelConfig, RadioChannel
from .controller import (
    REFERENCE_LOGIC,
    ControllerLogic,
    ControllerState,
    Direction,
    GateCommand,
    NoticeKind,
    SensorEvent,
    SensorId,
    Side,
    SignalState,
    new_controller,
)
from .gate import GateActuator, command_gate, new_gate, step_gate
from .protocol import DecodeError, Phase, TrainPacket, decode_frame, encode_packet
from .trace import TraceRecord, record

logger = logging.getLogger(__name__)

DEFAULT_TIME_STEP_S = 0.1
DEFAULT_MEMORY_SLOTS = 16
DEFAULT_WATCHDOG_S = 600.0
# default distance of a spawned train's head before its near sensor
DEFAULT_APPROACH_LEAD_M = 1.0
# idle time after the last train clears when the duration is derived
DEFAULT_TAIL_MARGIN_S = 5.0
MIN_DURATION_S = 10.0

# obedient drivers do not start across a barrier more than half lowered
OBEDIENT_MAX_GATE_POSITION = 0.5


class ScenarioInvalid(ValueError):
    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(reason)


# -------------------- WORLD DESCRIPTION --------------------

@dataclass(frozen=True)
class TrackLayout:
    track_count: int
    sensor_offset_m: float
    crossing_half_width_m: float

    def __post_init__(self):
        if self.track_count < 1:
            raise ScenarioInvalid(f"tracks must be >= 1, got {self.track_count}")
        if not self.crossing_half_width_m > 0:
            raise ScenarioInvalid(f"crossing_half_width_m must be > 0, got {self.crossing_half_width_m}")
        if not self.sensor_offset_m > self.crossing_half_width_m:
            raise ScenarioInvalid(
                f"sensor_offset_m ({self.sensor_offset_m}) must exceed "
                f"crossing_half_width_m ({self.crossing_half_width_m})"
            )

    def sensor(self, side: Side, track: int) -> SensorId:
        if not 0 <= track < self.track_count:
            raise ScenarioInvalid(f"track {track} outside [0, {self.track_count - 1}]")
        return SensorId(side, track)


@dataclass(frozen=True)
class TrainSpec:
    id: int
    track: int
    direction: Direction
    speed_mps: float
    length_m: float
    entry_time_s: float = 0.0
    head_position_m: Optional[float] = None

    def start_head(self, layout: TrackLayout) -> float:
        if self.head_position_m is not None:
            return self.head_position_m
        return -(layout.sensor_offset_m + DEFAULT_APPROACH_LEAD_M)


@dataclass(frozen=True)
class RoadVehicleSpec:
    arrival_time_s: float
    crossing_transit_s: float
    obeys_signals: bool = True


@dataclass(frozen=True)
class Scenario:
    layout: TrackLayout
    gate_transit_s: float
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    memory_slots: int = DEFAULT_MEMORY_SLOTS
    watchdog_timeout_s: float = DEFAULT_WATCHDOG_S
    trains: Tuple[TrainSpec, ...] = ()
    vehicles: Tuple[RoadVehicleSpec, ...] = ()
    duration_s: float = 60.0
    time_step_s: float = DEFAULT_TIME_STEP_S

    @property
    def seed(self) -> int:
        return self.channel.seed


def validate_scenario(scenario: Scenario) -> None:
    """Raise ScenarioInvalid naming the first violated invariant."""
    layout = scenario.layout
    if not scenario.duration_s > 0:
        raise ScenarioInvalid(f"duration_s must be > 0, got {scenario.duration_s}")
    if not scenario.time_step_s > 0:
        raise ScenarioInvalid(f"time_step_s must be > 0, got {scenario.time_step_s}")
    if not scenario.gate_transit_s > 0:
        raise ScenarioInvalid(f"transit_time_s must be > 0, got {scenario.gate_transit_s}")
    if scenario.memory_slots < 1:
        raise ScenarioInvalid(f"memory_slots must be >= 1, got {scenario.memory_slots}")
    if not scenario.watchdog_timeout_s > 0:
        raise ScenarioInvalid(f"watchdog_timeout_s must be > 0, got {scenario.watchdog_timeout_s}")
    seen = set()
    for train in scenario.trains:
        if train.id in seen:
            raise ScenarioInvalid(f"duplicate train id {train.id}")
        seen.add(train.id)
        if not 0 <= train.id <= 0xFFFF:
            raise ScenarioInvalid(f"train id {train.id} outside [0, 65535]")
        if not 0 <= train.track < layout.track_count:
            raise ScenarioInvalid(f"train {train.id}: track {train.track} outside [0, {layout.track_count - 1}]")
        if not train.speed_mps > 0:
            raise ScenarioInvalid(f"train {train.id}: speed_mps must be > 0")
        if not train.length_m > 0:
            raise ScenarioInvalid(f"train {train.id}: length_m must be > 0")
        if not train.entry_time_s >= 0:
            raise ScenarioInvalid(f"train {train.id}: entry_time_s must be >= 0")
        if not train.start_head(layout) < -layout.sensor_offset_m:
            raise ScenarioInvalid(f"train {train.id}: head_position_m must lie before the near sensor")
    for index, vehicle in enumerate(scenario.vehicles):
        if not vehicle.arrival_time_s >= 0:
            raise ScenarioInvalid(f"vehicle {index}: arrival_time_s must be >= 0")
        if not vehicle.crossing_transit_s > 0:
            raise ScenarioInvalid(f"vehicle {index}: crossing_transit_s must be > 0")


def required_duration(layout: TrackLayout, trains: Sequence[TrainSpec], gate_transit_s: float) -> float:
    """Long enough for every train to clear its far sensor and the gate to reopen."""
    if not trains:
        return MIN_DURATION_S
    last_clear = max(TrainPath(train, layout).leaves_window for train in trains)
    return max(MIN_DURATION_S, math.ceil(last_clear + gate_transit_s + DEFAULT_TAIL_MARGIN_S))


def safe_layout(scenario: Scenario) -> bool:
    """Sensor placement criterion: the far-enough-out sensor gives the gate
    its full transit time before the fastest train reaches the road."""
    if not scenario.trains:
        return True
    fastest = max(train.speed_mps for train in scenario.trains)
    layout = scenario.layout
    return layout.sensor_offset_m >= fastest * scenario.gate_transit_s + layout.crossing_half_width_m


# -------------------- KINEMATICS --------------------

@dataclass(frozen=True)
class Passage:
    """A transmitter passing a sensor."""
    time: float
    train_id: int
    phase: Phase
    sensor: SensorId


class TrainPath:
    def __init__(self, spec: TrainSpec, layout: TrackLayout):
        self.spec = spec
        self.layout = layout
        self.head0 = spec.start_head(layout)
        offset = layout.sensor_offset_m
        half = layout.crossing_half_width_m
        self.enters_window = self.time_at(-offset, Phase.HEAD)
        self.leaves_window = self.time_at(offset, Phase.TAIL)
        self.enters_danger = self.time_at(-half, Phase.HEAD)
        self.leaves_danger = self.time_at(half, Phase.TAIL)

    def time_at(self, coordinate: float, phase: Phase) -> float:
        """Instant the given transmitter reaches a coordinate."""
        lag = self.spec.length_m if phase is Phase.TAIL else 0.0
        return self.spec.entry_time_s + (coordinate + lag - self.head0) / self.spec.speed_mps

    def in_window(self, t: float) -> bool:
        return self.enters_window <= t < self.leaves_window

    def in_danger(self, t: float) -> bool:
        return self.enters_danger <= t <= self.leaves_danger

    def passages(self) -> List[Passage]:
        offset = self.layout.sensor_offset_m
        near = self.layout.sensor(self.spec.direction.near_side, self.spec.track)
        far = self.layout.sensor(self.spec.direction.far_side, self.spec.track)
        return [
            Passage(self.time_at(coord, phase), self.spec.id, phase, sensor)
            for phase in (Phase.HEAD, Phase.TAIL)
            for coord, sensor in ((-offset, near), (offset, far))
        ]


# -------------------- WORLD STATE --------------------

@dataclass
class VehicleState:
    index: int
    spec: RoadVehicleSpec
    entered_at: Optional[float] = None
    exited: bool = False

    def in_zone(self, t: float) -> bool:
        return self.entered_at is not None and self.entered_at <= t < self.entered_at + self.spec.crossing_transit_s

    def may_enter(self, street: SignalState, gate_position: float) -> bool:
        if self.spec.obeys_signals:
            return street is SignalState.GREEN and gate_position < OBEDIENT_MAX_GATE_POSITION
        # half barriers do not stop a determined driver until fully down
        return street is SignalState.GREEN or gate_position < 1.0


@dataclass(frozen=True)
class Collision:
    """One vehicle and one train in the danger zone together; time is the
    first instant of the overlap."""
    time: float
    vehicle: int
    train: int
    gate_position: float


@dataclass
class World:
    scenario: Scenario
    paths: List[TrainPath]
    vehicles: List[VehicleState]
    gate: GateActuator
    controller: ControllerState
    channel: RadioChannel
    time: float = 0.0

    @classmethod
    def create(cls, scenario: Scenario) -> "World":
        return cls(
            scenario=scenario,
            paths=[TrainPath(train, scenario.layout) for train in scenario.trains],
            vehicles=[VehicleState(i, v) for i, v in enumerate(scenario.vehicles)],
            gate=new_gate(scenario.gate_transit_s),
            controller=new_controller(scenario.memory_slots, scenario.watchdog_timeout_s),
            channel=RadioChannel(scenario.channel),
        )


def occupancy_oracle(world: World) -> bool:
    """Ground truth: some train has a part between its near sensor and the
    point where its tail clears the far sensor."""
    return any(path.in_window(world.time) for path in world.paths)


def advance_vehicles(world: World, street: SignalState, gate_position: float) -> List[Tuple[int, str]]:
    moves = []
    t = world.time
    for vehicle in world.vehicles:
        if vehicle.entered_at is None:
            if t >= vehicle.spec.arrival_time_s and vehicle.may_enter(street, gate_position):
                vehicle.entered_at = t
                moves.append((vehicle.index, "enter"))
        elif not vehicle.exited and not vehicle.in_zone(t):
            vehicle.exited = True
            moves.append((vehicle.index, "exit"))
    return moves


def overlap_start(vehicle: VehicleState, path: TrainPath) -> Optional[float]:
    """First instant the vehicle's [entered, entered + transit) occupancy meets
    the train's [enters_danger, leaves_danger] interval, or None."""
    if vehicle.entered_at is None:
        return None
    leaves = vehicle.entered_at + vehicle.spec.crossing_transit_s
    if vehicle.entered_at <= path.leaves_danger and path.enters_danger < leaves:
        return max(vehicle.entered_at, path.enters_danger)
    return None


def collision_check(world: World, gate_position: float, vehicles: Sequence[VehicleState],
                    reported: AbstractSet[Tuple[int, int]] = frozenset()) -> List[Collision]:
    """Vehicle/train pairs whose danger-zone intervals overlap with the overlap
    begun by world.time, skipping pairs already reported. Time ordered."""
    found = []
    for vehicle in vehicles:
        for path in world.paths:
            if (vehicle.index, path.spec.id) in reported:
                continue
            start = overlap_start(vehicle, path)
            if start is not None and start <= world.time:
                found.append(Collision(start, vehicle.index, path.spec.id, gate_position))
    found.sort(key=lambda c: (c.time, c.vehicle, c.train))
    return found


# -------------------- RUN LOOP --------------------

@dataclass
class RunResult:
    scenario: Scenario
    controller_name: str
    records: List[TraceRecord]
    final_state: ControllerState
    collisions: List[Collision] = field(default_factory=list)
    anomalies: Counter = field(default_factory=Counter)
    alarms: List[str] = field(default_factory=list)
    trains_served: int = 0
    gate_closed_s: float = 0.0
    reopen_latencies: List[float] = field(default_factory=list)
    censored_reopens: int = 0
    # identical frames reaching one sensor together, received once
    collapsed_copies: int = 0

    @property
    def max_reopen_latency_s(self) -> Optional[float]:
        return max(self.reopen_latencies) if self.reopen_latencies else None


def _fmt(x: float) -> str:
    return format(x, "g")


def _header(scenario: Scenario, logic: ControllerLogic) -> TraceRecord:
    layout, channel = scenario.layout, scenario.channel
    return record(
        0.0, "scenario",
        tracks=layout.track_count,
        sensor_offset_m=_fmt(layout.sensor_offset_m),
        crossing_half_width_m=_fmt(layout.crossing_half_width_m),
        transit_time_s=_fmt(scenario.gate_transit_s),
        loss_prob=_fmt(channel.loss_prob),
        dup_prob=_fmt(channel.dup_prob),
        delay_s=_fmt(channel.delay_s),
        seed=channel.seed,
        repeats=channel.repeats,
        memory_slots=scenario.memory_slots,
        watchdog_timeout_s=_fmt(scenario.watchdog_timeout_s),
        time_step_s=_fmt(scenario.time_step_s),
        duration_s=_fmt(scenario.duration_s),
        trains=len(scenario.trains),
        vehicles=len(scenario.vehicles),
        safe_layout=int(safe_layout(scenario)),
        controller=logic.name,
    )


def _step_record(world: World, occupied: bool, danger: bool) -> TraceRecord:
    state = world.controller
    memory = ",".join(str(i) for i in sorted(state.memory.train_ids)) or "-"
    return record(
        world.time, "step",
        gate_cmd=state.gate_cmd.value,
        gate_fb=state.gate_fb.value,
        street=state.street_signal.value,
        train=state.train_signal.value,
        audio="on" if state.audio_on else "off",
        alarm=str(state.alarm) if state.alarm else "none",
        memory=memory,
        gate_pos=f"{world.gate.position:.4f}",
        occupied=int(occupied),
        danger=int(danger),
    )


def _notice_record(notice) -> TraceRecord:
    kind = "anomaly" if notice.kind.is_anomaly else "notice"
    fields = {"event": notice.kind.value, "train": notice.train_id}
    if notice.sensor is not None:
        fields["sensor"] = str(notice.sensor)
    if notice.direction is not None:
        fields["direction"] = notice.direction.value
    return record(notice.time, kind, **fields)


def run_scenario(scenario: Scenario, logic: ControllerLogic = REFERENCE_LOGIC) -> RunResult:
    validate_scenario(scenario)
    world = World.create(scenario)
    dt = scenario.time_step_s
    steps = int(math.ceil(scenario.duration_s / dt - 1e-9))
    repeats = scenario.channel.repeats
    logger.info("run start: %d trains, %d vehicles, %d steps, controller=%s",
                len(scenario.trains), len(scenario.vehicles), steps, logic.name)

    passages = sorted(
        (p for path in world.paths for p in path.passages()),
        key=lambda p: (p.time, p.train_id, int(p.phase), p.sensor.side.value),
    )
    cursor = 0

    result = RunResult(scenario, logic.name, [], world.controller)
    records = result.records
    records.append(_header(scenario, logic))
    last_step = _step_record(world, False, False)
    records.append(last_step)

    collided_pairs = set()
    prev_occupied = False
    clear_at: Optional[float] = None
    last_alarm = None
    # the step record is rebuilt only when one of these objects changes
    last_key = (world.controller, world.gate, False, False)

    for k in range(steps):
        t0 = k * dt
        t1 = (k + 1) * dt
        batch: List[TraceRecord] = []
        state = world.controller

        # transmitters passing sensors during this step
        while cursor < len(passages) and passages[cursor].time <= t1:
            passage = passages[cursor]
            cursor += 1
            frame = encode_packet(TrainPacket(passage.train_id, passage.phase))
            batch.append(record(passage.time, "transmit", train=passage.train_id,
                                phase=passage.phase.name.lower(), sensor=passage.sensor, copies=repeats))
            for _ in range(repeats):
                if not world.channel.send(frame, passage.sensor, passage.time):
                    batch.append(record(passage.time, "lost", train=passage.train_id,
                                        phase=passage.phase.name.lower(), sensor=passage.sensor))

        # frames due at the sensors; copies of one burst arrive together and
        # the receiver keeps the first
        received = set()
        for delivery in world.channel.due(t1):
            key = (delivery.sensor_id, delivery.frame, delivery.deliver_at)
            if key in received:
                result.collapsed_copies += 1
                continue
            received.add(key)
            try:
                packet = decode_frame(delivery.frame)
            except DecodeError as e:
                logger.warning("undecodable frame at %s: %s", delivery.sensor_id, e)
                batch.append(record(delivery.deliver_at, "anomaly", event=e.kind.value, sensor=delivery.sensor_id))
                continue
            batch.append(record(delivery.deliver_at, "sensor", train=packet.train_id,
                                phase=packet.phase.name.lower(), sensor=delivery.sensor_id))
            state, output = logic.on_sensor_event(state, SensorEvent(packet, delivery.sensor_id, delivery.deliver_at))
            batch.extend(_notice_record(n) for n in output.notices)

        state, output = logic.tick(state, t1)
        batch.extend(_notice_record(n) for n in output.notices)

        if world.gate.commanded is not state.gate_cmd:
            world.gate = command_gate(world.gate, state.gate_cmd)
        world.gate, feedback = step_gate(world.gate, dt)
        state, _ = logic.on_gate_feedback(state, feedback)
        world.controller = state
        world.time = t1

        for index, action in advance_vehicles(world, state.street_signal, world.gate.position):
            batch.append(record(t1, "vehicle", vehicle=index, action=action))

        occupied = occupancy_oracle(world)
        danger = any(path.in_danger(t1) for path in world.paths)
        watched = [
            v for v in world.vehicles
            if v.entered_at is not None and v.entered_at + v.spec.crossing_transit_s > t0
        ]
        for collision in collision_check(world, world.gate.position, watched, collided_pairs):
            collided_pairs.add((collision.vehicle, collision.train))
            result.collisions.append(collision)
            batch.append(record(collision.time, "collision", vehicle=collision.vehicle, train=collision.train,
                                gate_pos=f"{collision.gate_position:.4f}"))
            logger.warning("collision t=%.3f vehicle=%d train=%d", collision.time, collision.vehicle, collision.train)

        for rec in batch:
            if rec.kind in ("notice", "anomaly"):
                event = rec.get("event")
                if event == NoticeKind.LEFT.value:
                    result.trains_served += 1
                elif rec.kind == "anomaly":
                    result.anomalies[event] += 1
        if state.alarm is not None and state.alarm != last_alarm:
            result.alarms.append(str(state.alarm))
        last_alarm = state.alarm
        if state.gate_cmd is GateCommand.CLOSE:
            result.gate_closed_s += dt

        if occupied:
            clear_at = None
        elif prev_occupied:
            clear_at = t1
        if clear_at is not None and world.gate.position == 0.0:
            result.reopen_latencies.append(t1 - clear_at)
            clear_at = None
        prev_occupied = occupied

        if batch:
            batch.sort(key=lambda rec: rec.time)
            records.extend(batch)
        key = (state, world.gate, occupied, danger)
        if all(a is b for a, b in zip(key, last_key)):
            last_step = TraceRecord(t1, "step", last_step.fields)
        else:
            last_step = _step_record(world, occupied, danger)
            last_key = key
        records.append(last_step)

    if clear_at is not None:
        result.reopen_latencies.append(world.time - clear_at)
        result.censored_reopens += 1

    result.final_state = world.controller
    logger.info("run end: served=%d collisions=%d anomalies=%d alarms=%s collapsed=%d",
                result.trains_served, len(result.collisions), sum(result.anomalies.values()),
                result.alarms, result.collapsed_copies)
    return result
