"""
scenario_Parser.py

Reads the sectioned key-value scenario document:

    # comment
    [layout]
    tracks = 2
    sensor_offset_m = 420
    crossing_half_width_m = 10

    [gate]
    transit_time_s = 10

    [train]            (repeatable)
    id = 7
    track = 0
    direction = AtoB
    speed_mps = 30
    length_m = 200

Sections: [layout] [gate] [channel] [controller] [train]* [vehicle]* [run]
and the optional [batch] section read by the batch command. Every failure
is a ParseError carrying the offending line number.
"""
import logging
import math
import re
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

from .channel import ChannelConfig
from .controller import Direction
from .settings import InvalidConfig
from .sim import (
    DEFAULT_MEMORY_SLOTS,
    DEFAULT_TIME_STEP_S,
    DEFAULT_WATCHDOG_S,
    RoadVehicleSpec,
    Scenario,
    ScenarioInvalid,
    TrackLayout,
    TrainSpec,
    required_duration,
    validate_scenario,
)

logger = logging.getLogger(__name__)

SECTION_RE = re.compile(r"^\[([a-z0-9_]+)\]$")
INT_RE = re.compile(r"^[+-]?\d+$")


class ParseError(ValueError):
    def __init__(self, line: int, reason: str):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


def _to_int(text: str) -> int:
    if not INT_RE.match(text):
        raise ValueError(f"expected an integer, got {text!r}")
    return int(text)


def _to_float(text: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(f"expected a finite number, got {text!r}")
    return value


def _to_bool(text: str) -> bool:
    if text not in ("true", "false"):
        raise ValueError(f"expected true or false, got {text!r}")
    return text == "true"


def _to_direction(text: str) -> Direction:
    try:
        return Direction(text)
    except ValueError:
        raise ValueError(f"expected AtoB or BtoA, got {text!r}")


SECTION_KEYS: Dict[str, Dict[str, Callable[[str], object]]] = {
    "layout": {"tracks": _to_int, "sensor_offset_m": _to_float, "crossing_half_width_m": _to_float},
    "gate": {"transit_time_s": _to_float},
    "channel": {"loss_prob": _to_float, "dup_prob": _to_float, "delay_s": _to_float,
                "seed": _to_int, "repeats": _to_int},
    "controller": {"memory_slots": _to_int, "watchdog_timeout_s": _to_float},
    "train": {"id": _to_int, "track": _to_int, "direction": _to_direction, "speed_mps": _to_float,
              "length_m": _to_float, "entry_time_s": _to_float, "head_position_m": _to_float},
    "vehicle": {"arrival_time_s": _to_float, "crossing_transit_s": _to_float, "obeys_signals": _to_bool},
    "run": {"duration_s": _to_float, "time_step_s": _to_float},
    "batch": {"speed_min_mps": _to_float, "speed_max_mps": _to_float, "length_min_m": _to_float,
              "length_max_m": _to_float, "entry_jitter_s": _to_float},
}
REPEATABLE = {"train", "vehicle"}
REQUIRED_SECTIONS = ("layout", "gate")
REQUIRED_KEYS = {
    "layout": ("tracks", "sensor_offset_m", "crossing_half_width_m"),
    "gate": ("transit_time_s",),
    "train": ("id", "track", "direction", "speed_mps", "length_m"),
    "vehicle": ("arrival_time_s", "crossing_transit_s"),
}


@dataclass
class Section:
    name: str
    line: int
    values: Dict[str, Tuple[object, int]]

    def get(self, key: str, default=None):
        return self.values[key][0] if key in self.values else default

    def line_of(self, key: str) -> int:
        return self.values[key][1] if key in self.values else self.line


@dataclass(frozen=True)
class BatchRanges:
    """Per-seed randomisation declared in the optional [batch] section."""
    speed_mps: Optional[Tuple[float, float]] = None
    length_m: Optional[Tuple[float, float]] = None
    entry_jitter_s: float = 0.0


def _split_sections(text: str) -> List[Section]:
    sections: List[Section] = []
    current: Optional[Section] = None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        header = SECTION_RE.match(line)
        if header:
            name = header.group(1)
            if name not in SECTION_KEYS:
                raise ParseError(line_no, f"unknown section [{name}]")
            if name not in REPEATABLE and any(s.name == name for s in sections):
                raise ParseError(line_no, f"section [{name}] appears more than once")
            current = Section(name, line_no, {})
            sections.append(current)
            continue
        if line.startswith("["):
            raise ParseError(line_no, f"malformed section header {line!r}")
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep:
            raise ParseError(line_no, f"expected 'key = value', got {line!r}")
        if current is None:
            raise ParseError(line_no, f"key {key!r} outside any section")
        converters = SECTION_KEYS[current.name]
        if key not in converters:
            raise ParseError(line_no, f"unknown key {key!r} in [{current.name}]")
        if key in current.values:
            raise ParseError(line_no, f"duplicate key {key!r} in [{current.name}]")
        try:
            current.values[key] = (converters[key](value), line_no)
        except ValueError as e:
            raise ParseError(line_no, f"bad value for {key}: {e}")
    return sections


def _check_required(section: Section) -> None:
    for key in REQUIRED_KEYS.get(section.name, ()):
        if key not in section.values:
            raise ParseError(section.line, f"[{section.name}] is missing required key {key!r}")


def _build_layout(section: Section) -> TrackLayout:
    try:
        return TrackLayout(section.get("tracks"), section.get("sensor_offset_m"), section.get("crossing_half_width_m"))
    except ScenarioInvalid as e:
        key = next(k for k in ("sensor_offset_m", "crossing_half_width_m", "tracks") if k in e.reason)
        raise ParseError(section.line_of(key), e.reason)


def _build_trains(sections: List[Section], layout: TrackLayout) -> Tuple[TrainSpec, ...]:
    trains = []
    first_seen: Dict[int, int] = {}
    for section in sections:
        train_id = section.get("id")
        if not 0 <= train_id <= 0xFFFF:
            raise ParseError(section.line_of("id"), f"train id {train_id} outside [0, 65535]")
        if train_id in first_seen:
            raise ParseError(section.line_of("id"),
                             f"duplicate train id {train_id} (first declared at line {first_seen[train_id]})")
        first_seen[train_id] = section.line_of("id")
        track = section.get("track")
        if not 0 <= track < layout.track_count:
            raise ParseError(section.line_of("track"),
                             f"track {track} out of range: tracks = {layout.track_count} allows 0..{layout.track_count - 1}")
        for key in ("speed_mps", "length_m"):
            if not section.get(key) > 0:
                raise ParseError(section.line_of(key), f"{key} must be > 0")
        if not section.get("entry_time_s", 0.0) >= 0:
            raise ParseError(section.line_of("entry_time_s"), "entry_time_s must be >= 0")
        head = section.get("head_position_m")
        if head is not None and not head < -layout.sensor_offset_m:
            raise ParseError(section.line_of("head_position_m"),
                             f"head_position_m must lie before the near sensor (< {-layout.sensor_offset_m:g})")
        trains.append(TrainSpec(
            id=train_id,
            track=track,
            direction=section.get("direction"),
            speed_mps=section.get("speed_mps"),
            length_m=section.get("length_m"),
            entry_time_s=section.get("entry_time_s", 0.0),
            head_position_m=head,
        ))
    return tuple(trains)


def _build_vehicles(sections: List[Section]) -> Tuple[RoadVehicleSpec, ...]:
    vehicles = []
    for section in sections:
        if not section.get("arrival_time_s") >= 0:
            raise ParseError(section.line_of("arrival_time_s"), "arrival_time_s must be >= 0")
        if not section.get("crossing_transit_s") > 0:
            raise ParseError(section.line_of("crossing_transit_s"), "crossing_transit_s must be > 0")
        vehicles.append(RoadVehicleSpec(
            arrival_time_s=section.get("arrival_time_s"),
            crossing_transit_s=section.get("crossing_transit_s"),
            obeys_signals=section.get("obeys_signals", True),
        ))
    return tuple(vehicles)


def _build_channel(section: Optional[Section]) -> ChannelConfig:
    if section is None:
        return ChannelConfig()
    try:
        return ChannelConfig(
            loss_prob=section.get("loss_prob", 0.0),
            dup_prob=section.get("dup_prob", 0.0),
            delay_s=section.get("delay_s", 0.0),
            seed=section.get("seed", 0),
            repeats=section.get("repeats", 1),
        )
    except InvalidConfig as e:
        key = next((k for k in section.values if k in str(e)), None)
        raise ParseError(section.line_of(key) if key else section.line, str(e))


def _build_batch(section: Optional[Section]) -> BatchRanges:
    if section is None:
        return BatchRanges()
    ranges = {}
    for name, low_key, high_key in (("speed_mps", "speed_min_mps", "speed_max_mps"),
                                    ("length_m", "length_min_m", "length_max_m")):
        low, high = section.get(low_key), section.get(high_key)
        if low is None and high is None:
            continue
        if low is None or high is None:
            raise ParseError(section.line, f"[batch] needs both {low_key} and {high_key}")
        if not 0 < low <= high:
            raise ParseError(section.line_of(high_key), f"[batch] requires 0 < {low_key} <= {high_key}")
        ranges[name] = (low, high)
    jitter = section.get("entry_jitter_s", 0.0)
    if jitter < 0:
        raise ParseError(section.line_of("entry_jitter_s"), "entry_jitter_s must be >= 0")
    return BatchRanges(entry_jitter_s=jitter, **ranges)


def parse_scenario_document(text: str) -> Tuple[Scenario, BatchRanges]:
    sections = _split_sections(text)
    last_line = max(1, len(text.splitlines()))
    by_name: Dict[str, List[Section]] = {}
    for section in sections:
        _check_required(section)
        by_name.setdefault(section.name, []).append(section)
    for name in REQUIRED_SECTIONS:
        if name not in by_name:
            raise ParseError(last_line, f"missing required section [{name}]")

    def single(name: str) -> Optional[Section]:
        return by_name.get(name, [None])[0]

    layout = _build_layout(single("layout"))
    gate = single("gate")
    transit = gate.get("transit_time_s")
    if not transit > 0:
        raise ParseError(gate.line_of("transit_time_s"), "transit_time_s must be > 0")

    controller = single("controller")
    memory_slots = controller.get("memory_slots", DEFAULT_MEMORY_SLOTS) if controller else DEFAULT_MEMORY_SLOTS
    watchdog = controller.get("watchdog_timeout_s", DEFAULT_WATCHDOG_S) if controller else DEFAULT_WATCHDOG_S
    if memory_slots < 1:
        raise ParseError(controller.line_of("memory_slots"), "memory_slots must be >= 1")
    if not watchdog > 0:
        raise ParseError(controller.line_of("watchdog_timeout_s"), "watchdog_timeout_s must be > 0")

    trains = _build_trains(by_name.get("train", []), layout)
    vehicles = _build_vehicles(by_name.get("vehicle", []))
    channel = _build_channel(single("channel"))

    run = single("run")
    time_step = run.get("time_step_s", DEFAULT_TIME_STEP_S) if run else DEFAULT_TIME_STEP_S
    duration = run.get("duration_s") if run else None
    if duration is None:
        try:
            duration = required_duration(layout, trains, transit)
        except OverflowError:
            raise ParseError(last_line, "train timings too large to derive duration_s")
    if not duration > 0:
        raise ParseError(run.line_of("duration_s"), "duration_s must be > 0")
    if not time_step > 0:
        raise ParseError(run.line_of("time_step_s"), "time_step_s must be > 0")

    scenario = Scenario(
        layout=layout,
        gate_transit_s=transit,
        channel=channel,
        memory_slots=memory_slots,
        watchdog_timeout_s=watchdog,
        trains=trains,
        vehicles=vehicles,
        duration_s=duration,
        time_step_s=time_step,
    )
    try:
        validate_scenario(scenario)
    except ScenarioInvalid as e:
        raise ParseError(last_line, e.reason)
    return scenario, _build_batch(single("batch"))


def parse_scenario(text: str) -> Scenario:
    return parse_scenario_document(text)[0]


def load_scenario(path: str) -> Tuple[Scenario, BatchRanges]:
    """Read and parse a scenario file. IO and decoding failures surface as
    OSError / UnicodeDecodeError for the caller to report."""
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    logger.info("Loaded scenario %s (%d bytes)", path, len(text))
    return parse_scenario_document(text)
