"""
trace_Verifier.py

Replays an EventTrace and checks it without re-running the simulation:

  - record times never decrease
  - every `step` record satisfies the controller coupling rules
  - with a fault-free channel and no alarm pending, the controller's memory
    is non-empty exactly when the oracle says the system is occupied, and the
    gate is commanded Close whenever it is
  - on a layout that gives the gate its full transit time, the gate reports
    Closed whenever a train is in the danger zone

Collisions are not checked here; they are the run's own verdict.
"""
import logging
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Tuple

from .trace import TraceFormatError, TraceRecord, read_trace

logger = logging.getLogger(__name__)

STEP_FIELDS = {
    "gate_cmd": ("open", "close"),
    "gate_fb": ("open", "closed"),
    "street": ("green", "red"),
    "train": ("green", "red"),
    "audio": ("on", "off"),
    "occupied": ("0", "1"),
    "danger": ("0", "1"),
}


@dataclass(frozen=True)
class Violation:
    time: float
    line: int
    rule: str
    detail: str

    def __str__(self):
        return f"t={self.time:.3f} (line {self.line}) {self.rule}: {self.detail}"


@dataclass(frozen=True)
class StepView:
    gate_cmd: str
    gate_fb: str
    street: str
    train: str
    audio: str
    alarm: str
    memory: str
    occupied: bool
    danger: bool

    @property
    def memory_empty(self) -> bool:
        return self.memory == "-"

    @property
    def alarm_pending(self) -> bool:
        return self.alarm != "none"


def _step_view(rec: TraceRecord, line_no: int) -> StepView:
    values: Dict[str, str] = {}
    for key, allowed in STEP_FIELDS.items():
        value = rec.get(key)
        if value not in allowed:
            raise TraceFormatError(line_no, f"step field {key}={value!r} not in {allowed}")
        values[key] = value
    for key in ("alarm", "memory"):
        value = rec.get(key)
        if not value:
            raise TraceFormatError(line_no, f"step record is missing {key}")
        values[key] = value
    values["occupied"] = values["occupied"] == "1"
    values["danger"] = values["danger"] == "1"
    return StepView(**values)


def coupling_violations(step: StepView) -> List[Tuple[str, str]]:
    found = []
    if not step.memory_empty and step.gate_cmd != "close":
        found.append(("occupied-gate", f"memory {step.memory} with gate_cmd={step.gate_cmd}"))
    if step.gate_cmd == "close" and step.street != "red":
        found.append(("street-signal", f"gate_cmd=close with street={step.street}"))
    if step.train == "green" and step.gate_fb != "closed":
        found.append(("train-signal", f"train=green with gate_fb={step.gate_fb}"))
    if step.memory_empty and not step.alarm_pending and step.gate_cmd != "open":
        found.append(("reopen", f"empty memory, no alarm, gate_cmd={step.gate_cmd}"))
    if (step.audio == "on") != (step.gate_cmd == "close"):
        found.append(("audio", f"audio={step.audio} with gate_cmd={step.gate_cmd}"))
    return found


class TraceChecker:
    """Feeds parsed records one by one and collects violations."""

    def __init__(self):
        self.violations: List[Violation] = []
        self.header: Optional[TraceRecord] = None
        self.last_time = 0.0
        self.steps = 0
        # findings of the last step record, reused while its fields repeat
        self._last_fields = None
        self._last_findings: List[Tuple[str, str]] = []

    @property
    def fault_free(self) -> bool:
        if self.header is None:
            return False
        try:
            return float(self.header.get("loss_prob", "nan")) == 0 and float(self.header.get("delay_s", "nan")) == 0
        except ValueError:
            return False

    @property
    def safe_layout(self) -> bool:
        return self.header is not None and self.header.get("safe_layout") == "1"

    def _flag(self, rec: TraceRecord, line_no: int, rule: str, detail: str) -> None:
        self.violations.append(Violation(rec.time, line_no, rule, detail))

    def feed(self, line_no: int, rec: TraceRecord) -> None:
        if rec.time < self.last_time:
            self._flag(rec, line_no, "time-order", f"{rec.time:.3f} after {self.last_time:.3f}")
        self.last_time = max(self.last_time, rec.time)

        if rec.kind == "scenario":
            if self.header is not None:
                raise TraceFormatError(line_no, "second scenario header")
            self.header = rec
            self._last_fields = None
            return
        if rec.kind != "step":
            return

        self.steps += 1
        if self._last_fields is None or rec.fields != self._last_fields:
            self._last_findings = self._step_findings(_step_view(rec, line_no))
            self._last_fields = rec.fields
        for rule, detail in self._last_findings:
            self._flag(rec, line_no, rule, detail)

    def _step_findings(self, step: StepView) -> List[Tuple[str, str]]:
        found = coupling_violations(step)
        if not self.fault_free or step.alarm_pending:
            return found
        if step.occupied == step.memory_empty:
            found.append(("oracle-equivalence", f"oracle occupied={int(step.occupied)} but memory={step.memory}"))
        if step.occupied and step.gate_cmd != "close":
            found.append(("oracle-gate", f"oracle occupied with gate_cmd={step.gate_cmd}"))
        if self.safe_layout and step.danger and step.gate_fb != "closed":
            found.append(("danger-gate", f"train in danger zone with gate_fb={step.gate_fb}"))
        return found


def verify_records(records: Iterable[Tuple[int, TraceRecord]]) -> List[Violation]:
    checker = TraceChecker()
    for line_no, rec in records:
        checker.feed(line_no, rec)
    logger.info("verified %d step records, %d violations", checker.steps, len(checker.violations))
    return checker.violations


def verify_run_records(records: Iterable[TraceRecord]) -> List[Violation]:
    """Check records straight from a run; line numbers are what the written
    trace file would show."""
    return verify_records(enumerate(records, start=1))


def verify_trace(path: str) -> List[Violation]:
    """Raises TraceFormatError on a malformed line, OSError when unreadable."""
    return verify_records(read_trace(path))
