"""
trace.py

EventTrace text format, one record per line, tab-separated:

    <time, 3 decimals>\t<kind>\t<key>=<value>\t<key>=<value>...

This format is the replay/verification contract between `run` and `verify`.
"""
import math
import os
import re
from typing import Iterable, List, NamedTuple, Optional, Tuple

KIND_RE = re.compile(r"^[a-z_]+$")
KEY_RE = re.compile(r"^[a-z_]+$")


class TraceFormatError(ValueError):
    def __init__(self, line: int, reason: str):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class TraceRecord(NamedTuple):
    time: float
    kind: str
    fields: Tuple[Tuple[str, str], ...] = ()

    def get(self, key: str, default: Optional[str] = None) -> Optional[str]:
        for k, v in self.fields:
            if k == key:
                return v
        return default


def record(time: float, kind: str, **fields) -> TraceRecord:
    return TraceRecord(time, kind, tuple((k, str(v)) for k, v in fields.items()))


def format_record(rec: TraceRecord) -> str:
    parts = [f"{rec.time:.3f}", rec.kind]
    parts.extend(f"{k}={v}" for k, v in rec.fields)
    return "\t".join(parts)


def format_trace(records: Iterable[TraceRecord]) -> str:
    return "".join(format_record(rec) + "\n" for rec in records)


def write_trace(records: Iterable[TraceRecord], path: str) -> None:
    out_dir = os.path.dirname(path)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    # newline="" keeps the file byte-identical across platforms
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(format_trace(records))


def parse_line(line: str, line_no: int) -> TraceRecord:
    parts = line.rstrip("\r\n").split("\t")
    if len(parts) < 2:
        raise TraceFormatError(line_no, "expected at least time and kind")
    try:
        time = float(parts[0])
    except ValueError:
        raise TraceFormatError(line_no, f"bad time {parts[0]!r}")
    if not math.isfinite(time) or time < 0:
        raise TraceFormatError(line_no, f"bad time {parts[0]!r}")
    kind = parts[1]
    if not KIND_RE.match(kind):
        raise TraceFormatError(line_no, f"bad record kind {kind!r}")
    fields = []
    for part in parts[2:]:
        key, sep, value = part.partition("=")
        if not sep or not KEY_RE.match(key):
            raise TraceFormatError(line_no, f"bad payload field {part!r}")
        fields.append((key, value))
    return TraceRecord(time, kind, tuple(fields))


def parse_trace(text: str) -> List[Tuple[int, TraceRecord]]:
    """Parse a whole trace; returns (line number, record) pairs. Blank lines
    are skipped."""
    parsed = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parsed.append((line_no, parse_line(line, line_no)))
    return parsed


def read_trace(path: str) -> List[Tuple[int, TraceRecord]]:
    with open(path, "r", encoding="utf-8") as f:
        return parse_trace(f.read())
