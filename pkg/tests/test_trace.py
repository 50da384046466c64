import pytest

from modules.trace import TraceFormatError, format_record, parse_trace, read_trace, record, write_trace


def test_record_line_format():
    rec = record(1.23456, "sensor", train=7, phase="tail", sensor="B0")
    assert format_record(rec) == "1.235\tsensor\ttrain=7\tphase=tail\tsensor=B0"


def test_written_trace_reads_back(tmp_path):
    records = [record(0.0, "scenario", tracks=1), record(0.1, "step", gate_cmd="open")]
    path = tmp_path / "out" / "run.trace"
    write_trace(records, str(path))
    parsed = read_trace(str(path))
    assert [line_no for line_no, _ in parsed] == [1, 2]
    assert parsed[1][1].get("gate_cmd") == "open"
    assert parsed[1][1].time == pytest.approx(0.1)


def test_blank_lines_skipped():
    assert [n for n, _ in parse_trace("\n0.000\tstep\n\n")] == [2]


@pytest.mark.parametrize("line", [
    "0.000",
    "abc\tstep",
    "-1.000\tstep",
    "0.000\tStep",
    "0.000\tstep\tgate_cmd",
    "nan\tstep",
])
def test_malformed_lines(line):
    with pytest.raises(TraceFormatError) as err:
        parse_trace("0.000\tscenario\n" + line + "\n")
    assert err.value.line == 2
