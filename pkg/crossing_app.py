"""
crossing_app.py

Command-line driver for the grade-crossing simulator.

    python crossing_app.py run scenarios/single_train.ini -o out/single.trace
    python crossing_app.py batch scenarios/batch_template.ini --seeds 1000 -o out/report.txt
    python crossing_app.py verify out/single.trace
    python crossing_app.py --faulty-controller=always-open run scenarios/vehicle_conflict.ini

Exit codes:
    run     0 clean, 1 parse/IO error, 2 collision, 3 alarm without collision
    batch   0 all seeds pass, 1 parse/IO error, 2 any collision, 3 violations only
    verify  0 consistent, 1 malformed line/IO error, 2 violation
"""
import argparse
import logging
import os
import sys

# -------------------- INITIAL SETUP --------------------
project_root = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, project_root)

from modules.batch_Runner import run_batch
from modules.faulty_Controllers import FAULTY_CONTROLLERS, get_controller_logic
from modules.scenario_Parser import ParseError, load_scenario
from modules.settings import configure_logging
from modules.sim import ScenarioInvalid, run_scenario
from modules.trace import TraceFormatError, write_trace
from modules.trace_Verifier import verify_trace

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_COLLISION = 2
EXIT_VIOLATION = 2
EXIT_ALARM = 3
EXIT_BATCH_VIOLATION = 3


def _error(message: str) -> int:
    print(f"[ERROR] {message}", file=sys.stderr)
    return EXIT_ERROR


def _load(path: str):
    try:
        return load_scenario(path), None
    except ParseError as e:
        return None, f"{path}:{e.line}: {e.reason}"
    except (OSError, UnicodeDecodeError) as e:
        return None, f"cannot read scenario {path}: {e}"


def default_trace_path(scenario_path: str) -> str:
    return os.path.splitext(scenario_path)[0] + ".trace"


# -------------------- COMMANDS --------------------
def cmd_run(scenario_path: str, trace_path: str = None, faulty: str = None) -> int:
    try:
        logic = get_controller_logic(faulty)
    except ValueError as e:
        return _error(str(e))
    loaded, problem = _load(scenario_path)
    if problem:
        return _error(problem)
    scenario, _ = loaded

    try:
        result = run_scenario(scenario, logic)
    except ScenarioInvalid as e:
        return _error(f"{scenario_path}: {e.reason}")

    trace_path = trace_path or default_trace_path(scenario_path)
    try:
        write_trace(result.records, trace_path)
    except OSError as e:
        return _error(f"cannot write trace {trace_path}: {e}")

    anomalies = ",".join(f"{k}:{v}" for k, v in sorted(result.anomalies.items())) or "none"
    print(f"[RUN] controller={result.controller_name} trace={trace_path}")
    print(
        f"[RUN] collisions={len(result.collisions)} trains_served={result.trains_served}/{len(scenario.trains)} "
        f"gate_closed_s={result.gate_closed_s:.1f} anomalies={anomalies} "
        f"alarms={','.join(result.alarms) or 'none'}"
    )
    for collision in result.collisions:
        print(f"[RUN] collision t={collision.time:.3f} vehicle={collision.vehicle} "
              f"train={collision.train} gate_pos={collision.gate_position:.4f}")

    if result.collisions:
        return EXIT_COLLISION
    if result.alarms:
        return EXIT_ALARM
    return EXIT_OK


def cmd_batch(template_path: str, n_seeds: int, report_path: str = None,
              faulty: str = None, random_layout: bool = False) -> int:
    if n_seeds < 1:
        return _error(f"--seeds must be >= 1, got {n_seeds}")
    try:
        logic = get_controller_logic(faulty)
    except ValueError as e:
        return _error(str(e))
    loaded, problem = _load(template_path)
    if problem:
        return _error(problem)
    template, ranges = loaded

    report = run_batch(template, n_seeds, ranges, logic, random_layout=random_layout)
    text = report.format_report()
    if report_path:
        out_dir = os.path.dirname(report_path)
        try:
            if out_dir:
                os.makedirs(out_dir, exist_ok=True)
            with open(report_path, "w", encoding="utf-8", newline="") as f:
                f.write(text)
        except OSError as e:
            return _error(f"cannot write report {report_path}: {e}")
    else:
        sys.stdout.write(text)

    reopen = report.max_reopen_latency_s
    print(
        f"[BATCH] controller={report.controller} seeds={n_seeds} collisions={report.total_collisions} "
        f"violating_seeds={report.violating_seeds} "
        f"max_reopen_latency_s={'n/a' if reopen is None else f'{reopen:.3f}'}"
    )
    return report.exit_code


def cmd_verify(trace_path: str) -> int:
    try:
        violations = verify_trace(trace_path)
    except TraceFormatError as e:
        return _error(f"{trace_path}:{e.line}: {e.reason}")
    except (OSError, UnicodeDecodeError) as e:
        return _error(f"cannot read trace {trace_path}: {e}")

    if violations:
        print(f"[VERIFY] FAIL {len(violations)} violation(s); first at {violations[0]}")
        return EXIT_VIOLATION
    print(f"[VERIFY] OK {trace_path}")
    return EXIT_OK


# -------------------- ARGUMENTS --------------------
def build_parser() -> argparse.ArgumentParser:
    stub_help = f"replace the controller with a broken stub: {', '.join(sorted(FAULTY_CONTROLLERS))}"
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--faulty-controller", default=argparse.SUPPRESS, metavar="STUB", help=stub_help)

    p = argparse.ArgumentParser(description="Radio-based railway grade-crossing simulator.")
    p.add_argument("--faulty-controller", default=None, metavar="STUB", help=stub_help)
    sub = p.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", parents=[common], help="Simulate one scenario and write its event trace.")
    run_p.add_argument("scenario", help="Path to the scenario file.")
    run_p.add_argument("--output", "-o", default=None, help="Trace path (default: scenario path with .trace).")

    batch_p = sub.add_parser("batch", parents=[common], help="Run a scenario template over many seeds.")
    batch_p.add_argument("scenario", help="Path to the scenario template.")
    batch_p.add_argument("--seeds", type=int, required=True, help="Number of seeds, run as 0..N-1.")
    batch_p.add_argument("--output", "-o", default=None, help="Report path (default: stdout).")
    batch_p.add_argument("--random-layout", action="store_true",
                         help="Generate a random safe world per seed, keeping the template's gate, channel and controller.")

    verify_p = sub.add_parser("verify", parents=[common], help="Check an event trace against the controller invariants.")
    verify_p.add_argument("trace", help="Path to the trace file.")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging()
    if args.command == "run":
        return cmd_run(args.scenario, args.output, args.faulty_controller)
    if args.command == "batch":
        return cmd_batch(args.scenario, args.seeds, args.output, args.faulty_controller, args.random_layout)
    return cmd_verify(args.trace)


if __name__ == "__main__":
    sys.exit(main())
