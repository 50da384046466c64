"""
batch_Runner.py

Runs one scenario template across seeds 0..n-1. Each seed sets the channel
seed and drives its own numpy Generator that jitters the template trains
within the ranges of the [batch] section, or builds a whole random world
when random_layout is set. Every run is also replayed through the trace
checker so a seed fails on a collision or on any invariant violation.

Seeds are independent, so they run in a process pool and are merged back in
seed order; the report is identical whatever the worker count. A single
worker runs the seeds in-process.
"""
import logging
import math
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from .controller import REFERENCE_LOGIC, ControllerLogic, Direction
from .faulty_Controllers import get_controller_logic
from .scenario_Parser import BatchRanges
from .settings import get_settings
from .sim import (
    RoadVehicleSpec,
    RunResult,
    Scenario,
    TrackLayout,
    TrainPath,
    TrainSpec,
    required_duration,
    run_scenario,
)
from .trace_Verifier import Violation, verify_run_records

logger = logging.getLogger(__name__)

# random world bounds
MAX_TRACKS = 4
MAX_TRAINS = 6
SPEED_RANGE_MPS = (10.0, 40.0)
LENGTH_RANGE_M = (50.0, 400.0)
HALF_WIDTH_RANGE_M = (4.0, 15.0)
MAX_VEHICLES = 8
# sensor offset is at least this speed times the gate transit, plus half width
DESIGN_SPEED_MPS = 40.0
# spacing between consecutive trains on one track, after the earlier one clears
TRACK_HEADWAY_RANGE_S = (1.0, 30.0)


@dataclass
class SeedOutcome:
    """What the report needs from one seed; the trace itself stays in the worker."""
    seed: int
    trains: int
    collisions: int
    violations: List[Violation] = field(default_factory=list)
    trains_served: int = 0
    anomalies: Dict[str, int] = field(default_factory=dict)
    alarms: int = 0
    gate_closed_s: float = 0.0
    max_reopen_s: Optional[float] = None
    censored: int = 0

    @classmethod
    def from_run(cls, seed: int, result: RunResult, violations: List[Violation]) -> "SeedOutcome":
        return cls(
            seed=seed,
            trains=len(result.scenario.trains),
            collisions=len(result.collisions),
            violations=violations,
            trains_served=result.trains_served,
            anomalies=dict(result.anomalies),
            alarms=len(result.alarms),
            gate_closed_s=result.gate_closed_s,
            max_reopen_s=result.max_reopen_latency_s,
            censored=result.censored_reopens,
        )

    @property
    def passed(self) -> bool:
        return self.collisions == 0 and not self.violations

    @property
    def verdict(self) -> str:
        if self.collisions:
            return "collision"
        return "violation" if self.violations else "pass"


def randomize_scenario(template: Scenario, seed: int, ranges: BatchRanges) -> Scenario:
    """Template trains with speed, length and entry time redrawn for this seed.
    Draw order is fixed so a seed always produces the same scenario."""
    rng = np.random.default_rng(seed)
    trains = []
    for train in template.trains:
        speed = train.speed_mps
        length = train.length_m
        entry = train.entry_time_s
        if ranges.speed_mps is not None:
            speed = float(rng.uniform(*ranges.speed_mps))
        if ranges.length_m is not None:
            length = float(rng.uniform(*ranges.length_m))
        if ranges.entry_jitter_s > 0:
            entry += float(rng.uniform(0.0, ranges.entry_jitter_s))
        trains.append(replace(train, speed_mps=speed, length_m=length, entry_time_s=entry))
    trains = tuple(trains)
    duration = max(template.duration_s, required_duration(template.layout, trains, template.gate_transit_s))
    return replace(template, trains=trains, channel=replace(template.channel, seed=seed), duration_s=duration)


def random_scenario(seed: int, template: Scenario) -> Scenario:
    """A random world around the template's gate, channel and controller:
    1-4 tracks, 1-6 trains that may overlap across tracks, obedient vehicles
    whose crossing is never longer than the gate transit."""
    rng = np.random.default_rng(seed)
    transit = template.gate_transit_s
    track_count = int(rng.integers(1, MAX_TRACKS + 1))
    half_width = float(rng.uniform(*HALF_WIDTH_RANGE_M))
    offset = DESIGN_SPEED_MPS * transit + half_width + float(rng.uniform(0.0, 50.0))
    layout = TrackLayout(track_count, offset, half_width)

    n_trains = int(rng.integers(1, MAX_TRAINS + 1))
    ids = rng.choice(0x10000, size=n_trains, replace=False)
    free_at = [0.0] * track_count
    trains = []
    for train_id in ids:
        track = int(rng.integers(0, track_count))
        direction = Direction.A_TO_B if rng.random() < 0.5 else Direction.B_TO_A
        spec = TrainSpec(
            id=int(train_id),
            track=track,
            direction=direction,
            speed_mps=float(rng.uniform(*SPEED_RANGE_MPS)),
            length_m=float(rng.uniform(*LENGTH_RANGE_M)),
            entry_time_s=free_at[track] + float(rng.uniform(*TRACK_HEADWAY_RANGE_S)),
        )
        free_at[track] = TrainPath(spec, layout).leaves_window
        trains.append(spec)
    trains = tuple(trains)

    duration = required_duration(layout, trains, transit)
    vehicles = tuple(
        RoadVehicleSpec(
            arrival_time_s=float(rng.uniform(0.0, duration)),
            crossing_transit_s=float(rng.uniform(0.1 * transit, transit)),
        )
        for _ in range(int(rng.integers(0, MAX_VEHICLES + 1)))
    )
    return replace(
        template,
        layout=layout,
        trains=trains,
        vehicles=vehicles,
        channel=replace(template.channel, seed=seed),
        duration_s=duration,
    )


def run_seed(template: Scenario, seed: int, ranges: BatchRanges = BatchRanges(),
             logic: ControllerLogic = REFERENCE_LOGIC, random_layout: bool = False) -> SeedOutcome:
    scenario = random_scenario(seed, template) if random_layout else randomize_scenario(template, seed, ranges)
    result = run_scenario(scenario, logic)
    outcome = SeedOutcome.from_run(seed, result, verify_run_records(result.records))
    logger.info("seed %d: %s (collisions=%d violations=%d)",
                seed, outcome.verdict, outcome.collisions, len(outcome.violations))
    return outcome


def _seed_job(template: Scenario, seed: int, ranges: BatchRanges, logic_name: str, random_layout: bool) -> SeedOutcome:
    # controller logic holds closures, so workers look it up by name
    return run_seed(template, seed, ranges, get_controller_logic(logic_name), random_layout)


@dataclass
class BatchReport:
    controller: str
    outcomes: List[SeedOutcome]

    def frame(self) -> pd.DataFrame:
        rows = []
        for o in self.outcomes:
            rows.append({
                "seed": o.seed,
                "verdict": o.verdict,
                "collisions": o.collisions,
                "violations": len(o.violations),
                "trains": o.trains,
                "served": o.trains_served,
                "anomalies": sum(o.anomalies.values()),
                "alarms": o.alarms,
                "gate_closed_s": o.gate_closed_s,
                "max_reopen_s": o.max_reopen_s if o.max_reopen_s is not None else np.nan,
                "censored": o.censored,
            })
        return pd.DataFrame(rows)

    def anomaly_histogram(self) -> pd.Series:
        counts = pd.DataFrame([o.anomalies for o in self.outcomes])
        if counts.empty:
            return pd.Series(dtype=int)
        return counts.fillna(0).sum().astype(int).sort_index()

    @property
    def total_collisions(self) -> int:
        return int(self.frame()["collisions"].sum())

    @property
    def violating_seeds(self) -> int:
        return int((self.frame()["violations"] > 0).sum())

    @property
    def max_reopen_latency_s(self) -> Optional[float]:
        value = self.frame()["max_reopen_s"].max()
        return None if value is None or math.isnan(value) else float(value)

    @property
    def exit_code(self) -> int:
        if self.total_collisions:
            return 2
        return 3 if self.violating_seeds else 0

    def format_report(self) -> str:
        df = self.frame()
        lines = []
        for row in df.itertuples(index=False):
            reopen = "n/a" if math.isnan(row.max_reopen_s) else f"{row.max_reopen_s:.3f}"
            lines.append(
                f"seed={row.seed}\tverdict={row.verdict}\tcollisions={row.collisions}"
                f"\tviolations={row.violations}\tserved={row.served}/{row.trains}"
                f"\tanomalies={row.anomalies}\tmax_reopen_s={reopen}"
            )
        first = next((o for o in self.outcomes if o.violations), None)
        reopen = self.max_reopen_latency_s
        lines.append("# aggregate")
        lines.append(f"controller={self.controller}")
        lines.append(f"seeds={len(df)}")
        lines.append(f"passed={int((df['verdict'] == 'pass').sum())}")
        lines.append(f"collisions={self.total_collisions}")
        lines.append(f"violating_seeds={self.violating_seeds}")
        lines.append(f"max_reopen_latency_s={'n/a' if reopen is None else f'{reopen:.3f}'}")
        lines.append(f"censored_reopens={int(df['censored'].sum())}")
        lines.append(f"mean_gate_closed_s={df['gate_closed_s'].mean():.3f}")
        if first is not None:
            lines.append(f"first_violation=seed {first.seed}: {first.violations[0]}")
        for kind, count in self.anomaly_histogram().items():
            lines.append(f"anomaly\t{kind}={count}")
        return "\n".join(lines) + "\n"


def run_batch(template: Scenario, n_seeds: int, ranges: BatchRanges = BatchRanges(),
              logic: ControllerLogic = REFERENCE_LOGIC, random_layout: bool = False,
              workers: Optional[int] = None) -> BatchReport:
    if n_seeds < 1:
        raise ValueError(f"n_seeds must be >= 1, got {n_seeds}")
    workers = workers or get_settings().batch_workers
    logger.info("batch: %d seeds on %d workers, controller=%s", n_seeds, workers, logic.name)

    if workers == 1:
        return BatchReport(logic.name, [run_seed(template, seed, ranges, logic, random_layout) for seed in range(n_seeds)])

    outcomes: List[Optional[SeedOutcome]] = [None] * n_seeds
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = {
            pool.submit(_seed_job, template, seed, ranges, logic.name, random_layout): seed
            for seed in range(n_seeds)
        }
        for fut in as_completed(futures):
            outcomes[futures[fut]] = fut.result()
    return BatchReport(logic.name, outcomes)
