"""Closed-loop experiment runner with telemetry and reproducible reports.

A run advances the plant at a fixed rate under a scripted (or external)
human policy plus the shared-authority controller, records one telemetry
row per step, and aggregates the run into a report whose numbers are
recomputable from the CSV alone.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..behmap import Mission
from ..control import (
    ControlConfig,
    ControlMemory,
    DisengageState,
    WalkerState,
    control_step,
    step_plant,
    update_disengage,
)
from ..features import PathReconstructor, window
from ..geometry import Pose2
from ..neural import Sequential
from ..worldmap import cell_of, MapError
from .policies import HumanPolicy, ReplayPolicy

__all__ = [
    "RunSetup",
    "RunReport",
    "Simulation",
    "TELEMETRY_COLUMNS",
    "run_experiment",
    "aggregate",
    "load_telemetry",
    "replay_policy_from_telemetry",
    "write_report",
]

TELEMETRY_COLUMNS = [
    "time",
    "x",
    "y",
    "theta",
    "v",
    "omega",
    "alpha_r",
    "alpha_l",
    "eps_l",
    "eps_r",
    "eps_s",
    "eps_hat",
    "lambda",
    "a",
    "b",
    "tau_alpha_r",
    "tau_alpha_l",
    "tau_beta_r",
    "tau_beta_l",
    "tau_r",
    "tau_l",
    "tau_h_r",
    "tau_h_l",
    "engaged",
]

WINDOW_N = 12
DELTA_S = 0.1


@dataclass
class RunSetup:
    """Everything a closed-loop run needs, in memory."""

    mission: Mission
    encoder: Sequential
    head: Sequential
    policy: HumanPolicy
    control: ControlConfig = field(default_factory=ControlConfig)
    duration: float = 30.0
    seed: int = 0
    localisation_noise: float = 0.0  # sigma in metres on the feature-side pose
    danger_cells: frozenset = frozenset()
    goal_radius: float = 0.3
    start_pose: Pose2 | None = None
    # scenarios probing torque sharing disable the opposition safety so a
    # deliberately fighting user cannot simply switch the robot off
    disengage_enabled: bool = True


@dataclass
class RunReport:
    telemetry_path: str | None
    aggregates: dict
    goal_reached: bool
    steps: int
    events: list


def _start_state(setup: RunSetup) -> WalkerState:
    if setup.start_pose is not None:
        return WalkerState(setup.start_pose)
    s0 = setup.mission.samples[0]
    return WalkerState(Pose2(float(s0[1]), float(s0[2]), float(s0[3])))


class Simulation:
    """Single-step closed-loop engine shared by run_loop and the live service.

    Each ``step()`` call advances the plant one control period and returns
    the telemetry row for that step; ``done`` turns true at the goal or
    when the configured duration is exhausted.
    """

    def __init__(self, setup: RunSetup):
        self.setup = setup
        self.cfg = setup.control
        self.state = _start_state(setup)
        self.memory = ControlMemory()
        self.ds = DisengageState()
        self.events: list[dict] = []
        self.goal = False
        self._rng = np.random.default_rng(setup.seed)
        self._recon = PathReconstructor(DELTA_S)
        self._feature_rows: list[np.ndarray] = []
        self._k = 0
        self._steps = int(round(setup.duration / self.cfg.dt))
        self._feature_rows.extend(self._recon.push_pose(*self._noisy(self.state.pose)))

    def _noisy(self, p: Pose2) -> tuple[float, float, float]:
        # draws are consumed every step regardless so the stream of window
        # emission times is a pure function of the seed
        nx, ny = self._rng.normal(0.0, 1.0, 2)
        if self.setup.localisation_noise > 0.0:
            return (
                p.x + self.setup.localisation_noise * nx,
                p.y + self.setup.localisation_noise * ny,
                p.theta,
            )
        return (p.x, p.y, p.theta)

    @property
    def time(self) -> float:
        return self._k * self.cfg.dt

    @property
    def done(self) -> bool:
        return self.goal or self._k >= self._steps

    def step(self) -> dict:
        setup, cfg, mission = self.setup, self.cfg, self.setup.mission
        dt = cfg.dt
        t = self.time
        human = setup.policy(t, self.state, mission)
        if len(self._feature_rows) >= WINDOW_N:
            live = window(
                np.vstack(self._feature_rows[-WINDOW_N:]), WINDOW_N - 1, WINDOW_N
            )
        else:
            live = None
        cmd, cv, gains = control_step(
            mission,
            self.state,
            live,
            setup.encoder,
            setup.head,
            cfg,
            dt=dt,
            memory=self.memory,
            disengaged=self.ds.active,
        )
        try:
            cell = cell_of(mission.bg, (self.state.pose.x, self.state.pose.y))
        except MapError:
            cell = None
        danger = cell in setup.danger_cells
        was_active = self.ds.active
        if setup.disengage_enabled:
            self.ds = update_disengage(
                self.ds, (human[1], human[2]), cmd, dt, danger, cfg
            )
        if self.ds.active != was_active:
            self.events.append(
                {"time": t, "event": "disengage" if self.ds.active else "re-engage"}
            )
        self.state = step_plant(self.state, human, cmd, dt, cfg)
        self._feature_rows.extend(self._recon.push_pose(*self._noisy(self.state.pose)))

        ref_cls, _ = mission.references[
            mission.cell_at(self.state.pose.x, self.state.pose.y)
        ]
        eps_hat = (
            [cv.left, cv.right, cv.straight][ref_cls] if cv is not None else math.nan
        )
        row = {
            "time": t,
            "x": self.state.pose.x,
            "y": self.state.pose.y,
            "theta": self.state.pose.theta,
            "v": self.state.v,
            "omega": self.state.omega,
            "alpha_r": self.state.alpha_r,
            "alpha_l": self.state.alpha_l,
            "eps_l": cv.left if cv is not None else math.nan,
            "eps_r": cv.right if cv is not None else math.nan,
            "eps_s": cv.straight if cv is not None else math.nan,
            "eps_hat": eps_hat,
            "lambda": gains.lam,
            "a": gains.a,
            "b": gains.b,
            "tau_alpha_r": cmd.tau_alpha_r,
            "tau_alpha_l": cmd.tau_alpha_l,
            "tau_beta_r": cmd.tau_beta_r,
            "tau_beta_l": cmd.tau_beta_l,
            "tau_r": cmd.tau_r,
            "tau_l": cmd.tau_l,
            "tau_h_r": human[1],
            "tau_h_l": human[2],
            "engaged": int(cmd.engaged),
        }
        self._k += 1
        if (
            math.dist((self.state.pose.x, self.state.pose.y), mission.pf)
            <= setup.goal_radius
        ):
            self.goal = True
        return row


def run_loop(setup: RunSetup) -> tuple[list[dict], list[dict], bool]:
    """Execute the run; returns (telemetry rows, events, goal_reached)."""
    sim = Simulation(setup)
    rows: list[dict] = []
    while not sim.done:
        rows.append(sim.step())
    return rows, sim.events, sim.goal


def aggregate(rows: list[dict], samples: np.ndarray | None = None) -> dict:
    """Run aggregates, summed in row order so recomputation is bit-identical."""
    if not rows:
        return {"steps": 0}
    abs_tau = [0.5 * (abs(r["tau_r"]) + abs(r["tau_l"])) for r in rows]
    eps = [r["eps_hat"] for r in rows if not math.isnan(r["eps_hat"])]
    out = {
        "steps": len(rows),
        "mean_abs_tau": sum(abs_tau) / len(abs_tau),
        "max_abs_tau": max(abs_tau),
        "mean_eps_hat": (sum(eps) / len(eps)) if eps else math.nan,
        "disengaged_steps": sum(1 for r in rows if not r["engaged"]),
    }
    if samples is not None:
        dev = [
            float(np.min(np.hypot(samples[:, 1] - r["x"], samples[:, 2] - r["y"])))
            for r in rows
        ]
        out["mean_path_deviation"] = sum(dev) / len(dev)
        out["max_path_deviation"] = max(dev)
    return out


def write_telemetry(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TELEMETRY_COLUMNS)
        for r in rows:
            w.writerow([repr(r[c]) if c != "engaged" else r[c] for c in TELEMETRY_COLUMNS])


def load_telemetry(path) -> list[dict]:
    out = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            row = {c: float(rec[c]) for c in TELEMETRY_COLUMNS if c != "engaged"}
            row["engaged"] = int(rec["engaged"])
            out.append(row)
    return out


def replay_policy_from_telemetry(rows: list[dict]) -> ReplayPolicy:
    return ReplayPolicy([(r["v"], r["tau_h_r"], r["tau_h_l"]) for r in rows])


def write_report(report: RunReport, path) -> None:
    doc = {
        "goal_reached": report.goal_reached,
        "steps": report.steps,
        "aggregates": report.aggregates,
        "events": report.events,
        "telemetry": report.telemetry_path,
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2))


def run_experiment(setup: RunSetup, out_dir=None) -> RunReport:
    """Run to goal or duration; optionally persist telemetry CSV + report JSON."""
    rows, events, goal = run_loop(setup)
    telemetry_path = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        telemetry_path = str(out / "telemetry.csv")
        write_telemetry(rows, telemetry_path)
    report = RunReport(
        telemetry_path=telemetry_path,
        aggregates=aggregate(rows, setup.mission.samples),
        goal_reached=goal,
        steps=len(rows),
        events=events,
    )
    if out_dir is not None:
        write_report(report, Path(out_dir) / "report.json")
    return report
