"""Command-line pipeline: map-build -> synth -> train -> behmap -> run.

Every verb reads defaults from an optional YAML config (``--config``,
keyed by verb name) with command-line flags taking precedence, and keeps
its inputs/outputs in one artifact directory (``--artifacts`` flag,
``SHAREDWALK_ARTIFACTS`` environment variable, or ``./artifacts``).
Verbs are idempotent given identical inputs and seeds.
"""

from __future__ import annotations

import json
import math
import os
import sys
from pathlib import Path

import click
import numpy as np
import yaml

from ..behmap import (
    BehaviourGrid,
    balanced_windows,
    reconstruction_windows,
    build_behavioural_map,
    generate_trajectories,
    load_behavioural_map,
    plan_mission,
    save_behavioural_map,
)
from ..geometry import Pose2
from ..neural import (
    CLASS_NAMES,
    TrainConfig,
    load_models,
    save_models,
    train_autoencoder,
    train_classifier,
)
from ..roadmap import build_prm, load_roadmap, save_roadmap
from ..worldmap import OccupancyGrid, load_map, make_cross_grid, make_empty_grid
from .experiment import (
    RunSetup,
    aggregate,
    load_telemetry,
    run_experiment,
)
from .policies import make_policy
from .service import SimSession, build_app

ENV_ARTIFACTS = "SHAREDWALK_ARTIFACTS"
CHANNEL_NAMES = ("x", "y", "cos", "sin", "kappa")

GRID_FILE = "grid.npz"
ROADMAP_FILE = "roadmap.json"
TRAJ_FILE = "trajectories.npz"
WINDOW_FILE = "windows.npz"
MODEL_FILE = "models.npz"
BEHMAP_FILE = "behmap.json"


def _fail(msg: str) -> "click.ClickException":
    return click.ClickException(str(msg))


def _load_yaml(path) -> dict:
    try:
        doc = yaml.safe_load(Path(path).read_text()) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise _fail(f"unreadable config {path}: {exc}")
    if not isinstance(doc, dict):
        raise _fail(f"config {path} must be a mapping")
    return doc


class Context:
    """Resolved config + artifact directory shared by all verbs."""

    def __init__(self, config: dict, artifacts: Path):
        self.config = config
        self.artifacts = artifacts

    def opt(self, verb: str, key: str, flag, default):
        """Flag > config-file value > default."""
        if flag is not None:
            return flag
        section = self.config.get(verb, {})
        if isinstance(section, dict) and key in section:
            return section[key]
        return default

    def path(self, name: str) -> Path:
        return self.artifacts / name

    def require(self, name: str, producer: str) -> Path:
        p = self.path(name)
        if not p.exists():
            raise _fail(f"missing {p}; run `sharedwalk {producer}` first")
        return p


def _save_grid(grid: OccupancyGrid, path) -> None:
    np.savez_compressed(
        path,
        cells=grid.cells,
        resolution=grid.resolution,
        origin=np.array([grid.origin.x, grid.origin.y, grid.origin.theta]),
    )


def _load_grid(path) -> OccupancyGrid:
    try:
        data = np.load(path)
        ox, oy, oth = data["origin"]
        return OccupancyGrid(data["cells"], float(data["resolution"]), Pose2(ox, oy, oth))
    except (OSError, KeyError, ValueError) as exc:
        raise _fail(f"unreadable grid cache {path}: {exc}")


def _parse_point(text, what: str) -> tuple[float, float]:
    if isinstance(text, (list, tuple)) and len(text) == 2:
        return float(text[0]), float(text[1])
    try:
        x, y = str(text).split(",")
        return float(x), float(y)
    except ValueError:
        raise _fail(f"{what} must be 'x,y', got {text!r}")


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="YAML config; flags override its values.")
@click.option("--artifacts", type=click.Path(), default=None,
              help=f"Artifact directory (or ${ENV_ARTIFACTS}).")
@click.pass_context
def main(ctx, config_path, artifacts):
    """Shared-authority walker pipeline."""
    config = _load_yaml(config_path) if config_path else {}
    root = artifacts or os.environ.get(ENV_ARTIFACTS) or config.get("artifacts") or "artifacts"
    ctx.obj = Context(config, Path(root))


@main.command("map-build")
@click.option("--kind", type=click.Choice(["cross", "empty", "file"]), default=None)
@click.option("--arm", type=float, default=None, help="Corridor arm length (cross).")
@click.option("--corridor", type=float, default=None, help="Corridor width (cross).")
@click.option("--size", type=float, default=None, help="Side length (empty).")
@click.option("--resolution", type=float, default=None)
@click.option("--image", type=click.Path(exists=True), default=None, help="Map raster (file).")
@click.option("--meta", type=click.Path(exists=True), default=None, help="Map metadata YAML (file).")
@click.option("--clearance", type=float, default=None)
@click.option("--seed", type=int, default=None)
@click.pass_obj
def map_build(obj: Context, kind, arm, corridor, size, resolution, image, meta, clearance, seed):
    """Load or synthesise the occupancy map and cache its roadmap."""
    kind = obj.opt("map-build", "kind", kind, "cross")
    resolution = obj.opt("map-build", "resolution", resolution, 0.05)
    clearance = obj.opt("map-build", "clearance", clearance, 0.3)
    seed = obj.opt("map-build", "seed", seed, 0)
    try:
        if kind == "cross":
            grid = make_cross_grid(
                arm=obj.opt("map-build", "arm", arm, 5.0),
                corridor=obj.opt("map-build", "corridor", corridor, 2.0),
                resolution=resolution,
            )
        elif kind == "empty":
            side = obj.opt("map-build", "size", size, 5.0)
            grid = make_empty_grid(side, side, resolution)
        else:
            image = obj.opt("map-build", "image", image, None)
            meta = obj.opt("map-build", "meta", meta, None)
            if not image or not meta:
                raise _fail("--image and --meta are required for kind=file")
            grid = load_map(image, meta)
        rm = build_prm(grid, clearance=clearance, seed=seed)
    except click.ClickException:
        raise
    except Exception as exc:
        raise _fail(exc)
    obj.artifacts.mkdir(parents=True, exist_ok=True)
    _save_grid(grid, obj.path(GRID_FILE))
    save_roadmap(rm, obj.path(ROADMAP_FILE))
    n_edges = sum(len(a) for a in rm.adjacency()) // 2
    click.echo(f"map: {grid.width}x{grid.height} cells @ {grid.resolution} m, "
               f"free area {grid.free_area():.1f} m^2")
    click.echo(f"roadmap: {len(rm.nodes)} nodes, {n_edges} edges -> {obj.path(ROADMAP_FILE)}")


@main.command()
@click.option("--count", type=int, default=None, help="Trajectories to generate.")
@click.option("--seed", type=int, default=None)
@click.pass_obj
def synth(obj: Context, count, seed):
    """Generate balanced trajectories and labelled training windows."""
    count = obj.opt("synth", "count", count, 200)
    seed = obj.opt("synth", "seed", seed, 0)
    grid = _load_grid(obj.require(GRID_FILE, "map-build"))
    rm = load_roadmap(obj.require(ROADMAP_FILE, "map-build"))
    bg = BehaviourGrid.covering(grid)
    try:
        paths = generate_trajectories(grid, rm, count, seed=seed, bg=bg)
        X, y = balanced_windows(paths, bg, seed=seed)
        X_ae = reconstruction_windows(paths)
    except Exception as exc:
        raise _fail(exc)
    np.savez_compressed(
        obj.path(TRAJ_FILE), **{f"path_{i}": p for i, p in enumerate(paths)}
    )
    np.savez_compressed(obj.path(WINDOW_FILE), X=X, y=y, X_ae=X_ae)
    hist = {CLASS_NAMES[c]: int(np.sum(y == c)) for c in range(3)}
    click.echo(f"trajectories: {len(paths)} -> {obj.path(TRAJ_FILE)}")
    click.echo(f"windows: {len(X)} balanced {hist} "
               f"+ {len(X_ae)} reconstruction -> {obj.path(WINDOW_FILE)}")


@main.command()
@click.option("--epochs", type=int, default=None)
@click.option("--head-epochs", type=int, default=None)
@click.option("--batch", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.pass_obj
def train(obj: Context, epochs, head_epochs, batch, seed):
    """Train the window autoencoder, then the behaviour classifier head."""
    epochs = obj.opt("train", "epochs", epochs, 300)
    head_epochs = obj.opt("train", "head_epochs", head_epochs, epochs)
    batch = obj.opt("train", "batch", batch, 64)
    seed = obj.opt("train", "seed", seed, 0)
    data = np.load(obj.require(WINDOW_FILE, "synth"))
    X, y = data["X"], data["y"]
    # the autoencoder trains on dense unlabelled windows when available;
    # older window files only carry the balanced labelled set
    X_ae = data["X_ae"] if "X_ae" in data.files else X
    try:
        enc, dec, history = train_autoencoder(
            X_ae, TrainConfig(epochs=epochs, batch_size=batch, seed=seed)
        )
        head, metrics = train_classifier(
            enc, X, y, TrainConfig(epochs=head_epochs, batch_size=batch, seed=seed)
        )
    except Exception as exc:
        raise _fail(exc)
    save_models(obj.path(MODEL_FILE), encoder=enc, decoder=dec, classifier=head)
    click.echo("reconstruction RMSE (validation, per channel)")
    click.echo("  " + "  ".join(
        f"{n}: {v:.4f}" for n, v in zip(CHANNEL_NAMES, history["channel_rmse"])
    ))
    click.echo("classification accuracy (validation, per class)")
    click.echo("  " + "  ".join(
        f"{n}: {metrics['per_class_accuracy'][n] * 100:.1f}%" for n in CLASS_NAMES
    ))
    click.echo(f"  average: {metrics['average_accuracy'] * 100:.1f}%")
    click.echo(f"trained in {history['train_seconds']:.1f} s -> {obj.path(MODEL_FILE)}")


@main.command("behmap")
@click.pass_obj
def behmap_cmd(obj: Context):
    """Build and export the behavioural map from trained models."""
    grid = _load_grid(obj.require(GRID_FILE, "map-build"))
    data = np.load(obj.require(TRAJ_FILE, "synth"))
    paths = [data[k] for k in sorted(data.files, key=lambda s: int(s.split("_")[1]))]
    models = _load_models(obj)
    bg = BehaviourGrid.covering(grid)
    try:
        bm = build_behavioural_map(paths, models["encoder"], models["classifier"], bg)
    except Exception as exc:
        raise _fail(exc)
    save_behavioural_map(bm, obj.path(BEHMAP_FILE))
    click.echo(f"behavioural map: {len(bm.cells)} cells, "
               f"{bm.total_members()} member windows -> {obj.path(BEHMAP_FILE)}")


def _load_models(obj: Context) -> dict:
    try:
        return load_models(obj.require(MODEL_FILE, "train"))
    except click.ClickException:
        raise
    except Exception as exc:
        raise _fail(exc)


def _build_mission(obj: Context, p0, pf, verb: str):
    p0 = obj.opt(verb, "p0", p0, None)
    pf = obj.opt(verb, "pf", pf, None)
    if p0 is None or pf is None:
        raise _fail("--p0 and --pf are required (or set them in the config)")
    p0 = _parse_point(p0, "--p0")
    pf = _parse_point(pf, "--pf")
    grid = _load_grid(obj.require(GRID_FILE, "map-build"))
    rm = load_roadmap(obj.require(ROADMAP_FILE, "map-build"))
    bm = load_behavioural_map(obj.require(BEHMAP_FILE, "behmap"))
    try:
        mission = plan_mission(grid, rm, bm, p0, pf)
    except Exception as exc:
        raise _fail(exc)
    return grid, mission


@main.command()
@click.option("--policy", "policy_kind", type=click.Choice(["compliant", "rough", "adversarial"]), default=None)
@click.option("--p0", default=None, help="Mission start 'x,y'.")
@click.option("--pf", default=None, help="Mission goal 'x,y'.")
@click.option("--duration", type=float, default=None)
@click.option("--speed", type=float, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--noise", type=float, default=None, help="Localisation noise sigma (m).")
@click.option("--no-disengage", is_flag=True, default=False,
              help="Disable the opposition safety for this run.")
@click.option("--out", default=None, help="Run name under <artifacts>/runs/.")
@click.pass_obj
def run(obj: Context, policy_kind, p0, pf, duration, speed, seed, noise, no_disengage, out):
    """Execute one closed-loop experiment; exit status reflects goal-reached."""
    policy_kind = obj.opt("run", "policy", policy_kind, "compliant")
    duration = obj.opt("run", "duration", duration, 30.0)
    speed = obj.opt("run", "speed", speed, 0.8)
    seed = obj.opt("run", "seed", seed, 0)
    noise = obj.opt("run", "noise", noise, 0.0)
    out = obj.opt("run", "out", out, policy_kind)
    _, mission = _build_mission(obj, p0, pf, "run")
    models = _load_models(obj)
    setup = RunSetup(
        mission=mission,
        encoder=models["encoder"],
        head=models["classifier"],
        policy=make_policy(policy_kind, seed=seed, v=speed),
        duration=duration,
        seed=seed,
        localisation_noise=noise,
        disengage_enabled=not no_disengage,
    )
    out_dir = obj.artifacts / "runs" / out
    report = run_experiment(setup, out_dir)
    click.echo(f"run: {report.steps} steps, goal_reached={report.goal_reached}")
    for k, v in sorted(report.aggregates.items()):
        click.echo(f"  {k}: {v:.6g}" if isinstance(v, float) else f"  {k}: {v}")
    click.echo(f"telemetry -> {report.telemetry_path}")
    if not report.goal_reached:
        sys.exit(1)


@main.command()
@click.option("--p0", default=None, help="Mission start 'x,y'.")
@click.option("--pf", default=None, help="Mission goal 'x,y'.")
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
@click.option("--assets", type=click.Path(), default=None, help="Static cockpit bundle dir.")
@click.option("--duration", type=float, default=None)
@click.pass_obj
def serve(obj: Context, p0, pf, host, port, assets, duration):
    """Serve the live telemetry/command endpoint and cockpit assets."""
    import uvicorn

    host = obj.opt("serve", "host", host, "127.0.0.1")
    port = obj.opt("serve", "port", port, 8701)
    assets = obj.opt("serve", "assets", assets, None)
    duration = obj.opt("serve", "duration", duration, 600.0)
    _, mission = _build_mission(obj, p0, pf, "serve")
    models = _load_models(obj)
    setup = RunSetup(
        mission=mission,
        encoder=models["encoder"],
        head=models["classifier"],
        policy=make_policy("compliant"),  # replaced by the session's driver feed
        duration=duration,
    )
    session = SimSession(setup)
    app = build_app(session, assets_dir=assets)
    click.echo(f"serving ws://{host}:{port}/ws")
    uvicorn.run(app, host=host, port=port, log_level="warning")


@main.command()
@click.option("--telemetry", type=click.Path(exists=True), required=True)
@click.pass_obj
def report(obj: Context, telemetry):
    """Re-aggregate a telemetry CSV and print the scenario narrative markers."""
    rows = load_telemetry(telemetry)
    if not rows:
        raise _fail(f"{telemetry} holds no telemetry rows")
    agg = aggregate(rows)
    click.echo(json.dumps(agg, indent=2, sort_keys=True))
    scored = [r for r in rows if not math.isnan(r["eps_l"])]
    if scored:
        dip = min(scored, key=lambda r: r["eps_l"])
        after = [r for r in scored if r["time"] > dip["time"]]
        peak = max(after, key=lambda r: r["eps_l"]) if after else dip
        click.echo(f"left-confidence dip: {dip['eps_l']:.3f} at t={dip['time']:.2f} s")
        click.echo(f"recovery: {peak['eps_l']:.3f} at t={peak['time']:.2f} s")
    engaged = [r for r in rows if r["engaged"]]
    if engaged:
        tau = max(engaged, key=lambda r: abs(r["tau_r"]) + abs(r["tau_l"]))
        click.echo(
            f"peak intervention: |tau| {0.5 * (abs(tau['tau_r']) + abs(tau['tau_l'])):.2f} "
            f"N*m at t={tau['time']:.2f} s"
        )


if __name__ == "__main__":
    main()
