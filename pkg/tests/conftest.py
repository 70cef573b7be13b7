"""Session-scoped full-scale pipeline artifacts for the acceptance suite.

Building the 1800-path dataset and training both networks takes minutes,
so the results are cached on disk under ``tests/.acceptance_cache`` keyed
by the generating settings; delete that directory to force a clean
rebuild.  All timings asserted by the acceptance criteria are recorded at
the moment the work is actually performed and cached alongside.
"""

import hashlib
import json
import time
from pathlib import Path

import numpy as np
import pytest

CACHE_ROOT = Path(__file__).parent / ".acceptance_cache"

PIPELINE_SETTINGS = {
    "arm": 5.0,
    "corridor": 2.0,
    "resolution": 0.05,
    "clearance": 0.3,
    "prm_seed": 11,
    "count": 1800,
    "synth_seed": 7,
    # cache-bust markers for code constants the trajectories depend on:
    # (wander amplitude, wavelength range, waypoint spacing, kappa cap)
    "synth_shape": [0.28, 4.0, 7.0, 1.6, 2.0],
    "ae_stride": 10,
    "ae_epochs": 300,
    "head_epochs": 150,
    "train_seed": 0,
    "head_seeds": [0, 1, 2, 3, 4],
}


def _cache_dir() -> Path:
    key = hashlib.sha256(
        json.dumps(PIPELINE_SETTINGS, sort_keys=True).encode()
    ).hexdigest()[:12]
    d = CACHE_ROOT / key
    d.mkdir(parents=True, exist_ok=True)
    return d


@pytest.fixture(scope="session")
def pipeline():
    """Cross-map grid, roadmap, 1800 paths, balanced windows, trained nets."""
    from sharedwalk.behmap import (
        balanced_windows,
        generate_trajectories,
        reconstruction_windows,
    )
    from sharedwalk.neural import (
        TrainConfig,
        load_models,
        save_models,
        train_autoencoder,
        train_classifier,
    )
    from sharedwalk.roadmap import build_prm, load_roadmap, save_roadmap
    from sharedwalk.worldmap import BehaviourGrid, make_cross_grid

    s = PIPELINE_SETTINGS
    cache = _cache_dir()
    grid = make_cross_grid(arm=s["arm"], corridor=s["corridor"], resolution=s["resolution"])
    bg = BehaviourGrid.covering(grid)

    rm_file = cache / "roadmap.json"
    if rm_file.exists():
        rm = load_roadmap(rm_file)
    else:
        rm = build_prm(grid, clearance=s["clearance"], seed=s["prm_seed"])
        save_roadmap(rm, rm_file)

    traj_file = cache / "trajectories.npz"
    if traj_file.exists():
        data = np.load(traj_file)
        paths = [data[k] for k in sorted(data.files, key=lambda n: int(n.split("_")[1]))]
        synth_seconds = json.loads((cache / "timings.json").read_text())["synth_seconds"]
    else:
        t0 = time.perf_counter()
        paths = generate_trajectories(grid, rm, s["count"], seed=s["synth_seed"], bg=bg)
        synth_seconds = time.perf_counter() - t0
        np.savez_compressed(traj_file, **{f"path_{i}": p for i, p in enumerate(paths)})
        (cache / "timings.json").write_text(json.dumps({"synth_seconds": synth_seconds}))

    window_file = cache / "windows.npz"
    if window_file.exists():
        data = np.load(window_file)
        X, y, X_ae = data["X"], data["y"], data["X_ae"]
    else:
        X, y = balanced_windows(paths, bg, seed=s["synth_seed"])
        X_ae = reconstruction_windows(paths, stride=s["ae_stride"])
        np.savez_compressed(window_file, X=X, y=y, X_ae=X_ae)

    model_file = cache / "models.npz"
    history_file = cache / "history.json"
    if model_file.exists() and history_file.exists():
        models = load_models(model_file)
        enc, dec, head = models["encoder"], models["decoder"], models["classifier"]
        saved = json.loads(history_file.read_text())
        ae_history = saved["autoencoder"]
        head_metrics = saved["classifier_per_seed"]
    else:
        enc, dec, ae_history = train_autoencoder(
            X_ae, TrainConfig(epochs=s["ae_epochs"], seed=s["train_seed"])
        )
        head_metrics = {}
        head = None
        for seed in s["head_seeds"]:
            h, metrics = train_classifier(
                enc, X, y, TrainConfig(epochs=s["head_epochs"], seed=seed)
            )
            head_metrics[str(seed)] = {
                "per_class_accuracy": metrics["per_class_accuracy"],
                "average_accuracy": metrics["average_accuracy"],
                "overall_accuracy": metrics["overall_accuracy"],
            }
            if seed == s["train_seed"]:
                head = h
        save_models(model_file, encoder=enc, decoder=dec, classifier=head)
        ae_history = {
            "channel_rmse": ae_history["channel_rmse"],
            "train_seconds": ae_history["train_seconds"],
            "best_val_loss": ae_history["best_val_loss"][-1],
        }
        history_file.write_text(
            json.dumps({"autoencoder": ae_history, "classifier_per_seed": head_metrics})
        )

    return {
        "settings": s,
        "grid": grid,
        "bg": bg,
        "roadmap": rm,
        "paths": paths,
        "X": X,
        "y": y,
        "X_ae": X_ae,
        "encoder": enc,
        "decoder": dec,
        "head": head,
        "ae_history": ae_history,
        "head_metrics": head_metrics,
        "synth_seconds": synth_seconds,
    }


@pytest.fixture(scope="session")
def behaviour_artifacts(pipeline):
    """Behavioural map built from the trained models (cheap, cached in RAM)."""
    from sharedwalk.behmap import build_behavioural_map

    bm = build_behavioural_map(
        pipeline["paths"], pipeline["encoder"], pipeline["head"], pipeline["bg"]
    )
    return {**pipeline, "bm": bm}


@pytest.fixture
def announce(capsys):
    """One visible pass/fail line per acceptance criterion."""

    def _announce(name: str, ok: bool, detail: str = ""):
        line = f"[{'PASS' if ok else 'FAIL'}] {name}" + (f": {detail}" if detail else "")
        with capsys.disabled():
            print(line, flush=True)
        assert ok, line

    return _announce
