"""From a map to a behavioural map: the full learning pipeline, miniature.

Builds a small cross-intersection world, samples a roadmap, generates
class-balanced training trajectories, trains the window autoencoder and
behaviour classifier (briefly — this is a demo, not a benchmark), and
prints the resulting behavioural map cell by cell.

Run:  python3 demos/02_behaviour_pipeline.py   (about a minute)
"""

import numpy as np

from sharedwalk.behmap import (
    balanced_windows,
    build_behavioural_map,
    generate_trajectories,
)
from sharedwalk.neural import CLASS_NAMES, TrainConfig, train_autoencoder, train_classifier
from sharedwalk.roadmap import build_prm
from sharedwalk.worldmap import BehaviourGrid, make_cross_grid


def main():
    grid = make_cross_grid(arm=4.0, corridor=2.0, resolution=0.1)
    bg = BehaviourGrid.covering(grid)
    rm = build_prm(grid, clearance=0.3, seed=3)
    print(f"cross map {grid.width}x{grid.height} cells, "
          f"roadmap with {len(rm.nodes)} nodes")

    paths = generate_trajectories(grid, rm, 60, seed=1, bg=bg)
    X, y = balanced_windows(paths, bg, seed=1)
    hist = {CLASS_NAMES[c]: int(np.sum(y == c)) for c in range(3)}
    print(f"{len(paths)} trajectories -> {len(X)} balanced windows {hist}\n")

    print("training window autoencoder (60 epochs) ...")
    enc, _, history = train_autoencoder(X, TrainConfig(epochs=60, seed=0))
    rmse = "  ".join(f"{v:.3f}" for v in history["channel_rmse"])
    print(f"validation RMSE per channel (x y cos sin kappa): {rmse}")

    print("training behaviour classifier (300 epochs) ...")
    head, metrics = train_classifier(enc, X, y, TrainConfig(epochs=300, seed=0))
    print(f"average validation accuracy: {metrics['average_accuracy'] * 100:.1f}%\n")

    bm = build_behavioural_map(paths, enc, head, bg)
    print(f"behavioural map: {len(bm.cells)} referenced cells, "
          f"{bm.total_members()} member windows")
    print("cell      behaviours (class @ direction deg, members)")
    for cell in sorted(bm.cells):
        parts = ", ".join(
            f"{CLASS_NAMES[cb.cls]} @ {np.degrees(cb.direction):+6.1f} ({cb.member_count})"
            for cb in bm.cells[cell]
        )
        print(f"{str(cell):9s} {parts}")


if __name__ == "__main__":
    main()
