"""Shared-authority steering under three kinds of human behaviour.

Runs the same straight-corridor mission with a compliant, a rough and an
adversarial scripted user and compares how much corrective torque the
robot spends on each; then repeats the adversarial fight with the
opposition safety armed to show the robot yielding (disengaging) in a
safe zone.

The behaviour classifier is pinned to a fixed confidence so the demo
needs no training.

Run:  python3 demos/03_shared_control_scenarios.py
"""

import numpy as np

from sharedwalk.behmap import Mission
from sharedwalk.geometry import ClothoidPath, ClothoidSegment, Pose2, sample_path
from sharedwalk.harness.experiment import RunSetup, aggregate, run_loop
from sharedwalk.harness.policies import make_policy, AdversarialPolicy
from sharedwalk.neural import STRAIGHT, build_classifier_head, build_encoder
from sharedwalk.worldmap import BehaviourGrid


def straight_mission(length=10.0):
    seg = ClothoidSegment(Pose2(0.0, 0.5, 0.0), 0.0, 0.0, length)
    path = ClothoidPath((seg,))
    samples = sample_path(path, 0.1)
    bg = BehaviourGrid(0.0, 0.0, int(length), 1)
    refs = {(i, 0): (STRAIGHT, 0.0) for i in range(int(length))}
    return Mission((0.0, 0.5), (length, 0.5), path, samples, refs, bg)


def fixed_head(p_left, p_right, p_straight):
    head = build_classifier_head(seed=0)
    head.layers[0].w[...] = 0.0
    head.layers[0].b[...] = np.log([p_left, p_right, p_straight])
    return head


def main():
    mission = straight_mission()
    encoder = build_encoder(seed=0)
    head = fixed_head(0.05, 0.05, 0.90)

    print("== robot effort vs. user behaviour (opposition safety off) ==")
    print(f"{'policy':14s} {'mean |tau|':>11s} {'max |tau|':>10s} {'goal':>5s}")
    policies = {
        "compliant": make_policy("compliant", seed=1),
        "rough": make_policy("rough", seed=1),
        "adversarial": AdversarialPolicy(
            seed=1, hold_from=2.0, hold_until=8.0, release_for=4.0, hold_heading=0.4
        ),
    }
    for name, policy in policies.items():
        setup = RunSetup(mission, encoder, head, policy,
                         duration=15.0, disengage_enabled=False)
        rows, _, goal = run_loop(setup)
        agg = aggregate(rows)
        print(f"{name:14s} {agg['mean_abs_tau']:11.3f} {agg['max_abs_tau']:10.2f} "
              f"{'yes' if goal else 'no':>5s}")

    print("\n== the same fight with the opposition safety armed ==")
    fighter = AdversarialPolicy(
        seed=1, hold_from=2.0, hold_until=8.0, release_for=4.0, hold_heading=0.4
    )
    setup = RunSetup(mission, encoder, head, fighter, duration=15.0)
    rows, events, _ = run_loop(setup)
    for e in events:
        print(f"t = {e['time']:5.2f} s  {e['event']}")
    idle = sum(1 for r in rows if not r["engaged"])
    print(f"robot idle (zero torque) for {idle * 0.02:.1f} s of {len(rows) * 0.02:.1f} s: "
          "the user insisted, so the robot yielded")


if __name__ == "__main__":
    main()
