"""Scripted human steering policies for closed-loop experiments.

Every policy maps (time, walker state, mission) to a human input triple
(v, tau_r, tau_l) sharing the steering actuation channel with the robot.
All randomness is seeded; a policy instance is deterministic.
"""

from __future__ import annotations

import math
from collections import deque

import numpy as np

from ..behmap import Mission
from ..control import WalkerState

__all__ = [
    "HumanPolicy",
    "CompliantPolicy",
    "RoughPolicy",
    "AdversarialPolicy",
    "ReplayPolicy",
    "ExternalPolicy",
    "make_policy",
]

HEADING_GAIN = 20.0  # N*m per rad of heading error the scripted human applies
OMEGA_DAMPING = 15.0  # N*m per rad/s of yaw rate; without it the loop oscillates
LOOKAHEAD = 0.8  # m of pure-pursuit preview along the reference path


class HumanPolicy:
    """Base: deterministic mapping (t, state, mission) -> (v, tau_r, tau_l)."""

    kind = "abstract"

    def __call__(
        self, t: float, state: WalkerState, mission: Mission
    ) -> tuple[float, float, float]:
        raise NotImplementedError


def _pursuit_heading(state: WalkerState, mission: Mission, lookahead: float) -> float:
    """Heading toward the point ``lookahead`` metres ahead on the reference."""
    d = np.hypot(
        mission.samples[:, 1] - state.pose.x, mission.samples[:, 2] - state.pose.y
    )
    i = int(np.argmin(d))
    s_target = mission.samples[i, 0] + lookahead
    j = int(np.searchsorted(mission.samples[:, 0], s_target))
    j = min(j, len(mission.samples) - 1)
    tx = mission.samples[j, 1] - state.pose.x
    ty = mission.samples[j, 2] - state.pose.y
    if tx == 0.0 and ty == 0.0:
        return state.pose.theta
    return math.atan2(ty, tx)


def _steer_toward(theta_des: float, state: WalkerState, gain: float) -> tuple[float, float]:
    err = math.pi - (math.pi - (theta_des - state.pose.theta - state.alpha_mean)) % (
        2.0 * math.pi
    )
    tau = gain * err - OMEGA_DAMPING * state.omega
    return tau, tau


class CompliantPolicy(HumanPolicy):
    """Pure pursuit of the reference path with 1 degree of heading noise."""

    kind = "compliant"

    def __init__(self, seed: int = 0, v: float = 0.8, noise_deg: float = 1.0):
        self.v = v
        self.noise = math.radians(noise_deg)
        self._rng = np.random.default_rng(seed)

    def __call__(self, t, state, mission):
        theta_des = _pursuit_heading(state, mission, LOOKAHEAD)
        theta_des += self._rng.normal(0.0, self.noise)
        tau_r, tau_l = _steer_toward(theta_des, state, HEADING_GAIN)
        return self.v, tau_r, tau_l


class RoughPolicy(CompliantPolicy):
    """Compliant plus a 10 degree sinusoidal heading perturbation, 4 s period."""

    kind = "rough"

    def __init__(self, seed: int = 0, v: float = 0.8, amplitude_deg: float = 10.0, period: float = 4.0):
        super().__init__(seed=seed, v=v)
        self.amplitude = math.radians(amplitude_deg)
        self.period = period

    def __call__(self, t, state, mission):
        theta_des = _pursuit_heading(state, mission, LOOKAHEAD)
        theta_des += self._rng.normal(0.0, self.noise)
        theta_des += self.amplitude * math.sin(2.0 * math.pi * t / self.period)
        tau_r, tau_l = _steer_toward(theta_des, state, HEADING_GAIN)
        return self.v, tau_r, tau_l


class AdversarialPolicy(CompliantPolicy):
    """Compliant, except a scheduled window of holding the initial heading.

    During [hold_from, hold_until) the user steers to keep ``hold_heading``
    (by default the heading they entered the window with) — fighting any
    commanded turn — then releases (zero torque) so the controller can
    recover.
    """

    kind = "adversarial"

    def __init__(
        self,
        seed: int = 0,
        v: float = 0.8,
        hold_from: float = 5.0,
        hold_until: float = 12.0,
        release_for: float = 10.0,
        hold_heading: float | None = None,
    ):
        super().__init__(seed=seed, v=v)
        self.hold_from = hold_from
        self.hold_until = hold_until
        self.release_for = release_for
        self._hold_heading = hold_heading

    def __call__(self, t, state, mission):
        if self.hold_from <= t < self.hold_until:
            if self._hold_heading is None:
                self._hold_heading = state.pose.theta
            tau_r, tau_l = _steer_toward(self._hold_heading, state, 2.0 * HEADING_GAIN)
            return self.v, tau_r, tau_l
        if self.hold_until <= t < self.hold_until + self.release_for:
            return self.v, 0.0, 0.0
        return super().__call__(t, state, mission)


class ReplayPolicy(HumanPolicy):
    """Replays a recorded sequence of (v, tau_r, tau_l) rows step by step."""

    kind = "replay"

    def __init__(self, rows):
        self._rows = deque(tuple(map(float, r)) for r in rows)

    def __call__(self, t, state, mission):
        if not self._rows:
            return 0.0, 0.0, 0.0
        return self._rows.popleft()


class ExternalPolicy(HumanPolicy):
    """Live commands pushed from outside (the service); holds the last one."""

    kind = "external"

    def __init__(self, v_default: float = 0.0):
        self._current = (v_default, 0.0, 0.0)

    def push(self, v: float, tau_r: float, tau_l: float) -> None:
        self._current = (float(v), float(tau_r), float(tau_l))

    def __call__(self, t, state, mission):
        return self._current


def make_policy(kind: str, seed: int = 0, v: float = 0.8, **kwargs) -> HumanPolicy:
    table = {
        "compliant": CompliantPolicy,
        "rough": RoughPolicy,
        "adversarial": AdversarialPolicy,
    }
    if kind not in table:
        raise ValueError(f"unknown policy kind {kind!r}; pick one of {sorted(table)}")
    return table[kind](seed=seed, v=v, **kwargs)
