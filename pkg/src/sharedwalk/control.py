"""Shared-authority steering control for a front-steered walker.

The plant is a unicycle whose angular velocity comes from the mean front
steering angle through the Ackermann relation; steering angles follow a
first-order torque-to-rate model with a self-centering spring.  The robot
contributes visco-elastic corrective torques on two error branches — the
steering-angle branch and the absolute front-orientation branch — whose
stiffness and damping scale with distrust lambda = 1 - confidence.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .behmap import Mission, confidence as behaviour_confidence
from .geometry import Pose2
from .neural import STRAIGHT, ConfidenceVector, Sequential

__all__ = [
    "ControlConfig",
    "WalkerState",
    "ControllerGains",
    "TorqueCommand",
    "DisengageState",
    "ControlMemory",
    "step_plant",
    "desired_refs",
    "viscoelastic",
    "control_step",
    "update_disengage",
]


@dataclass(frozen=True)
class ControlConfig:
    """Physical and control constants; paper-silent values are configurable."""

    wheelbase: float = 0.6  # m, front axle to rear axle
    track: float = 0.55  # m, front wheel separation
    v_max: float = 1.2  # m/s
    alpha_max: float = math.radians(45.0)  # mechanical steering limit
    steer_damping: float = 40.0  # N*m*s/rad, torque-to-rate constant c_s
    steer_centering: float = 5.0  # N*m/rad, self-centering spring
    steer_rate_max: float = 2.0  # rad/s, actuator slew limit
    rate_hz: float = 50.0
    # steering-angle branch gain schedule (Eq.-style a = a0 + a1*lambda)
    a0: float = 25.0  # N
    a1: float = 15.0  # N
    b0: float = 15.0  # N*s
    b1: float = 10.0  # N*s
    # front-orientation branch: fixed stiffness, no lambda schedule
    beta_a0: float = 25.0  # N
    beta_b0: float = 25.0  # N*s
    # disengagement
    opposition_threshold: float = 8.0  # N*m*s; low values trip on benign transients
    disengage_duration: float = 10.0  # s
    opposition_leak: float = 1.0  # N*m per second of non-opposition
    # the user cannot meaningfully oppose a robot that is barely pushing;
    # without this deadband sign flicker around zero robot torque lets a
    # compliant user's tracking torques accumulate as fake opposition
    opposition_deadband: float = 0.5  # N*m of robot torque

    @property
    def dt(self) -> float:
        return 1.0 / self.rate_hz


@dataclass(frozen=True)
class WalkerState:
    """Snapshot of the walker: pose, speed, and front steering angles."""

    pose: Pose2
    v: float = 0.0
    omega: float = 0.0
    alpha_r: float = 0.0
    alpha_l: float = 0.0
    alpha_dot_r: float = 0.0
    alpha_dot_l: float = 0.0

    @property
    def alpha_mean(self) -> float:
        return 0.5 * (self.alpha_r + self.alpha_l)


@dataclass(frozen=True)
class ControllerGains:
    a0: float
    a1: float
    b0: float
    b1: float
    lam: float
    a: float
    b: float

    @classmethod
    def from_confidence(
        cls, eps_hat: float, a0: float, a1: float, b0: float, b1: float
    ) -> "ControllerGains":
        lam = 1.0 - min(max(eps_hat, 0.0), 1.0)
        return cls(a0=a0, a1=a1, b0=b0, b1=b1, lam=lam, a=a0 + a1 * lam, b=b0 + b1 * lam)


@dataclass(frozen=True)
class TorqueCommand:
    tau_r: float = 0.0
    tau_l: float = 0.0
    tau_alpha_r: float = 0.0
    tau_alpha_l: float = 0.0
    tau_beta_r: float = 0.0
    tau_beta_l: float = 0.0
    engaged: bool = False


@dataclass(frozen=True)
class DisengageState:
    active: bool = False
    remaining: float = 0.0
    opposition_integral: float = 0.0
    danger_zone: bool = False

    def __post_init__(self):
        if self.active and not self.remaining > 0.0:
            raise ValueError("active disengagement requires remaining > 0")
        if self.danger_zone and self.active:
            raise ValueError("danger zones never disengage")


class _SmoothedDerivative:
    """Backward difference smoothed by a 5-sample moving average."""

    def __init__(self, taps: int = 5):
        self._prev: float | None = None
        self._diffs: deque[float] = deque(maxlen=taps)

    def update(self, e: float, dt: float) -> float:
        if self._prev is None:
            d = 0.0
        else:
            d = (e - self._prev) / dt
        self._prev = e
        self._diffs.append(d)
        return sum(self._diffs) / len(self._diffs)


class ControlMemory:
    """Per-loop mutable state: error-derivative filters (single writer)."""

    def __init__(self):
        self.d_alpha_r = _SmoothedDerivative()
        self.d_alpha_l = _SmoothedDerivative()
        self.d_beta_r = _SmoothedDerivative()
        self.d_beta_l = _SmoothedDerivative()


def _clamp(x: float, lo: float, hi: float) -> float:
    return min(max(x, lo), hi)


def step_plant(
    state: WalkerState,
    human: tuple[float, float, float],
    robot: TorqueCommand,
    dt: float,
    cfg: ControlConfig = ControlConfig(),
) -> WalkerState:
    """Advance the plant one step under combined human and robot torque.

    ``human`` is (v, tau_r, tau_l): the longitudinal speed is imposed by
    the user (clamped to [0, v_max]); steering torques from both parties
    share the actuation channel.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    v = _clamp(human[0], 0.0, cfg.v_max)
    new_alpha = []
    new_rate = []
    for alpha, tau_h, tau_r in (
        (state.alpha_r, human[1], robot.tau_r),
        (state.alpha_l, human[2], robot.tau_l),
    ):
        rate = (tau_r + tau_h - cfg.steer_centering * alpha) / cfg.steer_damping
        rate = _clamp(rate, -cfg.steer_rate_max, cfg.steer_rate_max)
        a = _clamp(alpha + dt * rate, -cfg.alpha_max, cfg.alpha_max)
        new_alpha.append(a)
        new_rate.append(rate)
    alpha_mean = 0.5 * (new_alpha[0] + new_alpha[1])
    omega = v * math.tan(alpha_mean) / cfg.wheelbase
    p = state.pose
    pose = Pose2(
        p.x + math.cos(p.theta) * dt * v,
        p.y + math.sin(p.theta) * dt * v,
        p.theta + dt * omega,
    )
    return WalkerState(
        pose=pose,
        v=v,
        omega=omega,
        alpha_r=new_alpha[0],
        alpha_l=new_alpha[1],
        alpha_dot_r=new_rate[0],
        alpha_dot_l=new_rate[1],
    )


def _ackermann_angles(kappa: float, cfg: ControlConfig) -> tuple[float, float]:
    """Per-wheel steering angles realising path curvature ``kappa``."""
    half = 0.5 * cfg.track
    a_r = math.atan2(cfg.wheelbase * kappa, 1.0 + kappa * half)
    a_l = math.atan2(cfg.wheelbase * kappa, 1.0 - kappa * half)
    return a_r, a_l


def desired_refs(
    mission: Mission,
    cell: tuple[int, int],
    state: WalkerState,
    cfg: ControlConfig = ControlConfig(),
) -> tuple[float, float, float, float]:
    """Reference (omega*, theta*, alpha*_r, alpha*_l) for a mission cell.

    theta* is the cell's stored reference direction; the reference
    curvature is read off the planned path at the abscissa nearest the
    walker (zero when the reference class is Straight), and the wheel
    angles come from the inverse Ackermann relation at that curvature.
    """
    ref_cls, theta_star = mission.references[cell]
    if ref_cls == STRAIGHT:
        kappa_ref = 0.0
    else:
        d = np.hypot(
            mission.samples[:, 1] - state.pose.x, mission.samples[:, 2] - state.pose.y
        )
        kappa_ref = float(mission.samples[int(np.argmin(d)), 4])
    omega_star = state.v * kappa_ref
    a_r, a_l = _ackermann_angles(kappa_ref, cfg)
    return omega_star, theta_star, a_r, a_l


def viscoelastic(e: float, e_dot: float, gains: ControllerGains) -> float:
    """Spring-damper corrective torque: a*e + b*e_dot, exactly."""
    return gains.a * e + gains.b * e_dot


def control_step(
    mission: Mission,
    state: WalkerState,
    live_window: np.ndarray | None,
    encoder: Sequential,
    head: Sequential,
    cfg: ControlConfig = ControlConfig(),
    dt: float | None = None,
    memory: ControlMemory | None = None,
    disengaged: bool = False,
) -> tuple[TorqueCommand, ConfidenceVector | None, ControllerGains]:
    """One pass of the shared-authority pipeline.

    Looks up the reference cell, scores the live window against the
    reference class, schedules gains from the resulting distrust, and
    combines the steering-angle and front-orientation branches into wheel
    torques.  With no window yet (buffer filling) or while disengaged the
    command is zero torque with ``engaged=False``.
    """
    dt = cfg.dt if dt is None else dt
    memory = memory or ControlMemory()
    cell = mission.cell_at(state.pose.x, state.pose.y)
    eps_hat, cv = behaviour_confidence(mission, cell, live_window, encoder, head)
    gains = ControllerGains.from_confidence(
        eps_hat if eps_hat is not None else 0.0, cfg.a0, cfg.a1, cfg.b0, cfg.b1
    )
    _, theta_star, a_star_r, a_star_l = desired_refs(mission, cell, state, cfg)
    beta_gains = ControllerGains.from_confidence(1.0, cfg.beta_a0, 0.0, cfg.beta_b0, 0.0)

    e_a_r = a_star_r - state.alpha_r
    e_a_l = a_star_l - state.alpha_l
    e_b_r = _wrap(theta_star + a_star_r - (state.pose.theta + state.alpha_r))
    e_b_l = _wrap(theta_star + a_star_l - (state.pose.theta + state.alpha_l))
    tau_a_r = viscoelastic(e_a_r, memory.d_alpha_r.update(e_a_r, dt), gains)
    tau_a_l = viscoelastic(e_a_l, memory.d_alpha_l.update(e_a_l, dt), gains)
    tau_b_r = viscoelastic(e_b_r, memory.d_beta_r.update(e_b_r, dt), beta_gains)
    tau_b_l = viscoelastic(e_b_l, memory.d_beta_l.update(e_b_l, dt), beta_gains)

    if live_window is None or disengaged:
        return TorqueCommand(engaged=False), cv, gains
    cmd = TorqueCommand(
        tau_r=gains.lam * tau_a_r + tau_b_r,
        tau_l=gains.lam * tau_a_l + tau_b_l,
        tau_alpha_r=tau_a_r,
        tau_alpha_l=tau_a_l,
        tau_beta_r=tau_b_r,
        tau_beta_l=tau_b_l,
        engaged=True,
    )
    return cmd, cv, gains


def _wrap(a: float) -> float:
    return math.pi - (math.pi - a) % (2.0 * math.pi)


def update_disengage(
    ds: DisengageState,
    human_torque: tuple[float, float],
    robot: TorqueCommand,
    dt: float,
    danger_zone: bool,
    cfg: ControlConfig = ControlConfig(),
) -> DisengageState:
    """Advance the opposition detector one step.

    Human torque opposing the robot's command accumulates in an integral;
    while aligned (or idle) the integral leaks away.  Crossing the
    threshold outside danger zones disengages for the configured
    duration; danger zones never disengage and cancel an active timer.
    """
    if ds.active:
        remaining = ds.remaining - dt
        if danger_zone or remaining <= 0.0:
            return DisengageState(False, 0.0, 0.0, danger_zone)
        return DisengageState(True, remaining, 0.0, False)

    opposition = 0.0
    for tau_h, tau_r in ((human_torque[0], robot.tau_r), (human_torque[1], robot.tau_l)):
        if abs(tau_r) > cfg.opposition_deadband and tau_h * tau_r < 0.0:
            opposition += abs(tau_h)
    if opposition > 0.0:
        integral = ds.opposition_integral + opposition * dt
    else:
        integral = max(0.0, ds.opposition_integral - cfg.opposition_leak * dt)
    if danger_zone:
        # opposition inside a danger zone never counts: without this reset
        # a fight fought entirely in the zone would trip the detector the
        # instant the walker steps out, long after the fight ended
        return DisengageState(False, 0.0, 0.0, True)
    if integral >= cfg.opposition_threshold:
        return DisengageState(True, cfg.disengage_duration, 0.0, False)
    return DisengageState(False, 0.0, integral, False)
