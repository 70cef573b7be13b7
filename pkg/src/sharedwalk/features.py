"""Normalised feature windows and online path reconstruction.

A feature window is the 5 x n matrix over n consecutive uniformly spaced
path samples, rows (x - x1, y - y1, cos theta, sin theta, kappa), with the
first column's position subtracted so windows carry no absolute-position
bias.  Heading enters as cos/sin to dodge angular wrap-around.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "FeatureWindowError",
    "window",
    "rotate_window",
    "validate_window",
    "PathReconstructor",
]

# sample columns follow geometry.sample_path: (s, x, y, theta, kappa)
COL_S, COL_X, COL_Y, COL_THETA, COL_KAPPA = range(5)

SPACING_TOLERANCE = 0.05  # relative non-uniformity allowed in window inputs


class FeatureWindowError(ValueError):
    """Raised for malformed window requests or streams."""


def window(samples: np.ndarray, k: int, n: int) -> np.ndarray:
    """Build the 5 x n feature window ending at sample index ``k``.

    ``samples`` is an (N, 5) array of (s, x, y, theta, kappa) rows at
    uniform arc-length spacing; the window covers indices k-(n-1)..k.
    """
    samples = np.asarray(samples, dtype=float)
    if k < n - 1:
        raise FeatureWindowError(f"insufficient history: k={k} < n-1={n - 1}")
    if k >= len(samples):
        raise FeatureWindowError(f"index {k} out of range for {len(samples)} samples")
    sl = samples[k - (n - 1) : k + 1]
    ds = np.diff(sl[:, COL_S])
    if len(ds):
        mean = float(np.mean(ds))
        if mean <= 0 or np.any(np.abs(ds - mean) > SPACING_TOLERANCE * mean):
            raise FeatureWindowError("window samples are not uniformly spaced")
    out = np.empty((5, n))
    out[0] = sl[:, COL_X] - sl[0, COL_X]
    out[1] = sl[:, COL_Y] - sl[0, COL_Y]
    out[2] = np.cos(sl[:, COL_THETA])
    out[3] = np.sin(sl[:, COL_THETA])
    out[4] = sl[:, COL_KAPPA]
    return out


def validate_window(w: np.ndarray, n: int | None = None) -> None:
    w = np.asarray(w)
    if w.ndim != 2 or w.shape[0] != 5 or (n is not None and w.shape[1] != n):
        raise FeatureWindowError(f"bad window shape {w.shape}")
    if abs(w[0, 0]) > 0 or abs(w[1, 0]) > 0:
        raise FeatureWindowError("window is not position-normalised")
    if np.any(np.abs(w[2] ** 2 + w[3] ** 2 - 1.0) > 1e-9):
        raise FeatureWindowError("heading rows are not on the unit circle")


def rotate_window(w: np.ndarray, angle: float) -> np.ndarray:
    """Rigidly rotate a window about its first sample by ``angle``."""
    c, s = math.cos(angle), math.sin(angle)
    out = np.array(w, dtype=float, copy=True)
    out[0] = c * w[0] - s * w[1]
    out[1] = s * w[0] + c * w[1]
    out[2] = c * w[2] - s * w[3]
    out[3] = s * w[2] + c * w[3]
    return out


class PathReconstructor:
    """Streams odometry or poses into uniformly spaced path samples.

    Dead-reckons the unicycle update and emits a (s, x, y, theta, kappa)
    row every time accumulated arc length crosses a multiple of
    ``delta_s`` (poses linearly interpolated between integration steps).
    Curvature is the heading finite difference between emitted samples;
    the first emitted sample carries kappa = 0.  Heading is kept
    unwrapped so downstream differences stay continuous.  One stream has
    one writer; not thread-safe by design.
    """

    def __init__(self, delta_s: float = 0.1):
        if delta_s <= 0:
            raise FeatureWindowError("delta_s must be positive")
        self.delta_s = delta_s
        self._pose: tuple[float, float, float] | None = None
        self._s = 0.0
        self._emitted = 1  # first emission at s = delta_s, not at the seed pose
        self._last_theta: float | None = None

    def reset(self) -> None:
        self._pose = None
        self._s = 0.0
        self._emitted = 1
        self._last_theta = None

    def push_odometry(self, v: float, omega: float, dt: float) -> list[np.ndarray]:
        """Advance by one odometry step (v >= 0, dt > 0); returns emitted rows."""
        if v < 0:
            raise FeatureWindowError("negative longitudinal speed in odometry stream")
        if dt <= 0:
            raise FeatureWindowError("non-positive time step")
        if self._pose is None:
            self._pose = (0.0, 0.0, 0.0)
        x, y, th = self._pose
        nx = x + math.cos(th) * dt * v
        ny = y + math.sin(th) * dt * v
        nth = th + dt * omega
        return self._advance(nx, ny, nth)

    def push_pose(self, x: float, y: float, theta: float) -> list[np.ndarray]:
        """Advance with a localisation sample; arc length from Euclidean motion."""
        if self._pose is None:
            # unwrap against nothing; first pose only seeds the stream
            self._pose = (float(x), float(y), float(theta))
            return []
        return self._advance(float(x), float(y), self._unwrap(theta))

    def _unwrap(self, theta: float) -> float:
        prev = self._pose[2]
        d = (theta - prev + math.pi) % (2.0 * math.pi) - math.pi
        return prev + d

    def _advance(self, nx: float, ny: float, nth: float) -> list[np.ndarray]:
        x, y, th = self._pose
        ds = math.hypot(nx - x, ny - y)
        out: list[np.ndarray] = []
        if ds > 0.0:
            s_end = self._s + ds
            next_mark = (self._emitted) * self.delta_s
            while next_mark <= s_end + 1e-12:
                if next_mark >= self._s - 1e-12:
                    t = (next_mark - self._s) / ds if ds > 0 else 0.0
                    t = min(max(t, 0.0), 1.0)
                    ex = x + t * (nx - x)
                    ey = y + t * (ny - y)
                    eth = th + t * (nth - th)
                    if self._last_theta is None:
                        kappa = 0.0
                    else:
                        kappa = (eth - self._last_theta) / self.delta_s
                    out.append(np.array([next_mark, ex, ey, eth, kappa]))
                    self._last_theta = eth
                    self._emitted += 1
                next_mark = self._emitted * self.delta_s
            self._s = s_end
        self._pose = (nx, ny, nth)
        return out
