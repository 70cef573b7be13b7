"""Clothoid curves: evaluation, G1 Hermite fitting and waypoint spline interpolation.

A clothoid (Euler spiral) has curvature linear in arc length,
``kappa(s) = kappa0 + kappa_rate * s``.  Positions come from the integrals
``x(s) = x0 + int_0^s cos(kappa_rate t^2/2 + kappa0 t + theta0) dt`` (same
with sin for y), evaluated here through Fresnel integrals with a series
fallback for the nearly-circular regime.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

__all__ = [
    "Pose2",
    "ClothoidSegment",
    "ClothoidPath",
    "ClothoidFitError",
    "wrap_angle",
    "fresnel",
    "eval_clothoid",
    "fit_g1",
    "fit_spline",
    "G2_JOINT_WEIGHT",
    "sample_path",
]

# joints of a ClothoidPath must agree to this tolerance (m / rad)
G1_TOL = 1e-6


class ClothoidFitError(RuntimeError):
    """Raised when a clothoid fit fails to converge or is degenerate."""


def wrap_angle(a: float) -> float:
    """Normalise an angle to (-pi, pi]."""
    return math.pi - (math.pi - a) % (2.0 * math.pi)


@dataclass(frozen=True)
class Pose2:
    """Planar pose (x, y, heading); heading normalised to (-pi, pi]."""

    x: float
    y: float
    theta: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.theta)):
            raise ValueError("pose components must be finite")
        object.__setattr__(self, "theta", wrap_angle(self.theta))


@dataclass(frozen=True)
class ClothoidSegment:
    """One clothoid arc: kappa(s) = kappa0 + kappa_rate * s for s in [0, length]."""

    start: Pose2
    kappa0: float
    kappa_rate: float
    length: float

    def __post_init__(self):
        if not self.length >= 0.0:
            raise ValueError(f"segment length must be >= 0, got {self.length}")

    @property
    def end(self) -> Pose2:
        pose, _ = eval_clothoid(self, self.length)
        return pose

    def curvature(self, s: float) -> float:
        return self.kappa0 + self.kappa_rate * s


@dataclass(frozen=True)
class ClothoidPath:
    """G1-continuous chain of clothoid segments."""

    segments: tuple[ClothoidSegment, ...]

    def __post_init__(self):
        segs = tuple(self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise ValueError("path must contain at least one segment")
        for i in range(len(segs) - 1):
            e = segs[i].end
            s = segs[i + 1].start
            if (
                abs(e.x - s.x) > G1_TOL
                or abs(e.y - s.y) > G1_TOL
                or abs(wrap_angle(e.theta - s.theta)) > G1_TOL
            ):
                raise ValueError(f"segments {i} and {i + 1} are not G1-continuous")
        object.__setattr__(
            self, "_ends", np.cumsum([seg.length for seg in segs])
        )

    @property
    def total_length(self) -> float:
        return float(self._ends[-1])

    def point_at(self, s: float) -> tuple[Pose2, float]:
        """Pose and curvature at arc length s along the whole path."""
        total = self.total_length
        if s < -1e-9 or s > total + 1e-9:
            raise ValueError(f"abscissa {s} outside [0, {total}]")
        s = min(max(s, 0.0), total)
        i = min(int(np.searchsorted(self._ends, s)), len(self.segments) - 1)
        seg = self.segments[i]
        local = s - (self._ends[i] - seg.length)
        return eval_clothoid(seg, min(max(local, 0.0), seg.length))


# ---------------------------------------------------------------------------
# Fresnel machinery


def fresnel(s: float) -> tuple[float, float]:
    """Standard Fresnel integrals C(s), S(s) with cos/sin(pi t^2 / 2) kernels."""
    if not math.isfinite(s):
        raise ValueError("fresnel argument must be finite")
    S, C = special.fresnel(s)
    return float(C), float(S)


# below this |a| the closed form loses precision; switch to the Taylor series
_A_SERIES_THRESHOLD = 1e-2


# series depth for the small-|b| moment expansion: terms are b^j / j!, so
# with |b| < 2 the 40th term is below 2^40/40! ~ 1.3e-36
_MOM_TERMS = 41
_MOM_MMAX = 16
# _MOM_DENOM[m, j] = 1 / (m + j + 1)
_MOM_DENOM = 1.0 / (
    np.arange(_MOM_MMAX + 1)[:, None] + np.arange(_MOM_TERMS)[None, :] + 1.0
)
_MOM_FACT = np.cumprod(np.concatenate(([1.0], np.arange(1, _MOM_TERMS))))


def _moments(b: float, mmax: int) -> np.ndarray:
    """I_m = int_0^1 t^m exp(i b t) dt for m = 0..mmax."""
    out = np.empty(mmax + 1, dtype=complex)
    if abs(b) < 2.0:
        # out[m] = sum_j (ib)^j / (j! (m + j + 1)), as one matrix product
        coeff = (1j * b) ** np.arange(_MOM_TERMS) / _MOM_FACT
        out[: mmax + 1] = (_MOM_DENOM[: mmax + 1] @ coeff)
    else:
        ib = 1j * b
        e = np.exp(ib)
        out[0] = (e - 1.0) / ib
        for m in range(1, mmax + 1):
            out[m] = (e - m * out[m - 1]) / ib
    return out


def _clothoid_cs(a: float, b: float, c: float) -> tuple[float, float]:
    """(X, Y) = int_0^1 (cos, sin)(a t^2/2 + b t + c) dt."""
    if abs(a) < _A_SERIES_THRESHOLD:
        mom = _moments(b, 16)
        acc = 0.0 + 0.0j
        term = 1.0 + 0.0j
        for k in range(9):
            if k > 0:
                term *= 1j * a / (2.0 * k)
            contrib = term * mom[2 * k]
            acc += contrib
            if abs(contrib) < 1e-20:
                break
        val = np.exp(1j * c) * acc
        return float(val.real), float(val.imag)
    if a < 0.0:
        x, y = _clothoid_cs(-a, -b, -c)
        return x, -y
    sp = math.sqrt(math.pi * a)
    u0 = b / sp
    u1 = (a + b) / sp
    S0, C0 = special.fresnel(u0)
    S1, C1 = special.fresnel(u1)
    w = c - b * b / (2.0 * a)
    val = math.sqrt(math.pi / a) * np.exp(1j * w) * complex(C1 - C0, S1 - S0)
    return float(val.real), float(val.imag)


def eval_clothoid(seg: ClothoidSegment, s: float) -> tuple[Pose2, float]:
    """Pose and curvature of a clothoid segment at abscissa s in [0, length]."""
    if not math.isfinite(s):
        raise ValueError("abscissa must be finite")
    if s < -1e-12 or s > seg.length + 1e-12:
        raise ValueError(f"abscissa {s} outside [0, {seg.length}]")
    s = min(max(s, 0.0), seg.length)
    p0 = seg.start
    if s == 0.0:
        return p0, seg.kappa0
    X, Y = _clothoid_cs(seg.kappa_rate * s * s, seg.kappa0 * s, p0.theta)
    theta = p0.theta + seg.kappa0 * s + 0.5 * seg.kappa_rate * s * s
    return Pose2(p0.x + s * X, p0.y + s * Y, theta), seg.kappa0 + seg.kappa_rate * s


# ---------------------------------------------------------------------------
# G1 Hermite fitting

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(32)
_GL_T = 0.5 * (_GL_NODES + 1.0)
_GL_W = 0.5 * _GL_WEIGHTS


def _g(A: float, delta: float, phi0: float) -> float:
    # chord-normal closure residual
    _, y = _clothoid_cs(2.0 * A, delta - A, phi0)
    return y


def _g_prime(A: float, delta: float, phi0: float) -> float:
    t = _GL_T
    phase = phi0 + (delta - A) * t + A * t * t
    return float(np.sum(_GL_W * (t * t - t) * np.cos(phase)))


def _fit_params(
    xa: float, ya: float, tha: float, xb: float, yb: float, thb: float, max_iter: int = 100
) -> tuple[float, float, float]:
    """Solve the G1 Hermite problem; returns (kappa0, kappa_rate, length)."""
    dx = xb - xa
    dy = yb - ya
    r = math.hypot(dx, dy)
    if r < 1e-12:
        raise ClothoidFitError("endpoints coincide; cannot fit a clothoid")
    phi = math.atan2(dy, dx)
    phi0 = wrap_angle(tha - phi)
    phi1 = wrap_angle(thb - phi)
    delta = phi1 - phi0

    A = 3.0 * (phi0 + phi1)
    g = _g(A, delta, phi0)
    converged = abs(g) < 1e-14
    for _ in range(max_iter):
        if converged:
            break
        gp = _g_prime(A, delta, phi0)
        if gp == 0.0:
            break
        step = -g / gp
        # damp until the residual actually shrinks
        for _ in range(16):
            g_new = _g(A + step, delta, phi0)
            if abs(g_new) < abs(g):
                break
            step *= 0.5
        else:
            break
        A += step
        g = g_new
        if abs(g) < 1e-14:
            converged = True
    if not converged:
        A_b = _bisect_root(delta, phi0, A)
        if A_b is None:
            raise ClothoidFitError("G1 Hermite solver did not converge")
        A = A_b

    X, _ = _clothoid_cs(2.0 * A, delta - A, phi0)
    if X <= 0.0:
        raise ClothoidFitError("degenerate fit (non-positive chord projection)")
    L = r / X
    return (delta - A) / L, 2.0 * A / (L * L), L


def fit_g1(p_a: Pose2, p_b: Pose2, max_iter: int = 100) -> ClothoidSegment:
    """Fit the single clothoid joining two poses with G1 continuity.

    Solves the one-parameter Hermite closure equation by damped Newton with
    a bracketed-bisection fallback.  Raises ClothoidFitError on coincident
    endpoints or non-convergence; the returned segment is verified to hit
    the target pose within 1e-8 m / 1e-8 rad.
    """
    kappa0, kappa_rate, L = _fit_params(p_a.x, p_a.y, p_a.theta, p_b.x, p_b.y, p_b.theta, max_iter)
    seg = ClothoidSegment(start=p_a, kappa0=kappa0, kappa_rate=kappa_rate, length=L)

    end, _ = eval_clothoid(seg, L)
    if (
        abs(end.x - p_b.x) > 1e-8
        or abs(end.y - p_b.y) > 1e-8
        or abs(wrap_angle(end.theta - p_b.theta)) > 1e-8
    ):
        raise ClothoidFitError(
            f"fit residual too large: endpoint {end} vs target {p_b}"
        )
    return seg


def _bisect_root(delta: float, phi0: float, A_guess: float) -> float | None:
    """Bracket a sign change of g around the guess, then bisect."""
    span = max(1.0, abs(A_guess))
    lo = hi = None
    prev_a = A_guess - 10.0 * span
    prev_g = _g(prev_a, delta, phi0)
    for a in np.linspace(A_guess - 10.0 * span, A_guess + 10.0 * span, 201)[1:]:
        ga = _g(float(a), delta, phi0)
        if prev_g == 0.0:
            return prev_a
        if prev_g * ga < 0.0:
            lo, glo = prev_a, prev_g
            hi = float(a)
            break
        prev_a, prev_g = float(a), ga
    if lo is None:
        return None
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        gm = _g(mid, delta, phi0)
        if gm == 0.0 or hi - lo < 1e-15 * max(1.0, abs(mid)):
            return mid
        if glo * gm < 0.0:
            hi = mid
        else:
            lo, glo = mid, gm
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# Waypoint spline

Waypoint = "Pose2 | tuple[float, float]"


def _parse_waypoints(waypoints) -> tuple[np.ndarray, list[float | None]]:
    pts = []
    headings: list[float | None] = []
    for w in waypoints:
        if isinstance(w, Pose2):
            pts.append((w.x, w.y))
            headings.append(w.theta)
        else:
            x, y = float(w[0]), float(w[1])
            pts.append((x, y))
            headings.append(None)
    return np.asarray(pts, dtype=float), headings


def _initial_headings(pts: np.ndarray, fixed: list[float | None]) -> np.ndarray:
    n = len(pts)
    out = np.empty(n)
    for i in range(n):
        if fixed[i] is not None:
            out[i] = fixed[i]
        elif i == 0:
            d = pts[1] - pts[0]
            out[i] = math.atan2(d[1], d[0])
        elif i == n - 1:
            d = pts[-1] - pts[-2]
            out[i] = math.atan2(d[1], d[0])
        else:
            d = pts[i + 1] - pts[i - 1]
            out[i] = math.atan2(d[1], d[0])
    return out


# weight of squared curvature jumps at spline joints relative to the
# per-segment integral of (d kappa / d s)^2; a true curvature step makes
# that integral infinite, so the discrete objective must charge for jumps
# or the optimum degenerates to arcs with maximal joint discontinuity
G2_JOINT_WEIGHT = 10.0


def _segment_params(xa, ya, tha, xb, yb, thb) -> tuple[float, float, float] | None:
    """(kappa0, kappa_rate, length) of the G1 fit, or None if infeasible."""
    try:
        return _fit_params(xa, ya, tha, xb, yb, thb)
    except ClothoidFitError:
        return None


def _kappa_end(params: tuple[float, float, float]) -> float:
    k0, rate, length = params
    return k0 + rate * length


def _rate_cost(params: tuple[float, float, float]) -> float:
    _, rate, length = params
    return rate * rate * length


def _newton_1d(f, th0: float, f0: float, max_iter: int = 25) -> tuple[float, float]:
    """Safeguarded finite-difference Newton descent on a smooth 1-D cost."""
    th = th0
    h = 1e-5
    for _ in range(max_iter):
        fp = f(th + h)
        fm = f(th - h)
        if not (math.isfinite(fp) and math.isfinite(fm)):
            break
        d1 = (fp - fm) / (2.0 * h)
        d2 = (fp - 2.0 * f0 + fm) / (h * h)
        if d2 > 1e-12:
            step = -d1 / d2
        else:
            step = -math.copysign(0.1, d1)
        step = max(-0.5, min(0.5, step))
        f1 = f(th + step)
        shrink = 0
        while f1 > f0 and shrink < 20:
            step *= 0.5
            f1 = f(th + step)
            shrink += 1
        if f1 > f0:
            break
        th += step
        f0 = f1
        if abs(step) < 1e-12:
            break
    return th, f0


def fit_spline(waypoints, max_passes: int = 30, tol: float = 1e-6) -> ClothoidPath:
    """Interpolate waypoints with a G1 clothoid spline.

    Waypoints are Pose2 (heading fixed) or (x, y) pairs (heading free).  Free
    headings start from chord directions and are refined by coordinate
    descent (safeguarded Newton per heading) on the integral of
    (d kappa / d s)^2 plus ``G2_JOINT_WEIGHT`` times the squared curvature
    jump at each joint, sweeping until the per-sweep improvement drops
    below ``tol`` (and heading motion is negligible) or ``max_passes``
    sweeps.
    """
    pts, fixed = _parse_waypoints(waypoints)
    if len(pts) < 2:
        raise ValueError("need at least 2 waypoints")
    headings = _initial_headings(pts, fixed)
    free = [i for i in range(len(pts)) if fixed[i] is None]

    def pose(i: int) -> Pose2:
        return Pose2(pts[i][0], pts[i][1], headings[i])

    n = len(pts)

    def segment(i: int, tha: float, thb: float):
        return _segment_params(*pts[i], tha, *pts[i + 1], thb)

    def make_local_cost(i: int):
        """Cost of heading theta_i: the two adjacent segments' smoothness
        plus the curvature jumps at joints i-1, i and i+1 (the outer
        segments are constants for this coordinate)."""
        prev = segment(i - 2, headings[i - 2], headings[i - 1]) if i >= 2 else None
        nxt = segment(i + 1, headings[i + 1], headings[i + 2]) if i + 2 <= n - 1 else None

        def cost(theta: float) -> float:
            left = segment(i - 1, headings[i - 1], theta) if i > 0 else None
            right = segment(i, theta, headings[i + 1]) if i < n - 1 else None
            if (i > 0 and left is None) or (i < n - 1 and right is None):
                return math.inf
            total = 0.0
            if left is not None:
                total += _rate_cost(left)
            if right is not None:
                total += _rate_cost(right)
            if left is not None and right is not None:
                jump = _kappa_end(left) - right[0]
                total += G2_JOINT_WEIGHT * jump * jump
            if left is not None and prev is not None:
                jump = _kappa_end(prev) - left[0]
                total += G2_JOINT_WEIGHT * jump * jump
            if right is not None and nxt is not None:
                jump = _kappa_end(right) - nxt[0]
                total += G2_JOINT_WEIGHT * jump * jump
            return total

        return cost

    if free:
        for _ in range(max_passes):
            improvement = 0.0
            moved = 0.0
            for i in free:
                local_cost = make_local_cost(i)
                before = local_cost(headings[i])
                if not math.isfinite(before):
                    # scan for a workable heading before polishing
                    cands = headings[i] + np.linspace(-1.2, 1.2, 25)
                    costs = [local_cost(float(c)) for c in cands]
                    j = int(np.argmin(costs))
                    headings[i], before = float(cands[j]), costs[j]
                th, after = _newton_1d(local_cost, headings[i], before)
                if after < before:
                    improvement += before - after
                    moved = max(moved, abs(th - headings[i]))
                    headings[i] = th
            if improvement < tol and moved < 1e-10:
                break

    segments = []
    for i in range(len(pts) - 1):
        try:
            seg = fit_g1(pose(i), pose(i + 1))
        except ClothoidFitError as exc:
            raise ClothoidFitError(f"spline fit failed at waypoint {i}: {exc}") from exc
        segments.append(seg)
    # share exact joint poses so the chain is G1 by construction
    chained = [segments[0]]
    for i in range(1, len(segments)):
        prev_end = chained[-1].end
        s = segments[i]
        chained.append(
            ClothoidSegment(start=prev_end, kappa0=s.kappa0, kappa_rate=s.kappa_rate, length=s.length)
        )
    return ClothoidPath(segments=tuple(chained))


def sample_path(path: ClothoidPath, step: float) -> np.ndarray:
    """Sample a path at uniform arc length.

    Returns an (N, 5) array with columns (s, x, y, theta, kappa); both
    endpoints are always included, so the final spacing may be shorter.
    Heading is unwrapped along the path so consecutive differences stay
    continuous (individual poses wrap theta into (-pi, pi], which would
    otherwise inject +/-2 pi jumps into net-heading computations).
    """
    if step <= 0.0:
        raise ValueError("step must be > 0")
    total = path.total_length
    svals = list(np.arange(0.0, total, step))
    if not svals or total - svals[-1] > 1e-9:
        svals.append(total)
    out = np.empty((len(svals), 5))
    for i, s in enumerate(svals):
        p, kappa = path.point_at(float(s))
        out[i] = (s, p.x, p.y, p.theta, kappa)
    out[:, 3] = np.unwrap(out[:, 3])
    return out
