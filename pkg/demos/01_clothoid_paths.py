"""Clothoid building blocks: single-segment fits and multi-waypoint splines.

Fits a G1 Hermite clothoid between two posed endpoints, verifies the fit
by evaluating the segment back at its far end, then threads a smooth
clothoid spline through a hook of waypoints and reports its curvature
profile.

Run:  python3 demos/01_clothoid_paths.py
"""

import math

import numpy as np

from sharedwalk.geometry import Pose2, eval_clothoid, fit_g1, fit_spline, sample_path


def main():
    print("== G1 clothoid fit ==")
    a = Pose2(0.0, 0.0, 0.0)
    b = Pose2(3.0, 2.0, math.radians(75.0))
    seg = fit_g1(a, b)
    print(f"start  ({a.x:.2f}, {a.y:.2f}, {math.degrees(a.theta):6.1f} deg)")
    print(f"goal   ({b.x:.2f}, {b.y:.2f}, {math.degrees(b.theta):6.1f} deg)")
    print(f"fitted segment: length {seg.length:.3f} m, kappa0 {seg.kappa0:+.3f}, "
          f"kappa rate {seg.kappa_rate:+.3f} 1/m^2")
    end, _ = eval_clothoid(seg, seg.length)
    err = math.hypot(end.x - b.x, end.y - b.y)
    print(f"endpoint replay error: {err:.2e} m "
          f"(heading {abs(end.theta - b.theta):.2e} rad)\n")

    print("== clothoid spline through waypoints ==")
    waypoints = [(0, 0), (2, 0.2), (4, 1.5), (5, 3.5), (4.5, 5.5), (3, 6.5)]
    path = fit_spline(waypoints)
    samples = sample_path(path, 0.25)
    print(f"{len(path.segments)} segments, total length {path.total_length:.2f} m")
    print("  s      x      y    theta    kappa")
    for row in samples[:: max(1, len(samples) // 10)]:
        s, x, y, th, ka = row
        print(f"{s:5.2f}  {x:5.2f}  {y:5.2f}  {th:+6.2f}  {ka:+6.3f}")
    print(f"max |kappa| along the path: {np.max(np.abs(samples[:, 4])):.3f} 1/m")


if __name__ == "__main__":
    main()
