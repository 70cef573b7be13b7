"""Shared-authority walker navigation library.

Subsystems: clothoid geometry, occupancy maps, probabilistic roadmaps,
trajectory feature windows, from-scratch neural nets, behavioural maps,
the visco-elastic shared controller and the experiment harness.
"""

__version__ = "0.1.0"
