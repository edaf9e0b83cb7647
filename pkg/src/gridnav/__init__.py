"""gridnav: a tool-calling agent loop over modular 2D navigation primitives.

Submodules: worldmodel (scenes and occupancy grids), planner (8-directional
A* and waypoint simplification), simulator (deterministic unicycle plant),
controller (PID waypoint tracking), toolproto (XML tool protocol and registry),
agent (interaction loop with pluggable backends), evalharness (metrics and
suite runner).
"""

__version__ = "0.1.0"
