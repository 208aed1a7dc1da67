"""microcarla: a deterministic 2D top-down urban driving simulator with a
lockstep client-server protocol, pseudo-sensors, a topological route
planner, a modular driving agent, demonstration-recording tools, and a
goal-directed navigation benchmark with infraction metrics."""

__version__ = "0.1.0"
