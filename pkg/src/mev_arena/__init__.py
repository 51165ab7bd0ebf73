"""Laboratory for MEV games: exact execution, block building, ordering
mechanisms, a stage-game simulator and equilibrium metrics."""

__version__ = "0.1.0"
