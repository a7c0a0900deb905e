"""Double-DQN optimal trade execution on second-level midprice data."""

__version__ = "0.1.0"
