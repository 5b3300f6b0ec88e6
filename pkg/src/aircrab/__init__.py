"""Control stack and simulator for a single-wheel hybrid aerial-ground manipulator."""

__version__ = "0.1.0"
