"""Positivity-preserving upwind finite volume solver for two-species kinetic
swarming models in one space and one velocity dimension."""

__version__ = "0.1.0"
