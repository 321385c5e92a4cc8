"""Integer height functions dual to planar O(2) spin models."""

__version__ = "0.1.0"
