"""Surface orientation from the perspective distortion of a planar texture."""

__version__ = "0.1.0"
