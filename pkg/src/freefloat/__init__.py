"""Free-floating multi-arm space robot dynamics and balance control."""
__version__ = "0.1.0"
