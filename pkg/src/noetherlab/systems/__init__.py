"""Model systems: ``oscillator``, ``spheroid`` and ``cms``."""
from . import cms, oscillator, spheroid

SYSTEMS = {"oscillator": oscillator, "spheroid": spheroid, "cms": cms}

__all__ = ["SYSTEMS", "cms", "oscillator", "spheroid"]
