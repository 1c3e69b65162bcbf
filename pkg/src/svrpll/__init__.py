"""Joint tour and landmark-placement planning with bearing-only localization checks."""

__version__ = "0.1.0"
