"""Power/performance/area/cost modeling and design-space search for chiplet AI accelerators."""

__version__ = "0.1.0"
