"""Change-point detectors, Box-Cox transform, calibration and goodness-of-fit."""

__version__ = "0.3.0"
