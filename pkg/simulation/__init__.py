"""Synthetic piecewise-exponential series and the two-server drive-in case study."""
