"""Accuracy and precision experiments over a grid of change counts and shift sizes."""
