"""Effective rank of the classical Fisher information as an expressivity
measure for quantum neural networks, and an RL search that maximises it."""

__version__ = "0.1.0"
