"""Closed-loop driving scenario generation, simulation and evaluation."""

__version__ = "0.1.0"
