"""Trapped-ion frequency reference under two-stage continuous dynamical decoupling."""

__version__ = "0.1.0"
