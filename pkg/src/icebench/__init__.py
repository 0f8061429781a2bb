"""Micro-benchmarks, stimulus and measurement analysis for iCE40 power characterization."""

__version__ = "0.1.0"
