"""Optical IRS channel simulation, coherence analysis, codebooks and JSTS estimation."""

__version__ = "0.1.0"
