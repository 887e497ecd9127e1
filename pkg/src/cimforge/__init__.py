"""Behavioral simulator of an RRAM compute-in-memory core with a regulated
passive integrator, plus pseudo-binary quantization and bit-line weight mapping."""

__version__ = "0.1.0"
