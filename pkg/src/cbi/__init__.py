"""Control-behavior-integrity monitor for distributed PLC systems."""

__version__ = "0.1.0"
