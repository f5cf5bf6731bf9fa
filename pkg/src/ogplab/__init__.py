"""Random k-SAT laboratory."""
__version__ = "0.1.0"
