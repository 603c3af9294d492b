"""Weight sequences, weight functions and the Joris division construction at desk scale."""

__version__ = "0.1.0"
