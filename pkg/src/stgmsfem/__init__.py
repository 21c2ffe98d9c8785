"""Space-time GMsFEM for parabolic problems with time-dependent high-contrast media."""

__version__ = "0.1.0"
