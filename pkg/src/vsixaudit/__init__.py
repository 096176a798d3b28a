"""Static security scanner for editor extension packages."""

__version__ = "0.1.0"
