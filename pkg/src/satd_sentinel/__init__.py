"""Detect On-hold self-admitted technical debt and report it once the blocking issue is closed."""

__version__ = "0.1.0"
