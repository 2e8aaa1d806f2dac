"""Two-expert drug-target interaction model with pseudo-label exchange."""

__version__ = "0.1.0"
