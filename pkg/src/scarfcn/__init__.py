"""Multi-level myocardial scar detection from regional strain traces."""

__version__ = "0.1.0"
