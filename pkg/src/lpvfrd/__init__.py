"""Data-driven gain-scheduled controller synthesis from frozen FRF data."""

__version__ = "0.1.0"
