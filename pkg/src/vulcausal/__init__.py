"""Spurious-feature discovery and backdoor-adjusted training for C vulnerability detectors."""

__version__ = "0.1.0"
