"""Optimal geo-indistinguishable location obfuscation."""
__version__ = "0.1.0"
