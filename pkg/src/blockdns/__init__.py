"""Resolver gateway and forensic analytics for blockchain DNS (Namecoin, Emercoin)."""

__version__ = "0.1.0"
