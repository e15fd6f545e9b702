"""Adversarial attention motion synthesis at desk scale."""

__version__ = "0.1.0"
