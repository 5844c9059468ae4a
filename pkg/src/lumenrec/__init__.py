"""Synthetic colonoscopy rendering, domain-adapted depth estimation, and 3D reconstruction."""

__version__ = "0.1.0"
