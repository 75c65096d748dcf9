"""Partial-modal GAN feature transfer: library and command-line tools."""

__version__ = "0.1.0"
