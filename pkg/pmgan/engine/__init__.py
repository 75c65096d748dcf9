"""Tensor arithmetic, reverse-mode differentiation and optimisation."""

from pmgan.engine.tensor import Tape, Tensor, backward

__all__ = ["Tape", "Tensor", "backward"]
