"""Memory-efficient decoupled prompt tuning for domain-incremental learning."""

from dipt.diffcore import Tensor, Tape, Adam, grad_check

__version__ = "0.1.0"

__all__ = ["Tensor", "Tape", "Adam", "grad_check", "__version__"]
