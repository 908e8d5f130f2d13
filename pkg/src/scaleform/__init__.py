"""Arbitrary-scale blind face restoration at toy scale, on a small numpy autodiff engine."""

__version__ = "0.1.0"
