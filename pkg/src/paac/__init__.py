"""Synchronous parallel advantage actor-critic on a lockstep environment pool."""

__version__ = "0.1.0"
