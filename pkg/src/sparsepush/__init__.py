"""Compressed push-sum decentralized SGD over directed, time-varying graphs."""

from ._backend import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
