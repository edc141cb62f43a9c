"""Confidence-aware depth supervision: ensemble confidence, weighted losses,
confidence head, synthetic data and evaluation metrics."""

from ._core import *  # noqa: F401,F403
from ._core import ConfdepthError, ConfigError, DataError, NumericError  # noqa: F401
