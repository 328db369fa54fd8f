"""Python bindings for the latticeloc atom-localization library."""

from ._core import *  # noqa: F401,F403
from ._core import Error, DataError, InvalidArgument

__all__ = [name for name in dir() if not name.startswith("_")]
