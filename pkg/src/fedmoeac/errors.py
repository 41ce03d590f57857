"""Error taxonomy shared by the library and the command line front end.

ConfigError maps to exit code 1, DataError to exit code 2; anything else
that escapes is a runtime failure (exit code 3). Plain ValueError is used
for bad arguments at the operator level.
"""

from __future__ import annotations


class ConfigError(Exception):
    """Invalid experiment configuration (unknown key, bad value, bad shape)."""


class DataError(Exception):
    """Dataset could not be read or fails its format contract."""
