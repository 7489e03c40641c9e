"""Shared error categories.

Two marker bases drive CLI exit codes: ConfigError -> 2, DataError -> 3.
Anything else bubbling out of a stage is an internal error -> 4.
"""


class ConfigError(Exception):
    """Invalid or inconsistent pipeline configuration."""


class DataError(Exception):
    """Problem with input data (files, manifests, labels, stores)."""
