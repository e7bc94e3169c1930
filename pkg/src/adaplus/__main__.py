"""Module entry point: ``python -m adaplus`` behaves like ``adaplus-bench``."""

from .cli import entry

entry()
