"""Deterministic smart-grid CPS simulator with a hybrid (virtual + physical) monitor."""

__version__ = "0.1.0"
