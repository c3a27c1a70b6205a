"""Shared text normalization."""

from __future__ import annotations


def normalize(text: str) -> str:
    """Lowercase, collapse internal whitespace, strip the ends."""
    return " ".join(text.lower().split())


def words(text: str) -> list[str]:
    return normalize(text).split()
