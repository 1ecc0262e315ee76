"""Stable seed derivation for mixed int/string seed material."""

from __future__ import annotations

import hashlib

__all__ = ["stable_seed"]


def stable_seed(*parts) -> list[int]:
    """Derive reproducible RNG entropy from arbitrary parts.

    Hash-based, so the result depends only on the values (never on process
    state or platform), which keeps every seeded draw replayable.
    """
    digest = hashlib.sha256("\x1f".join(str(p) for p in parts).encode()).digest()
    return [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
