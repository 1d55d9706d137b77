"""Labeled sub-seed derivation.

Every stochastic stage draws from its own stream, derived from one master
seed and a stage label, so variance sources can be isolated in ablations.
"""
from __future__ import annotations

import hashlib


def derive_seed(master: int, label: str) -> int:
    """Stable 64-bit seed for a named stage under a master seed."""
    digest = hashlib.blake2b(
        f"{int(master)}:{label}".encode("utf-8"), digest_size=8
    ).digest()
    return int.from_bytes(digest, "little")
