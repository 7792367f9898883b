"""Stable, process-independent seed derivation.

Python hashes strings with a per-process salt, so ``random.Random("qid")``
is not reproducible across runs. Everything here goes through blake2b.
"""

from __future__ import annotations

import hashlib
import random


def stable_seed(*parts: object) -> int:
    """Derive a 64-bit seed from an arbitrary mix of ints/strings."""
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        h.update(repr(part).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "big")


def rng_for(*parts: object) -> random.Random:
    return random.Random(stable_seed(*parts))
