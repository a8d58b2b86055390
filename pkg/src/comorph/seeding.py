"""Keyed, counter-free seed derivation.

Every random stream in a run is derived from the master seed plus a tuple of
coordinates (design name, iteration, round, sample, episode, ...), so results
never depend on evaluation order or thread scheduling.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

_MASK64 = (1 << 64) - 1


def derive_seed(master: int, *parts: int | str) -> int:
    """Hash (master, *parts) into a 64-bit seed.

    Parts are length-prefixed and type-tagged so ("ab", "c") and ("a", "bc")
    derive different seeds.
    """
    h = hashlib.blake2b(digest_size=8, key=struct.pack("<Q", master & _MASK64))
    for part in parts:
        if isinstance(part, str):
            raw = part.encode("utf-8")
            h.update(b"s" + struct.pack("<I", len(raw)) + raw)
        elif isinstance(part, (int, np.integer)):
            h.update(b"i" + struct.pack("<q", int(part)))
        else:
            raise TypeError(f"unsupported seed part: {part!r}")
    return int.from_bytes(h.digest(), "little")


def derive_rng(master: int, *parts: int | str) -> np.random.Generator:
    """PCG64 generator seeded from :func:`derive_seed`."""
    return np.random.Generator(np.random.PCG64(derive_seed(master, *parts)))
