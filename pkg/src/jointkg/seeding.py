"""Named random sub-streams.

Every random draw in the toolkit flows from one root seed through a named
stream, so components can be enabled or disabled without shifting the draws
of unrelated components.
"""
from __future__ import annotations

import hashlib

import numpy as np


def _name_word(name: str) -> int:
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def substream(seed: int, *names: str) -> np.random.Generator:
    """Generator for the sub-stream identified by `names` under `seed`."""
    entropy = [int(seed)] + [_name_word(n) for n in names]
    return np.random.default_rng(np.random.SeedSequence(entropy))

