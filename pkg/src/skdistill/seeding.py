"""Deterministic RNG streams derived from one integer seed plus labels."""

from __future__ import annotations

import hashlib

import numpy as np


def _label_key(label) -> int:
    digest = hashlib.sha256(str(label).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def rng_for(seed: int, *labels) -> np.random.Generator:
    """Independent, reproducible stream for (seed, labels)."""
    keys = tuple(_label_key(lab) for lab in labels)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=keys)))


def derive_seed(seed: int, *labels) -> int:
    """Stable derived integer seed for (seed, labels)."""
    text = "|".join([str(int(seed))] + [str(lab) for lab in labels])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") % (2**63)
