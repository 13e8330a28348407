"""Labeled, counter-based random streams.

A root seed expands into independent streams, one per (label, index...) tuple.
The derivation is::

    label_key = first 8 bytes (little endian) of BLAKE2b(label)
    seq       = numpy.random.SeedSequence(entropy=seed, spawn_key=(label_key, *index))
    stream    = numpy.random.Generator(numpy.random.PCG64(seq))

The spawn key acts as a counter path below the root seed: each stream depends
only on its own label and indices (packet number, sub-stream number), so
adding a new consumer never perturbs existing ones.
"""
from __future__ import annotations

import functools
import hashlib

import numpy as np

ALICE_BITS = "alice_bits"
BOB_BITS = "bob_bits"
SYNC_BITS = "sync_bits"
DETECTOR = "detector"
EVE = "eve"
DRIFT = "drift"

LABELS = (ALICE_BITS, BOB_BITS, SYNC_BITS, DETECTOR, EVE, DRIFT)

MAX_SEED = 2**64 - 1


@functools.lru_cache(maxsize=None)
def label_key(label: str) -> int:
    return int.from_bytes(hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest(), "little")


def stream(seed: int, label: str, *index: int) -> np.random.Generator:
    """Return the generator for ``label`` (and optional integer indices) under ``seed``."""
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    seq = np.random.SeedSequence(entropy=seed, spawn_key=(label_key(label), *index))
    return np.random.Generator(np.random.PCG64(seq))
