"""Deterministic derivation of independent random streams from one seed.

Every random stream in a run is addressed by ``(seed, *labels)``. The labels
are hashed with CRC-32 into the ``spawn_key`` of a
:class:`numpy.random.SeedSequence`, so the stream for a given label never
depends on which other streams exist. Adding a sweep cell or a node therefore
leaves every other stream untouched.

Labels used by the trainer and harness:

``dataset``, ``dataset/test``
    synthetic data generation
``partition``
    IID and skewed partitioning
``init``
    the shared initial model (every node starts from the same point)
``node/<i>/batches``, ``node/<i>/compress``
    per-node minibatch order and compressor randomness
"""

from __future__ import annotations

import zlib

import numpy as np


def _label_key(label: object) -> int:
    return zlib.crc32(str(label).encode("utf-8"))


def substream_seed(seed: int, *labels: object) -> np.random.SeedSequence:
    """Return the seed sequence for the stream named by ``labels``."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    return np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_label_key(l) for l in labels))


def substream(seed: int, *labels: object) -> np.random.Generator:
    """Return a fresh PCG64 generator for ``(seed, *labels)``."""
    return np.random.Generator(np.random.PCG64(substream_seed(seed, *labels)))


def substream_int(seed: int, *labels: object) -> int:
    """Return a 32-bit integer seed for APIs that want a plain int."""
    return int(substream_seed(seed, *labels).generate_state(1, dtype=np.uint32)[0])
