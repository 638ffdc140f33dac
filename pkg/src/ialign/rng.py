"""
Seeded random streams.

All randomness comes from numpy's PCG64 bit generator. A stream is keyed by
the user seed plus a tuple of small integers (trial index, purpose tag, link
indices, ...) through ``SeedSequence(seed, spawn_key=key)``, so any trial or
link can be regenerated on its own and the draw order between workers never
matters.

Complex Gaussians use the polar Box-Muller transform on PCG64 uniforms:
``z = sqrt(-ln(1 - u1)) * exp(2j*pi*u2)`` is exactly CN(0, 1), i.e. real and
imaginary parts are independent N(0, 1/2).
"""
from __future__ import annotations

import numpy as np

# purpose tags, kept distinct so different draws never share a stream
TAG_LINK = 1
TAG_TAPS = 2
TAG_COMMON = 3
TAG_PRECODER = 4
TAG_SOLVER = 5


def substream(seed: int, *key: int) -> np.random.Generator:
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, *key: int) -> int:
    """A 63-bit integer seed derived from ``(seed, key)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    u1 = rng.random(shape)
    u2 = rng.random(shape)
    radius = np.sqrt(-np.log1p(-u1))
    return radius * np.exp(2j * np.pi * u2)
