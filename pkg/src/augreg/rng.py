"""Deterministic random streams.

All randomness flows through Philox-4x64, a counter-based generator. A
stream is identified by the 128-bit key (user seed, domain<<48 | index),
so any replicate can be regenerated in isolation and results do not
depend on scheduling or worker count.
"""

from __future__ import annotations

import numpy as np

# Domain tags keep independent uses of the same user seed from colliding.
DOMAIN_SIMULATE = 1
DOMAIN_BOOTSTRAP = 2
DOMAIN_GENERAL = 3

_MASK64 = (1 << 64) - 1
_MAX_INDEX = 1 << 48


def stream(seed: int, domain: int, index: int = 0) -> np.random.Generator:
    """Return the Philox generator for (seed, domain, index)."""
    if not 0 <= index < _MAX_INDEX:
        raise ValueError(f"stream index {index} outside [0, 2^48)")
    key = np.array([seed & _MASK64, ((domain << 48) | index) & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
