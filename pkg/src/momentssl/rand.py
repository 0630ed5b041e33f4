"""Counter-derived random streams.

Every stream is derived from the run seed plus a path of tokens such as
(epoch, batch, view), so any piece of work can be redone in isolation and
results do not depend on scheduling or thread count.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _token_to_int(token) -> int:
    if isinstance(token, (int, np.integer)):
        return int(token) & _MASK64
    if isinstance(token, str):
        digest = hashlib.sha256(token.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "little")
    raise TypeError(f"unsupported stream token type: {type(token)!r}")


def derive_rng(seed: int, *tokens) -> np.random.Generator:
    """Deterministic generator for (seed, *tokens); independent across paths."""
    entropy = [int(seed) & _MASK64] + [_token_to_int(t) for t in tokens]
    return np.random.default_rng(np.random.SeedSequence(entropy))
