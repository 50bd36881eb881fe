"""Named, counter-based random streams derived from a single root seed.

Every stream is a Philox generator keyed by ``(root_seed, name)``. Streams are
independent of each other and of creation order, so adding a new consumer never
perturbs existing draws. This is what makes matched-seed comparisons across
architectures possible.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _name_words(name: str) -> tuple[int, ...]:
    digest = hashlib.blake2b(name.encode("utf-8"), digest_size=16).digest()
    return tuple(int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4))


def stream(root_seed: int, *parts: object) -> np.random.Generator:
    """Return the generator for the stream named by ``parts`` under ``root_seed``."""
    name = "/".join(str(p) for p in parts)
    seq = np.random.SeedSequence(entropy=int(root_seed), spawn_key=_name_words(name))
    return np.random.Generator(np.random.Philox(seq))
