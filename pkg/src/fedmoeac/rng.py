"""Named deterministic random sub-streams.

Every stochastic step of a run draws from its own generator, derived from
the master seed plus a path of labels (for example ``("round", 3, "client",
7)`` or ``("round", 3, "solution", 41, "client", 7)``). Derivation hashes
the label path with SHA-256, so streams are independent of evaluation
order and of how many workers run concurrently. Matching the structure in
another language only requires the same label paths; bit-exact cross
language generator output is not a goal.
"""

from __future__ import annotations

import hashlib

import numpy as np

PathPart = int | str


def substream(master_seed: int, *path: PathPart) -> np.random.Generator:
    """Return the generator for ``path`` under ``master_seed``.

    The same (seed, path) pair always yields a generator producing the
    same sequence; distinct paths yield statistically independent streams.
    """
    digest = hashlib.sha256(_encode(master_seed, path)).digest()
    words = np.frombuffer(digest, dtype=np.uint32)
    return np.random.default_rng(np.random.SeedSequence(entropy=words.tolist()))


def _encode(master_seed: int, path: tuple[PathPart, ...]) -> bytes:
    parts = [str(master_seed)]
    for part in path:
        if not isinstance(part, (int, str)):
            raise ValueError(f"stream path parts must be int or str, got {type(part).__name__}")
        parts.append(str(part))
    return "/".join(parts).encode("utf-8")
