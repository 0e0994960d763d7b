"""Counter-based random streams shared by sampling and noise injection.

Every row of a generated table owns a fixed block of the Philox counter
space, so any row range can be regenerated independently of the rows before
it. This is what makes prefixes of a large table identical to smaller
tables and lets row chunks be produced in any order.
"""

from __future__ import annotations

import numpy as np

STREAM_VERSION = 1

_KIND_TAGS = {"sample": 0, "L": 1, "S": 2, "I": 3, "M": 4, "learner": 5}


def philox_key(seed: int, *tags: int) -> np.ndarray:
    seq = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, STREAM_VERSION, *tags])
    return seq.generate_state(2, dtype=np.uint64)


def component_seed(seed: int, kind: str) -> int:
    """Derive a 63-bit subseed for one noise component from a master seed."""
    state = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, _KIND_TAGS[kind]]).generate_state(
        1, dtype=np.uint64
    )
    return int(state[0] >> np.uint64(1))


def _padded(width: int) -> int:
    return max(4, -(-width // 4) * 4)


def row_uniforms(key: np.ndarray, start: int, stop: int, width: int, chunk: int = 1 << 16) -> np.ndarray:
    """Uniforms in [0, 1) for rows ``start..stop-1``, ``width`` draws per row.

    Row ``r`` always receives the same draws regardless of ``start``.
    """
    if stop < start:
        raise ValueError("stop must be >= start")
    pad = _padded(width)
    out = np.empty((stop - start, width), dtype=np.float64)
    for lo in range(start, stop, chunk):
        hi = min(stop, lo + chunk)
        bitgen = np.random.Philox(key=key)
        bitgen.advance(lo * (pad // 4))
        out[lo - start : hi - start] = np.random.Generator(bitgen).random((hi - lo, pad))[:, :width]
    return out


def generator(seed: int, kind: str) -> np.random.Generator:
    """Plain sequential generator for choices that do not depend on rows."""
    return np.random.Generator(np.random.Philox(key=philox_key(seed, _KIND_TAGS[kind], 1)))
