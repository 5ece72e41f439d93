"""Pure-Python hashing kernel: FNV-1a-64 and signed token accumulation.

Reference implementation; ``tracesmith._hashcore`` is the compiled twin and
must produce bit-identical results.
"""
from __future__ import annotations

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK = (1 << 64) - 1


def fnv1a64(data: bytes) -> int:
    """FNV-1a 64-bit hash of *data*."""
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _MASK
    return h


def accumulate_tokens(out, tokens) -> None:
    """Hash each token and accumulate its sign into ``out`` in place.

    For token t: index = FNV-1a-64(t) mod len(out); sign is +1 when the
    hash's top bit is clear, -1 otherwise.
    """
    dim = len(out)
    for tok in tokens:
        h = _FNV_OFFSET
        for b in tok:
            h = ((h ^ b) * _FNV_PRIME) & _MASK
        if h >> 63:
            out[h % dim] -= 1.0
        else:
            out[h % dim] += 1.0
