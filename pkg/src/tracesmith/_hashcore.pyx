# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hashing kernel: FNV-1a-64 and signed token accumulation.

Bit-compatible with ``tracesmith._hashpure``; selected at import time by
``tracesmith.kernel`` when the extension was built.
"""
from libc.stdint cimport uint64_t

cdef uint64_t FNV_OFFSET = 0xCBF29CE484222325UL
cdef uint64_t FNV_PRIME = 0x100000001B3UL


cdef inline uint64_t _hash_bytes(const unsigned char* p, Py_ssize_t n) nogil:
    cdef uint64_t h = FNV_OFFSET
    cdef Py_ssize_t i
    for i in range(n):
        h = (h ^ p[i]) * FNV_PRIME
    return h


def fnv1a64(data: bytes) -> int:
    """FNV-1a 64-bit hash of *data*."""
    cdef const unsigned char* p = data
    return _hash_bytes(p, len(data))


def accumulate_tokens(double[::1] out, tokens) -> None:
    """Hash each token and accumulate its sign into ``out`` in place."""
    cdef uint64_t dim = <uint64_t> out.shape[0]
    cdef uint64_t h
    cdef const unsigned char* p
    cdef bytes tok
    for tok in tokens:
        p = tok
        h = _hash_bytes(p, len(tok))
        if h >> 63:
            out[h % dim] -= 1.0
        else:
            out[h % dim] += 1.0
