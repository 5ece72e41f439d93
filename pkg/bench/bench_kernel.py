"""Benchmark the compiled hashing kernel against the pure-Python fallback.

Run after building the extension (``pip install -e . --no-build-isolation``):

    python bench/bench_kernel.py

Embeds a synthetic corpus through both backends and reports throughput.
The corpus shape mirrors real traces (canonical step texts), so the numbers
approximate ``eval``/``suite``-scale workloads.
"""
from __future__ import annotations

import random
import time

import numpy as np

from tracesmith import _hashpure
from tracesmith.consistency import tokenize

try:
    from tracesmith import _hashcore
except ImportError:
    _hashcore = None

WORDS = (
    "click element panel submit order filter column export dashboard invoice "
    "data testid aria label navigate enter release date above below sort"
).split()


def corpus(n_traces: int = 400, steps_per_trace: int = 10, seed: int = 5):
    rng = random.Random(seed)
    out = []
    for _ in range(n_traces):
        items = []
        for _ in range(steps_per_trace):
            goal = " ".join(rng.choice(WORDS) for _ in range(rng.randint(4, 9)))
            attrs = ";".join(
                f"{rng.choice(WORDS)}={rng.choice(WORDS)}-{rng.randrange(100)}"
                for _ in range(rng.randint(1, 3))
            )
            items.append(f"g={goal}|a={rng.choice(WORDS)}|attrs={attrs}")
        out.append([tokenize(item) for item in items])
    return out


def embed_all(traces, accumulate) -> float:
    start = time.perf_counter()
    for trace in traces:
        pooled = np.zeros(768)
        for tokens in trace:
            vec = np.zeros(768)
            accumulate(vec, tokens)
            pooled += vec / np.linalg.norm(vec)
        pooled /= len(trace)
        pooled /= np.linalg.norm(pooled)
    return time.perf_counter() - start


def kernel_only(traces, accumulate) -> float:
    flat = [tokens for trace in traces for tokens in trace]
    vec = np.zeros(768)
    start = time.perf_counter()
    for tokens in flat:
        accumulate(vec, tokens)
    return time.perf_counter() - start


def main() -> None:
    traces = corpus()
    n_tokens = sum(len(t) for trace in traces for t in trace)
    print(f"corpus: {len(traces)} traces, {n_tokens} tokens")

    pure_s = min(embed_all(traces, _hashpure.accumulate_tokens) for _ in range(3))
    pure_k = min(kernel_only(traces, _hashpure.accumulate_tokens) for _ in range(3))
    print(f"pure python : embed {pure_s:.3f}s | kernel {pure_k * 1e3:.1f}ms "
          f"({n_tokens / pure_k / 1e6:.1f} Mtok/s)")

    if _hashcore is None:
        print("compiled    : extension not built")
        return
    compiled_s = min(embed_all(traces, _hashcore.accumulate_tokens) for _ in range(3))
    compiled_k = min(kernel_only(traces, _hashcore.accumulate_tokens) for _ in range(3))
    print(f"compiled    : embed {compiled_s:.3f}s | kernel {compiled_k * 1e3:.1f}ms "
          f"({n_tokens / compiled_k / 1e6:.1f} Mtok/s)")
    print(f"speedup     : embed {pure_s / compiled_s:.1f}x | kernel {pure_k / compiled_k:.1f}x")

    sample = traces[0][0]
    a, b = np.zeros(768), np.zeros(768)
    _hashpure.accumulate_tokens(a, sample)
    _hashcore.accumulate_tokens(b, sample)
    assert np.array_equal(a, b), "backends disagree"
    print("parity      : bit-identical")


if __name__ == "__main__":
    main()
