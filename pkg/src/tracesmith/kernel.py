"""Hot-kernel selection: compiled extension when built, pure Python otherwise.

Set ``TRACESMITH_PURE=1`` to force the pure path (used by the benchmark and
the parity tests). Both backends are bit-compatible.
"""
from __future__ import annotations

import os

if os.environ.get("TRACESMITH_PURE"):
    from . import _hashpure as _impl

    BACKEND = "pure"
else:
    try:
        from . import _hashcore as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        from . import _hashpure as _impl  # type: ignore[no-redef]

        BACKEND = "pure"

fnv1a64 = _impl.fnv1a64
accumulate_tokens = _impl.accumulate_tokens
