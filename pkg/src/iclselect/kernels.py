"""Kernel dispatch: compiled extension when available, numpy fallback otherwise.

``top_k_desc(scores, k)`` is the single hot kernel behind candidate ranking.
Both implementations honour the same (score desc, index asc) total order and
operate on the same float64 score arrays, so swapping backends never changes
results. ``benchmarks/bench_topk.py`` compares their throughput.
"""

from __future__ import annotations

from iclselect import _topk_py

try:
    from iclselect import _topk as _impl

    HAVE_COMPILED = True
except ImportError:
    _impl = _topk_py
    HAVE_COMPILED = False

KERNEL_BACKEND: str = _impl.BACKEND

top_k_desc = _impl.top_k_desc

# Always-importable handles for parity tests and the benchmark.
top_k_desc_py = _topk_py.top_k_desc
top_k_desc_compiled = _impl.top_k_desc if HAVE_COMPILED else None
