"""Kernel backend selection.

Prefers the compiled extension; falls back to the NumPy implementation when
the extension has not been built.  Set ``SURVEVAL_PURE_PYTHON=1`` to force
the fallback (useful for benchmarking and debugging).
"""
import os

from . import _fallback

STOP_BUDGET = _fallback.STOP_BUDGET
STOP_EXIT = _fallback.STOP_EXIT
STOP_CROSSED = _fallback.STOP_CROSSED

if os.environ.get("SURVEVAL_PURE_PYTHON"):
    _impl = _fallback
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = _fallback

trace_characteristic = _impl.trace_characteristic
flow_values = _impl.flow_values


def backend_name() -> str:
    return "compiled" if _impl is not _fallback else "fallback"
