"""Kernel backend selection: compiled extension if available, numpy otherwise.

Set ``LQDIV_BACKEND=python`` or ``LQDIV_BACKEND=native`` to force a choice
(forcing ``native`` raises if the extension was not built).  Both backends
implement the contract documented in ``pure.py`` and produce bit-identical
results.
"""

from __future__ import annotations

import os

_requested = os.environ.get("LQDIV_BACKEND", "").strip().lower()

if _requested in ("python", "pure"):
    from . import pure as _impl

    BACKEND = "python"
elif _requested in ("", "native"):
    try:
        from . import native as _impl  # type: ignore[attr-defined]

        BACKEND = "native"
    except ImportError:
        if _requested == "native":
            raise
        from . import pure as _impl

        BACKEND = "python"
else:
    raise ValueError(f"unknown LQDIV_BACKEND={_requested!r}; use 'native' or 'python'")

step_block = _impl.step_block


def backend() -> str:
    """Name of the active kernel backend: 'native' or 'python'."""
    return BACKEND


__all__ = ["step_block", "backend", "BACKEND"]
