"""Motion-update kernel backend selection.

The compiled Cython kernel is preferred when present; the numpy reference
implementation is the fallback. Both are bit-identical by construction. Set
CURTAINSIM_KERNELS=python or =compiled to force one (forcing "compiled" on an
install without the extension raises).
"""

from __future__ import annotations

import os

from . import _pykernels

_requested = os.environ.get("CURTAINSIM_KERNELS", "").strip().lower()

if _requested in ("", "compiled", "c"):
    try:
        from . import _ckernels as _impl

        BACKEND = "compiled"
    except ImportError:
        if _requested:
            raise ImportError(
                "CURTAINSIM_KERNELS=compiled but the extension is not built; "
                "install with the Cython build step or unset the variable"
            ) from None
        _impl = _pykernels
        BACKEND = "python"
elif _requested in ("python", "py"):
    _impl = _pykernels
    BACKEND = "python"
else:
    raise ValueError(f"unrecognized CURTAINSIM_KERNELS value: {_requested!r}")

motion_scatter = _impl.motion_scatter


def available_backends() -> dict[str, object]:
    """Name -> motion_scatter callable for every importable backend."""
    out = {"python": _pykernels.motion_scatter}
    try:
        from . import _ckernels

        out["compiled"] = _ckernels.motion_scatter
    except ImportError:
        pass
    return out
