"""Select the kernel backend at import time.

LOBEXEC_BACKEND=auto   compiled extension if available, else pure Python
LOBEXEC_BACKEND=cython require the compiled extension
LOBEXEC_BACKEND=python force the pure-Python fallback

Both backends are bit-identical by construction, so the choice only
affects speed. ``kernels`` is the selected module; ``BACKEND`` its name.
"""

import os

_requested = os.environ.get("LOBEXEC_BACKEND", "auto").strip().lower() or "auto"

if _requested == "python":
    from . import _kernels_py as kernels
elif _requested in ("auto", "cython"):
    try:
        from . import _kernels as kernels  # type: ignore[no-redef]
    except ImportError:
        if _requested == "cython":
            raise ImportError(
                "LOBEXEC_BACKEND=cython but the compiled extension is not "
                "importable; rebuild the package or unset the variable"
            ) from None
        from . import _kernels_py as kernels
else:
    raise ValueError(
        f"LOBEXEC_BACKEND={_requested!r} not recognised "
        "(expected auto, cython or python)"
    )

BACKEND: str = kernels.BACKEND
