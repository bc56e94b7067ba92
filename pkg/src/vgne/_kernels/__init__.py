"""Backend selection for the iteration kernels.

Imports the compiled runners when the extension built, otherwise the
numpy fallback.  ``VGNE_BACKEND`` forces the choice: ``compiled`` raises
if the extension is missing, ``python`` skips it, ``auto`` (default)
prefers compiled.  ``BACKEND`` names what was picked.
"""

import os

from . import pyloops

_choice = os.environ.get("VGNE_BACKEND", "auto").strip().lower() or "auto"
if _choice not in ("auto", "compiled", "python"):
    raise ImportError(
        f"VGNE_BACKEND must be one of auto, compiled, python; received {_choice!r}"
    )

if _choice == "python":
    _impl = pyloops
    BACKEND = "python"
else:
    try:
        from . import _cyloops as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        if _choice == "compiled":
            raise
        _impl = pyloops
        BACKEND = "python"

pfb_run = _impl.pfb_run
consensus_run = _impl.consensus_run

STATUS_CONVERGED = pyloops.STATUS_CONVERGED
STATUS_BUDGET = pyloops.STATUS_BUDGET
STATUS_NONFINITE = pyloops.STATUS_NONFINITE
