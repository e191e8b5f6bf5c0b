"""Backend selection for the integration kernel.

The compiled extension is used when it imports; otherwise the pure-Python
mirror. Set ``SADDLEFLOW_BACKEND=python`` to force the fallback.
"""
import os

from . import _pykernel

BACKENDS = {"python": _pykernel.run}

try:
    from . import _ckernel
except ImportError:  # extension not built
    _ckernel = None
else:
    BACKENDS["compiled"] = _ckernel.run

if os.environ.get("SADDLEFLOW_BACKEND", "").lower() == "python" or _ckernel is None:
    BACKEND = "python"
else:
    BACKEND = "compiled"


def get(name: str | None = None):
    """Kernel ``run`` function for ``name`` (default: the import-time selection)."""
    name = name or BACKEND
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} unavailable; have {sorted(BACKENDS)}") from None
