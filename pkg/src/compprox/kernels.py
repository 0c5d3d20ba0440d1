"""Backend selection for the hot Picard-Opial loop.

The compiled extension is used when importable, unless the environment
variable ``COMPPROX_BACKEND=python`` forces the numpy fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"
picard_csr = _kernels_py.picard_csr

if os.environ.get("COMPPROX_BACKEND", "").lower() != "python":
    try:
        from ._kernels import picard_csr  # noqa: F811
    except ImportError:  # pragma: no cover - depends on the build
        pass
    else:
        BACKEND = "cython"

BACKENDS = {"python": _kernels_py.picard_csr}
if BACKEND == "cython":
    BACKENDS["cython"] = picard_csr


def get_kernel(name=None):
    """Return the kernel for `name` (default: the active backend)."""
    if name is None:
        return picard_csr
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} unavailable; have {sorted(BACKENDS)}") from None
