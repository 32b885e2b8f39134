"""Backend selection for the solver inner loops.

A compiled extension core is used when it imported successfully; the
numpy implementation in ``_kernels_py`` is the fallback.  Setting the
environment variable ``SADDLEKIT_PURE_PYTHON=1`` forces the fallback.
Both backends expose identical ``run_single`` / ``run_distributed_diag``
signatures and are cross-checked in the test suite.
"""

from __future__ import annotations

import os

from . import _kernels_py

try:  # pragma: no cover - depends on the build environment
    from . import _kernels as _compiled
except ImportError:  # pragma: no cover
    _compiled = None

STATUS_CONVERGED = _kernels_py.STATUS_CONVERGED
STATUS_MAX_ITER = _kernels_py.STATUS_MAX_ITER
STATUS_DIVERGED = _kernels_py.STATUS_DIVERGED

MODE_INCREMENTAL = _kernels_py.MODE_INCREMENTAL
MODE_NONINCREMENTAL = _kernels_py.MODE_NONINCREMENTAL
MODE_FORWARD_BACKWARD = _kernels_py.MODE_FORWARD_BACKWARD

ALG_PD = _kernels_py.ALG_PD
ALG_EXTRA = _kernels_py.ALG_EXTRA
ALG_EXACT_DIFFUSION = _kernels_py.ALG_EXACT_DIFFUSION
ALG_DIFFUSION = _kernels_py.ALG_DIFFUSION
ALG_DIGING = _kernels_py.ALG_DIGING
ALG_DLM = _kernels_py.ALG_DLM


def compiled_available() -> bool:
    return _compiled is not None


def _forced_pure() -> bool:
    return os.environ.get("SADDLEKIT_PURE_PYTHON", "") not in ("", "0")


def active_backend() -> str:
    """Name of the backend used by default: ``compiled`` or ``python``."""
    if _compiled is None or _forced_pure():
        return "python"
    return "compiled"


def backend_module(name: str | None = None):
    """Backend module by name (``compiled`` / ``python``; None = active)."""
    if name is None:
        name = active_backend()
    if name == "python":
        return _kernels_py
    if name == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernel extension is not available")
        return _compiled
    raise ValueError(f"unknown backend '{name}'")


def run_single(*args, backend: str | None = None):
    return backend_module(backend).run_single(*args)


def run_distributed_diag(*args, backend: str | None = None):
    return backend_module(backend).run_distributed_diag(*args)
