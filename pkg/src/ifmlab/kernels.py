"""Backend selection for the inner loops.

The compiled extension is used when it was built; otherwise the numpy
fallback is selected at import time. :func:`use_backend` switches at runtime
(tests and the benchmark run both).
"""

import numpy as np

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

BACKENDS = ("compiled", "python") if _ckernels is not None else ("python",)
_active = _ckernels if _ckernels is not None else _pykernels


def backend() -> str:
    return "compiled" if _active is _ckernels and _ckernels is not None else "python"


def use_backend(name: str) -> None:
    global _active
    if name == "python":
        _active = _pykernels
    elif name == "compiled":
        if _ckernels is None:
            raise RuntimeError("compiled kernels are not available; build the extension first")
        _active = _ckernels
    else:
        raise ValueError(f"unknown backend {name!r}")


def _c(a):
    return np.ascontiguousarray(a, dtype=np.complex128)


def effective_recursion(V, psi0, block):
    return _active.effective_recursion(_c(V), _c(psi0), _c(block))


def channel_recursion(V, rho0, kraus):
    return _active.channel_recursion(_c(V), _c(rho0), _c(kraus))


def controlled_sequence(gates, target_only, state0):
    mask = np.ascontiguousarray(target_only, dtype=np.uint8)
    return _active.controlled_sequence(_c(gates), mask, _c(state0))
