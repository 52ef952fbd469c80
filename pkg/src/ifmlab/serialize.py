"""JSON encoding of complex arrays, layouts and states.

Complex entries are ``[re, im]`` pairs, matrices are row-major lists of rows,
layouts are ordered ``[name, dim]`` lists. Python's float repr round-trips
doubles exactly, so encode/decode is bit-exact.
"""

from __future__ import annotations

import json
import math

import numpy as np

from .tensor import RegisterLayout, StateVector


def _pair(z) -> list[float]:
    re, im = float(z.real), float(z.imag)
    if not (math.isfinite(re) and math.isfinite(im)):
        raise ValueError("cannot serialize non-finite entries")
    return [re, im]


def _complex(pair) -> complex:
    if isinstance(pair, (int, float)):
        return complex(float(pair), 0.0)
    if len(pair) != 2:
        raise ValueError(f"complex entry must be [re, im], got {pair!r}")
    return complex(float(pair[0]), float(pair[1]))


def vector_to_json(v) -> list:
    return [_pair(z) for z in np.asarray(v, dtype=complex).reshape(-1)]


def vector_from_json(data) -> np.ndarray:
    return np.array([_complex(p) for p in data], dtype=complex)


def matrix_to_json(m) -> list:
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {m.shape}")
    return [[_pair(z) for z in row] for row in m]


def matrix_from_json(data) -> np.ndarray:
    rows = [[_complex(p) for p in row] for row in data]
    widths = {len(r) for r in rows}
    if len(widths) > 1:
        raise ValueError("ragged matrix rows")
    return np.array(rows, dtype=complex).reshape(len(rows), widths.pop() if widths else 0)


def layout_to_json(layout: RegisterLayout) -> list:
    return [[name, dim] for name, dim in layout.registers]


def layout_from_json(data) -> RegisterLayout:
    return RegisterLayout(tuple((str(name), int(dim)) for name, dim in data))


def state_to_json(state: StateVector) -> dict:
    return {"layout": layout_to_json(state.layout), "amplitudes": vector_to_json(state.amplitudes)}


def state_from_json(data) -> StateVector:
    return StateVector(layout_from_json(data["layout"]), vector_from_json(data["amplitudes"]))


def dumps(obj, **kwargs) -> str:
    return json.dumps(obj, allow_nan=False, **kwargs)
