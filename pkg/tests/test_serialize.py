import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ifmlab.serialize import (
    dumps,
    layout_from_json,
    layout_to_json,
    matrix_from_json,
    matrix_to_json,
    state_from_json,
    state_to_json,
    vector_from_json,
    vector_to_json,
)
from ifmlab.tensor import RegisterLayout, StateVector, haar_state

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(finite, finite), min_size=1, max_size=9))
def test_vector_roundtrip_bit_exact(pairs):
    v = np.array([complex(a, b) for a, b in pairs])
    back = vector_from_json(json.loads(dumps(vector_to_json(v))))
    assert back.tobytes() == v.tobytes()


def test_matrix_row_major(rng):
    m = rng.normal(size=(2, 3)) + 1j * rng.normal(size=(2, 3))
    data = matrix_to_json(m)
    assert data[0][2] == [m[0, 2].real, m[0, 2].imag]
    assert matrix_from_json(json.loads(dumps(data))).tobytes() == m.tobytes()


def test_layout_and_state(rng):
    layout = RegisterLayout.of(("C", 2), ("I", 3))
    assert layout_from_json(layout_to_json(layout)) == layout
    s = StateVector(layout, haar_state(6, rng))
    back = state_from_json(json.loads(dumps(state_to_json(s))))
    assert back.layout == layout and back.amplitudes.tobytes() == s.amplitudes.tobytes()


def test_nan_rejected():
    with pytest.raises(ValueError):
        dumps(vector_to_json(np.array([np.nan])))


def test_malformed_entries():
    with pytest.raises((ValueError, TypeError)):
        vector_from_json([[1.0]])
    with pytest.raises((ValueError, TypeError)):
        matrix_from_json([[[1, 0]], [[1, 0], [0, 0]]])
