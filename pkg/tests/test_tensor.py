import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ifmlab.tensor import (
    DensityOperator,
    RegisterLayout,
    StateVector,
    apply_local,
    basis_state,
    commutator_norm,
    eig_unitary,
    embed,
    haar_state,
    haar_unitary,
    is_scalar,
    is_unitary,
    operator_norm,
    partial_inner,
    partial_trace,
    pure_difference_trace_norm,
    reduced_density,
    tensor,
    trace_norm,
)

I2 = np.eye(2)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]])
Z = np.diag([1.0, -1.0]).astype(complex)
SWAP = np.eye(4)[[0, 2, 1, 3]]


def permutation_embed(op, targets, layout):
    """Brute-force oracle: loop over every basis index pair."""
    dims = layout.dims
    t_axes = [layout.index(n) for n in targets]
    t_dims = [dims[a] for a in t_axes]
    out = np.zeros((layout.dim, layout.dim), dtype=complex)
    for row in itertools.product(*(range(d) for d in dims)):
        for col in itertools.product(*(range(d) for d in dims)):
            if any(row[a] != col[a] for a in range(len(dims)) if a not in t_axes):
                continue
            r = np.ravel_multi_index([row[a] for a in t_axes], t_dims)
            c = np.ravel_multi_index([col[a] for a in t_axes], t_dims)
            out[np.ravel_multi_index(row, dims), np.ravel_multi_index(col, dims)] = op[r, c]
    return out


class TestLayout:
    def test_dimension_is_product(self):
        layout = RegisterLayout.of(("C", 2), ("W", 3), ("I", 2))
        assert layout.dim == 12 and layout.names == ("C", "W", "I")

    def test_duplicate_names_rejected(self):
        with pytest.raises(ValueError):
            RegisterLayout.of(("C", 2), ("C", 2))

    def test_unknown_register(self):
        with pytest.raises(KeyError):
            RegisterLayout.of(("C", 2)).index("I")

    def test_without_and_select(self):
        layout = RegisterLayout.of(("C", 2), ("W", 3), ("I", 2))
        assert layout.without(["W"]).names == ("C", "I")
        assert layout.select(["I", "C"]).dims == (2, 2)


class TestStates:
    def test_subnormalized_allowed(self):
        StateVector(RegisterLayout.of(("C", 2)), [0.5, 0.5])

    def test_overnormalized_rejected(self):
        with pytest.raises(ValueError):
            StateVector(RegisterLayout.of(("C", 2)), [1.0, 1e-5])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            StateVector(RegisterLayout.of(("C", 2)), [1.0, 0, 0])

    def test_density_checks(self):
        layout = RegisterLayout.of(("C", 2))
        with pytest.raises(ValueError):
            DensityOperator(layout, np.array([[1, 1], [0, 0]]))
        with pytest.raises(ValueError):
            DensityOperator(layout, np.diag([1.5, -0.5]))
        with pytest.raises(ValueError):
            DensityOperator(layout, np.eye(2))


class TestTensor:
    def test_identity(self):
        assert np.array_equal(tensor(I2, I2), np.eye(4))

    def test_left_factor_slow(self):
        expected = np.zeros((4, 4), dtype=complex)
        expected[:2, :2] = X
        expected[2:, 2:] = X
        assert np.array_equal(tensor(I2, X), expected)

    def test_sign_pattern(self):
        assert np.array_equal(tensor(Z, Z), np.diag([1, -1, -1, 1]))


class TestEmbed:
    def test_single_register(self):
        layout = RegisterLayout.of(("C", 2), ("I", 2))
        assert np.allclose(embed(X, ["C"], layout), np.kron(X, I2))

    def test_identity_is_global_identity(self):
        layout = RegisterLayout.of(("C", 2), ("W", 3), ("I", 2))
        assert np.allclose(embed(np.eye(2), ["I"], layout), np.eye(12))

    def test_permutation_oracle(self, rng):
        layout = RegisterLayout.of(("C", 2), ("W", 3), ("I", 2))
        u = haar_unitary(4, rng)
        got = embed(u, ["C", "I"], layout)
        assert got.shape == (12, 12)
        assert np.allclose(got, permutation_embed(u, ["C", "I"], layout), atol=1e-13)

    def test_reversed_target_order(self, rng):
        layout = RegisterLayout.of(("C", 2), ("W", 3), ("I", 2))
        u = haar_unitary(6, rng)
        assert np.allclose(embed(u, ["I", "W"], layout), permutation_embed(u, ["I", "W"], layout), atol=1e-13)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            embed(np.eye(3), ["C"], RegisterLayout.of(("C", 2)))

    def test_apply_local_matches_embed(self, rng):
        layout = RegisterLayout.of(("A", 2), ("B", 3), ("C", 2))
        u = haar_unitary(4, rng)
        psi = haar_state(12, rng)
        assert np.allclose(apply_local(u, ["C", "A"], psi, layout), embed(u, ["C", "A"], layout) @ psi)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_product_consistency(self, seed):
        rng = np.random.default_rng(seed)
        layout = RegisterLayout.of(("C", 2), ("W", 3), ("I", 2))
        a, b = haar_unitary(2, rng), haar_unitary(2, rng)
        lhs = embed(np.kron(a, b), ["C", "I"], layout)
        rhs = embed(a, ["C"], layout) @ embed(b, ["I"], layout)
        assert np.max(np.abs(lhs - rhs)) < 1e-11


class TestPartialTrace:
    def test_bell_state(self):
        layout = RegisterLayout.of(("A", 2), ("B", 2))
        bell = StateVector(layout, np.array([1, 0, 0, 1]) / np.sqrt(2))
        red = partial_trace(DensityOperator(layout, bell.projector()), ["B"])
        assert np.allclose(red.matrix, np.eye(2) / 2)

    def test_product(self, rng):
        layout = RegisterLayout.of(("A", 2), ("B", 3))
        a, b = haar_state(2, rng), haar_state(3, rng)
        rho, sigma = np.outer(a, a.conj()), 0.5 * np.outer(b, b.conj())
        red = partial_trace(DensityOperator(layout, np.kron(rho, sigma)), ["B"])
        assert np.allclose(red.matrix, rho * 0.5, atol=1e-13)

    def test_schmidt_oracle(self, rng):
        layout = RegisterLayout.of(("A", 2), ("B", 2))
        psi = haar_state(4, rng)
        schmidt = np.linalg.svd(psi.reshape(2, 2), compute_uv=False) ** 2
        red = reduced_density(StateVector(layout, psi), ["A"])
        assert np.allclose(np.sort(np.linalg.eigvalsh(red.matrix)), np.sort(schmidt), atol=1e-13)

    def test_keep_order_follows_request(self, rng):
        layout = RegisterLayout.of(("A", 2), ("B", 3), ("C", 2))
        psi = StateVector(layout, haar_state(12, rng))
        full = partial_trace(DensityOperator(layout, psi.projector()), ["B"])
        assert full.layout.names == ("A", "C")
        assert np.allclose(reduced_density(psi, ["A", "C"]).matrix, full.matrix, atol=1e-13)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(0.1, 1.0))
    def test_trace_is_norm_squared(self, seed, scale):
        rng = np.random.default_rng(seed)
        layout = RegisterLayout.of(("A", 2), ("B", 3))
        psi = StateVector(layout, scale * haar_state(6, rng))
        assert abs(reduced_density(psi, ["B"]).trace - psi.norm**2) < 1e-12


class TestPartialInner:
    def test_bell_contraction(self):
        layout = RegisterLayout.of(("A", 2), ("B", 2))
        bell = StateVector(layout, np.array([1, 0, 0, 1]) / np.sqrt(2))
        out = partial_inner(StateVector(RegisterLayout.of(("B", 2)), [1, 0]), bell)
        assert np.allclose(out.amplitudes, [1 / np.sqrt(2), 0])

    def test_swap_compression(self):
        # <0|_B SWAP |0>_B as an operator on A: columns are <0|SWAP|j,0>
        layout = RegisterLayout.of(("A", 2), ("B", 2))
        bra = StateVector(RegisterLayout.of(("B", 2)), [1, 0])
        cols = [partial_inner(bra, StateVector(layout, SWAP @ np.kron(basis_state(2, j), [1, 0]))).amplitudes
                for j in range(2)]
        assert np.allclose(np.column_stack(cols), np.diag([1, 0]))

    def test_full_overlap(self, rng):
        layout = RegisterLayout.of(("A", 2), ("B", 2))
        a, b = haar_state(4, rng), haar_state(4, rng)
        out = partial_inner(StateVector(layout, a), StateVector(layout, b))
        assert out.layout.dim == 1
        assert np.isclose(out.amplitudes[0], np.vdot(a, b))

    def test_layout_mismatch(self):
        with pytest.raises(ValueError):
            partial_inner(StateVector(RegisterLayout.of(("Q", 2)), [1, 0]),
                          StateVector(RegisterLayout.of(("A", 2)), [1, 0]))


class TestNorms:
    def test_trace_norm_examples(self):
        assert trace_norm(np.diag([0.5, -0.5])) == pytest.approx(1.0)
        p0, p1 = np.diag([1.0, 0]), np.diag([0, 1.0])
        assert trace_norm(p0 - p1) == pytest.approx(2.0)

    def test_trace_norm_eigen_oracle(self, rng):
        a = rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5))
        h = a + a.conj().T
        assert trace_norm(h) == pytest.approx(np.abs(np.linalg.eigvalsh(h)).sum(), abs=1e-12)

    def test_trace_norm_nonhermitian_svd(self, rng):
        a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        assert trace_norm(a) == pytest.approx(np.linalg.svd(a, compute_uv=False).sum())

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_unitary_invariance(self, seed):
        rng = np.random.default_rng(seed)
        m = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        u, v = haar_unitary(4, rng), haar_unitary(4, rng)
        assert abs(trace_norm(u @ m @ v) - trace_norm(m)) < 1e-10

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
    def test_pure_difference_closed_form(self, seed, sa, sb):
        rng = np.random.default_rng(seed)
        a, b = sa * haar_state(3, rng), sb * haar_state(3, rng)
        direct = trace_norm(np.outer(a, a.conj()) - np.outer(b, b.conj()))
        assert abs(pure_difference_trace_norm(a, b) - direct) < 1e-7

    def test_operator_norm(self, rng):
        assert operator_norm(haar_unitary(3, rng)) == pytest.approx(1.0)
        assert operator_norm(np.zeros((3, 3))) == 0.0
        assert operator_norm(np.diag([1.0, 0.0])) == pytest.approx(1.0)

    def test_is_scalar(self):
        assert is_scalar(1j * np.eye(2))
        assert not is_scalar(Z)
        assert is_scalar((1 + 1e-12) * np.eye(2), tol=1e-9)

    def test_commutator(self, rng):
        assert commutator_norm(Z, X) == pytest.approx(np.linalg.norm(2j * Y))
        assert commutator_norm(Z, 2 * np.eye(2) @ np.diag([1, 3])) == 0.0
        a, b = rng.normal(size=(3, 3)), rng.normal(size=(3, 3))
        assert commutator_norm(a, b) == pytest.approx(np.linalg.norm(a @ b - b @ a))

    def test_is_unitary(self, rng):
        assert is_unitary(haar_unitary(3, rng))
        assert not is_unitary(np.diag([1.0, 0.5]))
        assert not is_unitary(np.ones((2, 3)))


class TestEigUnitary:
    def test_pauli_x(self):
        phases, vecs = eig_unitary(X)
        assert np.allclose(phases, [0, np.pi])
        plus, minus = np.array([1, 1]) / np.sqrt(2), np.array([1, -1]) / np.sqrt(2)
        assert abs(abs(np.vdot(vecs[:, 0], plus)) - 1) < 1e-12
        assert abs(abs(np.vdot(vecs[:, 1], minus)) - 1) < 1e-12

    def test_diag(self):
        phases, _ = eig_unitary(np.diag([1, 1j]))
        assert np.allclose(phases, [0, np.pi / 2])

    @pytest.mark.parametrize("d", [1, 2, 3, 5])
    def test_reconstruction_oracle(self, rng, d):
        u = haar_unitary(d, rng)
        phases, vecs = eig_unitary(u)
        assert np.all((phases >= 0) & (phases < 2 * np.pi))
        assert np.all(np.diff(phases) >= 0)
        assert np.allclose(vecs.conj().T @ vecs, np.eye(d), atol=1e-10)
        assert np.max(np.abs(vecs @ np.diag(np.exp(1j * phases)) @ vecs.conj().T - u)) < 1e-9

    def test_degenerate_canonical(self, rng):
        w = haar_unitary(3, rng)
        u = w @ np.diag([1j, 1j, -1]) @ w.conj().T
        phases, vecs = eig_unitary(u)
        assert np.allclose(phases, [np.pi / 2, np.pi / 2, np.pi])
        assert np.max(np.abs(vecs @ np.diag(np.exp(1j * phases)) @ vecs.conj().T - u)) < 1e-9
        for col in vecs.T:
            k = np.argmax(np.abs(col))
            assert abs(col[k].imag) < 1e-9 and col[k].real > 0

    def test_identity_is_basis(self):
        phases, vecs = eig_unitary(np.eye(3))
        assert np.allclose(phases, 0) and np.allclose(vecs, np.eye(3))

    def test_deterministic(self, rng):
        u = haar_unitary(4, rng)
        a, b = eig_unitary(u), eig_unitary(u.copy())
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_non_unitary(self):
        with pytest.raises(ValueError):
            eig_unitary(np.diag([1.0, 2.0]))
