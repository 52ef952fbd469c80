"""Register-aware dense complex linear algebra.

Operators are plain ``numpy`` arrays of dtype ``complex128``. States carry a
:class:`RegisterLayout` so that registers can be addressed by name. The first
register of a layout is the most significant (slowest varying) index, which
matches ``numpy.kron`` with the left factor first.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg
from scipy.stats import unitary_group

STRUCTURAL_TOL = 1e-9
ARITHMETIC_TOL = 1e-12
TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class RegisterLayout:
    """Ordered ``(name, dimension)`` pairs describing a tensor-product space."""

    registers: tuple[tuple[str, int], ...]

    def __post_init__(self):
        regs = tuple((str(name), int(dim)) for name, dim in self.registers)
        object.__setattr__(self, "registers", regs)
        names = [name for name, _ in regs]
        if len(set(names)) != len(names):
            raise ValueError(f"register names must be unique, got {names}")
        for name, dim in regs:
            if dim < 1:
                raise ValueError(f"register {name!r} has dimension {dim}")

    @classmethod
    def of(cls, *pairs: tuple[str, int]) -> "RegisterLayout":
        return cls(tuple(pairs))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.registers)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(dim for _, dim in self.registers)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64))

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown register {name!r}; layout has {self.names}") from None

    def dim_of(self, name: str) -> int:
        return self.registers[self.index(name)][1]

    def without(self, names: Iterable[str]) -> "RegisterLayout":
        drop = set(names)
        for name in drop:
            self.index(name)
        return RegisterLayout(tuple(r for r in self.registers if r[0] not in drop))

    def select(self, names: Iterable[str]) -> "RegisterLayout":
        return RegisterLayout(tuple((name, self.dim_of(name)) for name in names))

    def __len__(self):
        return len(self.registers)


@dataclass(frozen=True, eq=False)
class StateVector:
    """Possibly sub-normalized pure state on a layout."""

    layout: RegisterLayout
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size != self.layout.dim:
            raise ValueError(
                f"state has {amps.size} amplitudes but layout dimension is {self.layout.dim}"
            )
        if not np.all(np.isfinite(amps)):
            raise ValueError("state amplitudes must be finite")
        norm = np.linalg.norm(amps)
        if norm > 1.0 + ARITHMETIC_TOL:
            raise ValueError(f"state norm {norm!r} exceeds 1")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape(self.layout.dims)

    def projector(self) -> np.ndarray:
        return np.outer(self.amplitudes, self.amplitudes.conj())


@dataclass(frozen=True, eq=False)
class DensityOperator:
    layout: RegisterLayout
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        d = self.layout.dim
        if m.shape != (d, d):
            raise ValueError(f"density matrix shape {m.shape} does not match dimension {d}")
        if not np.allclose(m, m.conj().T, rtol=0.0, atol=1e-10):
            raise ValueError("density operator is not Hermitian")
        tr = np.trace(m).real
        if tr < -1e-10 or tr > 1.0 + 1e-10:
            raise ValueError(f"density operator trace {tr!r} outside [0, 1]")
        if d and np.linalg.eigvalsh(m).min() < -1e-10:
            raise ValueError("density operator is not positive semidefinite")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)


def tensor(a, b) -> np.ndarray:
    """Kronecker product with ``a`` on the slower-varying index."""
    return np.kron(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))


def _target_axes(targets: Sequence[str], layout: RegisterLayout) -> list[int]:
    axes = [layout.index(t) for t in targets]
    if len(set(axes)) != len(axes):
        raise ValueError(f"duplicate target registers {list(targets)}")
    return axes


def _apply_on_axes(op: np.ndarray, axes: list[int], tensor_: np.ndarray) -> np.ndarray:
    tdims = [tensor_.shape[a] for a in axes]
    size = int(np.prod(tdims, dtype=np.int64))
    if op.shape != (size, size):
        raise ValueError(f"operator shape {op.shape} does not match target dimension {size}")
    k = len(axes)
    op_t = op.reshape(tdims + tdims)
    out = np.tensordot(op_t, tensor_, axes=(list(range(k, 2 * k)), axes))
    return np.moveaxis(out, list(range(k)), axes)


def apply_local(op, targets: Sequence[str], amplitudes, layout: RegisterLayout) -> np.ndarray:
    """Apply ``op`` on the named registers of a flat amplitude vector.

    Equivalent to ``embed(op, targets, layout) @ amplitudes`` without forming
    the full operator.
    """
    op = np.asarray(op, dtype=complex)
    psi = np.asarray(amplitudes, dtype=complex).reshape(layout.dims)
    return _apply_on_axes(op, _target_axes(targets, layout), psi).reshape(-1)


def embed(op, targets: Sequence[str], layout: RegisterLayout) -> np.ndarray:
    """``op`` on ``targets`` tensored with identity elsewhere, in layout order."""
    op = np.asarray(op, dtype=complex)
    axes = _target_axes(targets, layout)
    d = layout.dim
    ident = np.eye(d, dtype=complex).reshape(layout.dims + (d,))
    return _apply_on_axes(op, axes, ident).reshape(d, d)


def partial_trace(rho: DensityOperator, discard: Iterable[str]) -> DensityOperator:
    discard = list(discard)
    layout = rho.layout
    axes = sorted(_target_axes(discard, layout), reverse=True)
    n = len(layout)
    t = rho.matrix.reshape(layout.dims + layout.dims)
    for a in axes:
        t = np.trace(t, axis1=a, axis2=a + n)
        n -= 1
    kept = layout.without(discard)
    m = t.reshape(kept.dim, kept.dim)
    return DensityOperator(kept, (m + m.conj().T) / 2)


def reduced_density(state: StateVector, keep: Sequence[str]) -> DensityOperator:
    """Reduced state on ``keep`` (in the given order) of a pure state."""
    layout = state.layout
    axes = _target_axes(keep, layout)
    t = np.moveaxis(state.tensor(), axes, list(range(len(axes))))
    kept = layout.select(keep)
    m = t.reshape(kept.dim, -1)
    rho = m @ m.conj().T
    return DensityOperator(kept, (rho + rho.conj().T) / 2)


def partial_inner(bra: StateVector, psi: StateVector) -> StateVector:
    """Contract ``psi`` with ``<bra|`` on the bra's registers."""
    layout = psi.layout
    for name, dim in bra.layout.registers:
        if name not in layout.names:
            raise ValueError(f"bra register {name!r} not present in state layout {layout.names}")
        if layout.dim_of(name) != dim:
            raise ValueError(f"register {name!r} has dimension {dim} in bra, {layout.dim_of(name)} in state")
    axes = [layout.index(name) for name in bra.layout.names]
    out = np.tensordot(bra.tensor().conj(), psi.tensor(), axes=(list(range(len(axes))), axes))
    rest = layout.without(bra.layout.names)
    return StateVector(rest, np.asarray(out).reshape(-1))


def trace_norm(m) -> float:
    """Sum of singular values."""
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"trace_norm expects a square matrix, got shape {m.shape}")
    if m.size == 0:
        return 0.0
    if np.allclose(m, m.conj().T, rtol=0.0, atol=1e-14):
        return float(np.abs(np.linalg.eigvalsh((m + m.conj().T) / 2)).sum())
    return float(np.linalg.svd(m, compute_uv=False).sum())


def pure_difference_trace_norm(a, b) -> float:
    """``|| |a><a| - |b><b| ||_1`` for (sub-normalized) vectors, via a 2x2 Gram problem."""
    a = np.asarray(a, dtype=complex).reshape(-1)
    b = np.asarray(b, dtype=complex).reshape(-1)
    na = np.vdot(a, a).real
    nb = np.vdot(b, b).real
    ov = abs(np.vdot(a, b)) ** 2
    # eigenvalues of a rank-2 Hermitian with trace na - nb and det -(na*nb - |<a|b>|^2)
    disc = (na + nb) ** 2 - 4.0 * ov
    return float(np.sqrt(max(disc, 0.0)))


def operator_norm(m) -> float:
    """Largest singular value."""
    m = np.asarray(m, dtype=complex)
    if m.size == 0:
        return 0.0
    return float(np.linalg.norm(m, ord=2))


def is_unitary(u, tol: float = 1e-10) -> bool:
    u = np.asarray(u, dtype=complex)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        return False
    return bool(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))) < tol)


def is_scalar(m, tol: float = STRUCTURAL_TOL) -> bool:
    m = np.asarray(m, dtype=complex)
    d = m.shape[0]
    return bool(np.linalg.norm(m - (np.trace(m) / d) * np.eye(d)) < tol)


def commutator_norm(a, b) -> float:
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a @ b - b @ a))


def _fix_global_phase(v: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    mags = np.abs(v)
    idx = int(np.flatnonzero(mags >= mags.max() - tol)[0])
    v = v * (np.conj(v[idx]) / mags[idx])
    v[idx] = abs(v[idx])
    return v


def canonical_subspace_basis(block: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    """Basis-independent orthonormal basis of span(block).

    Gram-Schmidt over the columns of the subspace projector, taken in
    coordinate order; only the subspace itself influences the result.
    """
    rank = block.shape[1]
    proj = block @ block.conj().T
    chosen: list[np.ndarray] = []
    for j in range(proj.shape[0]):
        v = proj[:, j].copy()
        for w in chosen:
            v -= np.vdot(w, v) * w
        norm = np.linalg.norm(v)
        if norm > tol:
            chosen.append(v / norm)
            if len(chosen) == rank:
                break
    if len(chosen) != rank:
        raise np.linalg.LinAlgError("could not build a basis for the degenerate eigenspace")
    return np.column_stack(chosen)


def eig_unitary(u, tol: float = 1e-10, degeneracy_tol: float = STRUCTURAL_TOL):
    """Eigenphases in ``[0, 2*pi)`` (ascending) and orthonormal eigenvectors.

    Degenerate eigenspaces get a canonical basis, and every vector is phased
    so its largest-magnitude component is real positive, making the output a
    deterministic function of ``u``.

    Returns:
        (phases, vectors) with ``u == vectors @ diag(exp(1j*phases)) @ vectors^H``.
    """
    u = np.asarray(u, dtype=complex)
    if not is_unitary(u, tol):
        raise ValueError("eig_unitary requires a unitary matrix")
    # complex Schur form of a normal matrix is diagonal with unitary Z
    t, z = scipy.linalg.schur(u, output="complex")
    phases = np.mod(np.angle(np.diag(t)), TWO_PI)
    phases[phases >= TWO_PI - degeneracy_tol] = 0.0
    order = np.argsort(phases, kind="stable")
    phases = phases[order]
    z = z[:, order]
    vectors = np.empty_like(z)
    start = 0
    d = len(phases)
    while start < d:
        stop = start + 1
        while stop < d and phases[stop] - phases[stop - 1] <= degeneracy_tol:
            stop += 1
        block = z[:, start:stop]
        if stop - start > 1:
            block = canonical_subspace_basis(block)
        for j in range(block.shape[1]):
            vectors[:, start + j] = _fix_global_phase(block[:, j].copy())
        start = stop
    return phases, vectors


def haar_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    if d == 1:
        return np.array([[np.exp(1j * rng.uniform(0.0, TWO_PI))]])
    return unitary_group.rvs(d, random_state=rng)


def haar_state(d: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    return v / np.linalg.norm(v)


def basis_state(d: int, i: int) -> np.ndarray:
    v = np.zeros(d, dtype=complex)
    v[i] = 1.0
    return v
