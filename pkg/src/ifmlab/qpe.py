"""Textbook phase estimation on a dense state vector."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import RegisterLayout, apply_local, is_unitary

HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


@dataclass
class QPEResult:
    n: int
    probabilities: np.ndarray
    outcome: int

    @property
    def phase(self) -> float:
        """Estimated eigenphase as a fraction of a full turn."""
        return self.outcome / 2**self.n


def _controlled(u: np.ndarray) -> np.ndarray:
    d = u.shape[0]
    out = np.eye(2 * d, dtype=complex)
    out[d:, d:] = u
    return out


def inverse_qft(n: int) -> np.ndarray:
    size = 2**n
    j = np.arange(size)
    return np.exp(-2j * np.pi * np.outer(j, j) / size) / np.sqrt(size)


def qpe_distribution(u, eigenstate, n: int, tol: float = 1e-9) -> np.ndarray:
    """Outcome distribution of the ``n``-ancilla phase estimation circuit.

    Ancilla 0 is the most significant bit and controls ``U^(2^(n-1))``.

    Raises:
        ValueError: ``eigenstate`` is not an eigenvector of ``u`` (running
            the circuit would disturb the input).
    """
    u = np.asarray(u, dtype=complex)
    psi = np.asarray(eigenstate, dtype=complex).reshape(-1)
    if not is_unitary(u):
        raise ValueError("phase oracle must be unitary")
    if n < 1:
        raise ValueError("need at least one ancilla")
    psi = psi / np.linalg.norm(psi)
    image = u @ psi
    if np.linalg.norm(image - np.vdot(psi, image) * psi) > tol:
        raise ValueError("input is not an eigenstate of the oracle")
    d = u.shape[0]
    names = [f"a{j}" for j in range(n)]
    layout = RegisterLayout(tuple((name, 2) for name in names) + (("target", d),))
    amps = np.zeros(layout.dim, dtype=complex)
    amps[: d] = psi
    for name in names:
        amps = apply_local(HADAMARD, [name], amps, layout)
    power = u
    for name in reversed(names):
        amps = apply_local(_controlled(power), [name, "target"], amps, layout)
        power = power @ power
    amps = apply_local(inverse_qft(n), names, amps, layout)
    probs = (np.abs(amps.reshape(2**n, d)) ** 2).sum(axis=1)
    return probs


def qpe(u, eigenstate, n: int, rng=None) -> QPEResult:
    """Run phase estimation; samples an outcome when ``rng`` is given, else takes the mode."""
    probs = qpe_distribution(u, eigenstate, n)
    if rng is None:
        outcome = int(np.argmax(probs))
    else:
        rng = np.random.default_rng(rng)
        outcome = int(rng.choice(len(probs), p=probs / probs.sum()))
    return QPEResult(n, probs, outcome)
