"""Pure numpy versions of the inner loops. Reference for the compiled core."""

import numpy as np


def effective_recursion(V, psi0, block):
    """Iterate ``psi'_t = V_t psi_{t-1}`` and ``psi_t = (1 (+) block) psi'_t``.

    ``block`` acts on the second half of the vector (the triggering control
    branch); the first half is passed through.
    """
    T, n, _ = V.shape
    m = n // 2
    psi_prime = np.empty((T + 1, n), dtype=complex)
    psi = np.empty((T + 1, n), dtype=complex)
    psi_prime[0] = psi0
    psi[0] = psi0
    for t in range(T):
        p = V[t] @ psi[t]
        psi_prime[t + 1] = p
        psi[t + 1, :m] = p[:m]
        psi[t + 1, m:] = block @ p[m:]
    return psi_prime, psi


def channel_recursion(V, rho0, kraus):
    """``rho_t = sum_j K_j V_t rho_{t-1} V_t^H K_j^H``."""
    T, n, _ = V.shape
    out = np.empty((T + 1, n, n), dtype=complex)
    out[0] = rho0
    rho = rho0
    for t in range(T):
        r = V[t] @ rho @ V[t].conj().T
        rho = np.einsum("kab,bc,kdc->ad", kraus, r, kraus.conj())
        out[t + 1] = rho
    return out


def controlled_sequence(gates, target_only, state0):
    """Run a gate list on a (control, target) state stored as rows ``state[c]``.

    Gates flagged ``target_only`` act on control branch 1 only; the rest act
    on the target for both branches.
    """
    G = gates.shape[0]
    hist = np.empty((G + 1,) + state0.shape, dtype=complex)
    hist[0] = state0
    state = state0.copy()
    for g in range(G):
        if target_only[g]:
            state[1] = gates[g] @ state[1]
        else:
            state = state @ gates[g].T
        hist[g + 1] = state
    return hist
