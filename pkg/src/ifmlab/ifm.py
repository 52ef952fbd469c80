"""Repeated interrogation of a refreshed-environment blackbox.

The accessible system is ``C (x) W (x) I``: a two-level control ``C`` whose
second basis state triggers the blackbox, a work register ``W`` and the
input ``I``. The blackbox ``U1`` acts on ``I (x) B'`` and every query hits a
fresh environment slot prepared in ``|f>``. Three simulation routes are
provided:

* effective dynamics: the environment-projected vector
  ``psi_t = (c-A) V_t ... (c-A) V_1 |phi>`` with ``A = <f|U1|f>``;
* channel dynamics: the exact reduced state on ``C (x) W (x) I`` obtained by
  tracing each used slot out immediately (slots are never touched again);
* full dynamics: the joint state including all ``T`` slots, for small ``T``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import kernels
from .errors import CapExceededError
from .tensor import (
    RegisterLayout,
    StateVector,
    apply_local,
    basis_state,
    haar_state,
    haar_unitary,
    is_unitary,
    operator_norm,
    partial_inner,
    pure_difference_trace_norm,
    reduced_density,
    trace_norm,
)

FULL_DIM_CAP = 2**20
AUDIT_TOL = 1e-9


def rotation(angle: float) -> np.ndarray:
    """Real rotation taking the first basis state towards the second."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]], dtype=complex)


def compressed_operator(u1, f, dim_i: int) -> np.ndarray:
    """``<f|U1|f>`` as an operator on the input register."""
    u1 = np.asarray(u1, dtype=complex)
    f = np.asarray(f, dtype=complex).reshape(-1)
    dim_bp = f.size
    layout = RegisterLayout.of(("I", dim_i), ("Bp", dim_bp))
    if u1.shape != (layout.dim, layout.dim):
        raise ValueError(f"U1 has shape {u1.shape}, expected {(layout.dim, layout.dim)}")
    bra = StateVector(RegisterLayout.of(("Bp", dim_bp)), f)
    cols = []
    for j in range(dim_i):
        out = u1 @ np.kron(basis_state(dim_i, j), f)
        cols.append(partial_inner(bra, StateVector(layout, out)).amplitudes)
    return np.column_stack(cols)


@dataclass(frozen=True, eq=False)
class InteractionModel:
    """Blackbox ``U1`` on ``I (x) B'`` with refresh state ``f`` on ``B'``."""

    u1: np.ndarray
    f: np.ndarray
    dim_i: int
    dim_bp: int

    def __post_init__(self):
        u1 = np.asarray(self.u1, dtype=complex)
        f = np.asarray(self.f, dtype=complex).reshape(-1)
        object.__setattr__(self, "u1", u1)
        object.__setattr__(self, "f", f)
        if f.size != self.dim_bp:
            raise ValueError(f"refresh state has length {f.size}, expected {self.dim_bp}")
        if abs(np.linalg.norm(f) - 1.0) > 1e-10:
            raise ValueError("refresh state must be normalized")
        if u1.shape != (self.dim_i * self.dim_bp,) * 2 or not is_unitary(u1):
            raise ValueError("U1 must be a unitary on I (x) B'")
        if self.a1_norm >= 1.0 - 1e-12:
            raise ValueError(
                f"||<f|U1|f>|| = {self.a1_norm!r}; the interacting box needs a norm below 1"
            )

    @classmethod
    def rotation_model(cls, angle: float) -> "InteractionModel":
        """Trivial input, qubit environment ``|0>`` rotated by ``angle``."""
        return cls(rotation(angle), basis_state(2, 0), 1, 2)

    @classmethod
    def absorbing(cls) -> "InteractionModel":
        return cls.rotation_model(np.pi / 2)

    @cached_property
    def a1(self) -> np.ndarray:
        return compressed_operator(self.u1, self.f, self.dim_i)

    @cached_property
    def a1_norm(self) -> float:
        return operator_norm(self.a1)

    @property
    def constant(self) -> float:
        """``6 (1 - ||A1||^2)^(-1/2)``."""
        return 6.0 / np.sqrt(1.0 - self.a1_norm**2)

    def environment_kraus(self) -> tuple[np.ndarray, np.ndarray]:
        """``<b_j|f>`` scalars and ``<b_j|U1|f>`` input operators, one per ``B'`` basis state."""
        u = self.u1.reshape(self.dim_i, self.dim_bp, self.dim_i, self.dim_bp)
        active = np.einsum("ajbc,c->jab", u, self.f)
        return self.f.copy(), active


@dataclass(frozen=True, eq=False)
class ProtocolSchedule:
    """Interleaving unitaries ``V_1..V_T`` on ``C (x) W (x) I`` and the initial state."""

    V: np.ndarray
    initial: np.ndarray
    dim_w: int = 1
    dim_i: int = 1

    def __post_init__(self):
        V = np.asarray(self.V, dtype=complex)
        n = 2 * self.dim_w * self.dim_i
        if V.ndim != 3 or V.shape[1:] != (n, n):
            raise ValueError(f"V must have shape (T, {n}, {n}), got {V.shape}")
        if V.shape[0] < 1:
            raise ValueError("schedule needs at least one step")
        for t, v in enumerate(V, start=1):
            if not is_unitary(v):
                raise ValueError(f"V_{t} is not unitary")
        init = np.asarray(self.initial, dtype=complex).reshape(-1)
        if init.size != n or abs(np.linalg.norm(init) - 1.0) > 1e-10:
            raise ValueError("initial state must be a normalized vector on C (x) W (x) I")
        V.setflags(write=False)
        init.setflags(write=False)
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "initial", init)

    @property
    def T(self) -> int:
        return self.V.shape[0]

    @property
    def dim(self) -> int:
        return self.V.shape[1]

    @property
    def layout(self) -> RegisterLayout:
        return RegisterLayout.of(("C", 2), ("W", self.dim_w), ("I", self.dim_i))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Effective vectors ``psi_t``, ``psi'_t = V_t psi_{t-1}`` and ``phi_t`` for t = 0..T.

    Row ``t`` of each array holds the vector at step ``t``; ``psi_prime[0]``
    is the initial state by convention.
    """

    schedule: ProtocolSchedule
    a: np.ndarray | None
    psi: np.ndarray
    psi_prime: np.ndarray
    phi: np.ndarray

    @property
    def T(self) -> int:
        return self.schedule.T

    @cached_property
    def norms_sq(self) -> np.ndarray:
        return np.einsum("ti,ti->t", self.psi.conj(), self.psi).real

    @cached_property
    def d_lower(self) -> np.ndarray:
        return np.clip(1.0 - self.norms_sq, 0.0, 1.0)

    def state(self, t: int) -> StateVector:
        return StateVector(self.schedule.layout, self.psi[t])


@dataclass(frozen=True, eq=False)
class FullState:
    theta: int
    t: int
    state: StateVector


def controlled_block(schedule: ProtocolSchedule, a) -> np.ndarray:
    """Action of the controlled operator on the triggering half of the vector."""
    m = schedule.dim // 2
    if a is None:
        return np.eye(m, dtype=complex)
    a = np.asarray(a, dtype=complex)
    if a.shape != (schedule.dim_i, schedule.dim_i):
        raise ValueError(f"operator on I has shape {a.shape}, expected {(schedule.dim_i,) * 2}")
    return np.kron(np.eye(schedule.dim_w), a)


def run_effective(schedule: ProtocolSchedule, a=None) -> Trajectory:
    """Effective recursion with ``c-A``; ``a=None`` is the empty box (yields ``phi_t``)."""
    block = controlled_block(schedule, a)
    psi_prime, psi = kernels.effective_recursion(schedule.V, schedule.initial, block)
    if a is None:
        phi = psi
    else:
        _, phi = kernels.effective_recursion(schedule.V, schedule.initial, np.eye(block.shape[0]))
    return Trajectory(schedule, None if a is None else np.asarray(a, dtype=complex), psi, psi_prime, phi)


def distortion_lower(traj: Trajectory, t: int | None = None) -> float:
    """``1 - ||psi_t||^2``."""
    return float(traj.d_lower[traj.T if t is None else t])


def full_layout(schedule: ProtocolSchedule, model: InteractionModel) -> RegisterLayout:
    slots = tuple((f"B{t}", model.dim_bp) for t in range(1, schedule.T + 1))
    return RegisterLayout(schedule.layout.registers + slots)


def run_full(schedule: ProtocolSchedule, model: InteractionModel, theta: int,
             cap: int = FULL_DIM_CAP) -> list[FullState]:
    """Joint evolution including every environment slot; query ``t`` hits slot ``B{t}``."""
    if theta not in (0, 1):
        raise ValueError("theta must be 0 or 1")
    if schedule.dim_i != model.dim_i:
        raise ValueError("schedule and model disagree on the input dimension")
    layout = full_layout(schedule, model)
    if layout.dim > cap:
        raise CapExceededError(f"full state dimension {layout.dim} exceeds cap {cap}")
    env = np.ones(1, dtype=complex)
    for _ in range(schedule.T):
        env = np.kron(env, model.f)
    amps = np.kron(schedule.initial, env)
    dim_ib = model.dim_i * model.dim_bp
    cu = np.zeros((2 * dim_ib, 2 * dim_ib), dtype=complex)
    cu[:dim_ib, :dim_ib] = np.eye(dim_ib)
    cu[dim_ib:, dim_ib:] = model.u1
    states = [FullState(theta, 0, StateVector(layout, amps))]
    for t in range(1, schedule.T + 1):
        amps = apply_local(schedule.V[t - 1], ("C", "W", "I"), amps, layout)
        if theta == 1:
            amps = apply_local(cu, ("C", "I", f"B{t}"), amps, layout)
        states.append(FullState(theta, t, StateVector(layout, amps)))
    return states


def project_environment(full: FullState, model: InteractionModel) -> StateVector:
    """``<f^{(x)T}|Phi_{theta,t}>`` on ``C (x) W (x) I``."""
    layout = full.state.layout
    slots = [name for name in layout.names if name.startswith("B")]
    env = np.ones(1, dtype=complex)
    for _ in slots:
        env = np.kron(env, model.f)
    bra = StateVector(layout.select(slots), env)
    return partial_inner(bra, full.state)


def distortion_exact(full: FullState, model: InteractionModel) -> float:
    """``|| rho_{B1..Bt} - (|f><f|)^{(x)t} ||_1`` on the slots queried so far."""
    t = full.t
    if t == 0:
        return 0.0
    layout = full.state.layout
    keep = [f"B{s}" for s in range(1, t + 1)]
    axes = [layout.index(name) for name in keep]
    g = np.moveaxis(full.state.tensor(), axes, list(range(t))).reshape(model.dim_bp**t, -1)
    ft = np.ones(1, dtype=complex)
    for _ in range(t):
        ft = np.kron(ft, model.f)
    w = np.column_stack([g, ft])
    signs = np.ones(w.shape[1])
    signs[-1] = -1.0
    if w.shape[1] < w.shape[0]:
        # rho - P = W diag(signs) W^H has rank <= W.shape[1]
        _, r = np.linalg.qr(w, mode="reduced")
        return trace_norm((r * signs) @ r.conj().T)
    return trace_norm((w * signs) @ w.conj().T)


def reduced_states_channel(schedule: ProtocolSchedule, model: InteractionModel | None,
                           theta: int) -> np.ndarray:
    """Exact reduced states on ``C (x) W (x) I`` for t = 0..T, shape ``(T+1, n, n)``."""
    n = schedule.dim
    m = n // 2
    rho0 = np.outer(schedule.initial, schedule.initial.conj())
    if theta == 0 or model is None:
        kraus = np.eye(n, dtype=complex)[None]
    else:
        inert, active = model.environment_kraus()
        kraus = np.zeros((model.dim_bp, n, n), dtype=complex)
        for j in range(model.dim_bp):
            kraus[j, :m, :m] = inert[j] * np.eye(m)
            kraus[j, m:, m:] = np.kron(np.eye(schedule.dim_w), active[j])
    return kernels.channel_recursion(schedule.V, rho0, kraus)


def _require_same_schedule(traj0: Trajectory, traj1: Trajectory):
    s0, s1 = traj0.schedule, traj1.schedule
    if s0 is not s1 and not (np.array_equal(s0.V, s1.V) and np.array_equal(s0.initial, s1.initial)):
        raise ValueError("trajectories come from different schedules")


def discriminability_bound(traj0: Trajectory, traj1: Trajectory, t: int | None = None) -> float:
    """``|| |phi_t><phi_t| - |psi_t><psi_t| ||_1 + 1 - ||psi_t||^2``."""
    t = traj1.T if t is None else t
    return pure_difference_trace_norm(traj0.psi[t], traj1.psi[t]) + 1.0 - traj1.norms_sq[t]


def discriminability(traj0: Trajectory, traj1: Trajectory, *, full0=None, full1=None,
                     model: InteractionModel | None = None, method: str = "auto",
                     t: int | None = None) -> float:
    """Trace distance between the two reachable states on ``C (x) W (x) I``.

    ``method``: ``"full"`` (needs full states), ``"channel"`` (needs the
    model), ``"bound"`` (effective vectors only, an upper bound) or
    ``"auto"``, which picks the first available in that order.
    """
    _require_same_schedule(traj0, traj1)
    t = traj1.T if t is None else t
    if method == "auto":
        if full0 is not None and full1 is not None:
            method = "full"
        elif model is not None:
            method = "channel"
        else:
            method = "bound"
    keep = ("C", "W", "I")
    if method == "full":
        if full0 is None or full1 is None:
            raise ValueError("full discriminability needs both full trajectories")
        rho0 = reduced_density(full0[t].state, keep).matrix
        rho1 = reduced_density(full1[t].state, keep).matrix
        return trace_norm(rho0 - rho1)
    if method == "channel":
        if model is None:
            raise ValueError("channel discriminability needs the interaction model")
        phi = traj0.psi[t]
        rho1 = reduced_states_channel(traj1.schedule, model, 1)[t]
        return trace_norm(np.outer(phi, phi.conj()) - rho1)
    if method == "bound":
        return discriminability_bound(traj0, traj1, t)
    raise ValueError(f"unknown method {method!r}")


def epsilon_achieved(disc: float) -> float:
    return float(np.clip(1.0 - disc, 0.0, 1.0))


def adversary_floor(C: float, eps: float, T: int) -> float:
    """``(C+1)^-2 (1-eps)^2 / T``: least distortion compatible with separation ``1-eps``."""
    if not 0.0 <= eps <= 1.0:
        raise ValueError(f"eps must lie in [0, 1], got {eps!r}")
    if C < 6.0 - 1e-12:
        raise ValueError(f"C must be at least 6, got {C!r}")
    if T < 1:
        raise ValueError(f"T must be positive, got {T!r}")
    return (1.0 - eps) ** 2 / ((C + 1.0) ** 2 * T)


def rotation_schedule(angles, dim_i: int = 1, dim_w: int = 1, input_state=None) -> ProtocolSchedule:
    """Control rotations by ``angles[t]``, starting from the inert control branch."""
    angles = np.asarray(angles, dtype=float).reshape(-1)
    rest = dim_w * dim_i
    V = np.stack([np.kron(rotation(a), np.eye(rest)) for a in angles])
    i_state = basis_state(dim_i, 0) if input_state is None else np.asarray(input_state, dtype=complex)
    initial = np.kron(np.kron(basis_state(2, 0), basis_state(dim_w, 0)), i_state)
    return ProtocolSchedule(V, initial, dim_w=dim_w, dim_i=dim_i)


def build_kwiat_schedule(T: int, model: InteractionModel | None = None) -> ProtocolSchedule:
    """``T`` equal control rotations by ``pi / 2T``; no work register."""
    if T < 1:
        raise ValueError("T must be at least 1")
    dim_i = 1 if model is None else model.dim_i
    return rotation_schedule(np.full(T, np.pi / (2 * T)), dim_i=dim_i)


def random_schedule(T: int, rng: np.random.Generator, dim_w: int = 1, dim_i: int = 1) -> ProtocolSchedule:
    n = 2 * dim_w * dim_i
    V = np.stack([haar_unitary(n, rng) for _ in range(T)])
    return ProtocolSchedule(V, haar_state(n, rng), dim_w=dim_w, dim_i=dim_i)


def random_model(rng: np.random.Generator, dim_i: int = 1, dim_bp: int = 2) -> InteractionModel:
    while True:
        try:
            return InteractionModel(haar_unitary(dim_i * dim_bp, rng), basis_state(dim_bp, 0), dim_i, dim_bp)
        except ValueError:
            continue


@dataclass
class AuditReport:
    """Slacks of every inequality in the distortion/discriminability chain.

    ``steps`` maps a quantity name to an array indexed by ``t`` (entry 0 is
    unused and NaN). Slacks are ``rhs - lhs`` of a ``<=`` relation, residuals
    are absolute deviations of identities.
    """

    T: int
    C: float
    a1_norm: float
    discriminability_method: str
    steps: dict[str, np.ndarray]
    final: dict[str, float]
    tol: float = AUDIT_TOL
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def min_slack(self) -> float:
        values = [np.nanmin(v[1:]) for k, v in self.steps.items()
                  if k.endswith("_slack") and not np.all(np.isnan(v[1:]))]
        values += [v for k, v in self.final.items() if k.endswith("_slack")]
        return float(min(values))


_RESIDUALS = ("direct_sum_residual", "cross_sim_residual")


def _times(c: float, x: float) -> float:
    """``c * x`` with ``inf * 0 = 0``.

    An identity box has an infinite constant but no norm drop; ``x`` then
    carries only rounding residue (square roots of ~1e-16 values), which
    is treated as zero.
    """
    if not np.isfinite(c) and x < 1e-6:
        return 0.0
    return c * x


def audit_chain(traj: Trajectory, model: InteractionModel, *, full0=None, full1=None,
                use_channel: bool = True, tol: float = AUDIT_TOL) -> AuditReport:
    """Evaluate each link of the bound chain along a ``theta=1`` trajectory.

    ``traj`` must come from ``run_effective(schedule, model.a1)``; its ``phi``
    rows serve as the ``theta=0`` branch. Violations beyond ``tol`` are
    recorded in the report, never raised.
    """
    s = traj.schedule
    T = s.T
    m = s.dim // 2
    a = traj.a if traj.a is not None else np.eye(s.dim_i)
    a_norm = operator_norm(a)
    C = 6.0 / np.sqrt(1.0 - a_norm**2) if a_norm < 1.0 else np.inf
    block = controlled_block(s, a)
    ident_minus_a = operator_norm(np.eye(s.dim_i) - a)

    nan = np.full(T + 1, np.nan)
    steps = {k: nan.copy() for k in (
        "norm_sq", "d_lower", "direct_sum_residual", "phi2_slack", "step_term", "block_bound_slack",
        "six_bound_slack", "step_slack", "observed_constant", "gap", "recursion_slack",
        "discriminability", "dist_slack", "d_exact", "distortion_slack", "cross_sim_residual",
    )}
    norm_sq = traj.norms_sq
    steps["norm_sq"][:] = norm_sq
    steps["d_lower"][:] = traj.d_lower
    steps["gap"][0] = pure_difference_trace_norm(traj.phi[0], traj.psi[0])

    if full0 is not None and full1 is not None:
        method = "full"
    elif use_channel:
        method = "channel"
    else:
        method = "bound"
    if method == "channel":
        rho1 = reduced_states_channel(s, model, 1)

    drops = np.zeros(T + 1)
    for t in range(1, T + 1):
        pp = traj.psi_prime[t]
        p1, p2 = pp[:m], pp[m:]
        n1 = np.vdot(p1, p1).real
        n2 = np.vdot(p2, p2).real
        ap2 = block @ p2
        steps["direct_sum_residual"][t] = abs(norm_sq[t] - (n1 + np.vdot(ap2, ap2).real))
        drop = norm_sq[t - 1] - norm_sq[t]
        drops[t] = max(drop, 0.0)
        steps["phi2_slack"][t] = drop - (1.0 - a_norm**2) * n2
        term = pure_difference_trace_norm(pp, traj.psi[t])
        steps["step_term"][t] = term
        block_bound = 2.0 * ident_minus_a * np.sqrt(n1 * n2) + (a_norm**2 + 1.0) * n2
        steps["block_bound_slack"][t] = block_bound - term
        steps["six_bound_slack"][t] = 6.0 * np.sqrt(n2) - block_bound
        steps["step_slack"][t] = _times(C, np.sqrt(drops[t])) - term
        steps["observed_constant"][t] = term / np.sqrt(n2) if n2 > 0 else np.nan
        gap = pure_difference_trace_norm(traj.phi[t], traj.psi[t])
        steps["gap"][t] = gap
        steps["recursion_slack"][t] = steps["gap"][t - 1] + term - gap
        if method == "full":
            rho0 = reduced_density(full0[t].state, ("C", "W", "I")).matrix
            r1 = reduced_density(full1[t].state, ("C", "W", "I")).matrix
            disc = trace_norm(rho0 - r1)
        elif method == "channel":
            disc = trace_norm(np.outer(traj.phi[t], traj.phi[t].conj()) - rho1[t])
        else:
            disc = gap + 1.0 - norm_sq[t]
        steps["discriminability"][t] = disc
        steps["dist_slack"][t] = gap + 1.0 - norm_sq[t] - disc
        if full1 is not None:
            d_ex = distortion_exact(full1[t], model)
            steps["d_exact"][t] = d_ex
            steps["distortion_slack"][t] = d_ex - traj.d_lower[t]
            proj = project_environment(full1[t], model).amplitudes
            steps["cross_sim_residual"][t] = float(np.max(np.abs(proj - traj.psi[t])))

    one_minus = 1.0 - norm_sq[T]
    gap_T = steps["gap"][T]
    disc_T = steps["discriminability"][T]
    sum_bound = _times(C, np.sqrt(drops[1:]).sum()) + one_minus
    cs_bound = _times(C, np.sqrt(T * max(one_minus, 0.0))) + one_minus
    d_T = float(traj.d_lower[T])
    eps = epsilon_achieved(disc_T)
    final = {
        "discriminability": float(disc_T),
        "eps_achieved": eps,
        "d_lower": d_T,
        "sum_slack": float(sum_bound - (gap_T + one_minus)),
        "cauchy_schwarz_slack": float(cs_bound - sum_bound),
        "final_chain_slack": float(_times(C + 1.0, np.sqrt(T * d_T)) - disc_T),
        "floor": float(adversary_floor(C, eps, T)) if np.isfinite(C) else np.nan,
    }
    final["floor_slack"] = d_T - final["floor"]
    if full1 is not None:
        d_ex = float(steps["d_exact"][T])
        final["d_exact"] = d_ex
        final["final_chain_exact_slack"] = float(_times(C + 1.0, np.sqrt(T * d_ex)) - disc_T)

    report = AuditReport(T, float(C), a_norm, method, steps, final, tol)
    for name, values in steps.items():
        if name.endswith("_slack"):
            bad = np.flatnonzero(values[1:] < -tol) + 1
            report.violations += [f"{name} at t={t}: {values[t]:.3e}" for t in bad]
        elif name in _RESIDUALS:
            bad = np.flatnonzero(values[1:] > tol) + 1
            report.violations += [f"{name} at t={t}: {values[t]:.3e}" for t in bad]
    for name, value in final.items():
        if name.endswith("_slack") and value < -tol:
            report.violations.append(f"{name}: {value:.3e}")
    return report
