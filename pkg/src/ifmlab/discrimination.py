"""Zero-distortion identification of a unitary from a finite family.

The blackbox is only available as a controlled unitary ``c-U = 1 (+) U``.
Conjugating ``d`` copies of it by eigenbasis shift-phase operators of a
chosen member (an F-transform) turns everything commuting with that member
into a scalar. Iterating such transforms yields a commuting family in which
a designated member can be tested by phase kickback on a common
eigenvector: the test never rejects the designated member, so each
rejection removes one candidate with certainty, and the input register is
returned to the prepared eigenvector after every transformed query.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np

from . import kernels
from .errors import VerificationError
from .tensor import (
    TWO_PI,
    canonical_subspace_basis,
    commutator_norm,
    eig_unitary,
    is_scalar,
    is_unitary,
    trace_norm,
)

SCALAR_TOL = 1e-8
COMMUTE_TOL = 1e-9
LAMBDA_TRIES = 50
PHASE_GAP_TOL = 1e-7
ONE_SIDED_TOL = 1e-12

_SQRT_HALF = np.sqrt(0.5)


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


@dataclass(frozen=True, eq=False)
class UnitaryFamily:
    """Labelled ``d x d`` unitaries; label order is the family order."""

    labels: tuple[str, ...]
    members: tuple[np.ndarray, ...]

    def __post_init__(self):
        labels = tuple(str(x) for x in self.labels)
        members = tuple(np.asarray(m, dtype=complex) for m in self.members)
        if len(labels) != len(members) or not labels:
            raise ValueError("need one label per member and at least one member")
        if len(set(labels)) != len(labels):
            raise ValueError(f"labels must be unique, got {labels}")
        d = members[0].shape[0]
        for label, m in zip(labels, members):
            if m.shape != (d, d):
                raise ValueError(f"member {label!r} has shape {m.shape}, expected {(d, d)}")
            if not is_unitary(m):
                raise ValueError(f"member {label!r} is not unitary")
            m.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "members", members)

    @property
    def d(self) -> int:
        return self.members[0].shape[0]

    @property
    def k(self) -> int:
        return len(self.labels)

    def __getitem__(self, label: str) -> np.ndarray:
        try:
            return self.members[self.labels.index(str(label))]
        except ValueError:
            raise KeyError(f"unknown label {label!r}") from None

    def __iter__(self):
        return iter(zip(self.labels, self.members))

    def restrict(self, labels: Sequence[str]) -> "UnitaryFamily":
        return UnitaryFamily(tuple(labels), tuple(self[x] for x in labels))

    def require_distinct(self, tol: float = 1e-9) -> None:
        for i in range(self.k):
            for j in range(i + 1, self.k):
                if np.linalg.norm(self.members[i] - self.members[j]) < tol:
                    raise ValueError(f"members {self.labels[i]!r} and {self.labels[j]!r} coincide")


def normalize_family(fam: UnitaryFamily, theta0: str) -> UnitaryFamily:
    """Right-multiply every member by ``U_theta0^dagger`` so ``theta0`` maps to the identity."""
    inv = fam[theta0].conj().T
    members = []
    for label, m in fam:
        members.append(np.eye(fam.d, dtype=complex) if label == str(theta0) else m @ inv)
    return UnitaryFamily(fam.labels, tuple(members))


def shift_phase_in_basis(basis: np.ndarray, lam, k: int) -> np.ndarray:
    """``sum_i exp(i lam_i) |e_{i+k mod d}><e_i|`` for the columns ``e_i`` of ``basis``."""
    d = basis.shape[0]
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (d,):
        raise ValueError(f"phase vector must have length {d}")
    if not 0 <= k < d:
        raise ValueError(f"shift must lie in [0, {d}), got {k}")
    core = np.zeros((d, d), dtype=complex)
    idx = np.arange(d)
    core[(idx + k) % d, idx] = np.exp(1j * lam)
    return basis @ core @ basis.conj().T


def shift_phase_operator(u, lam, k: int) -> np.ndarray:
    _, basis = eig_unitary(u)
    return shift_phase_in_basis(basis, lam, k)


def f_transform_in_basis(basis: np.ndarray, Lam, uprime) -> np.ndarray:
    """``M_{d-1} ... M_1 M_0`` with ``M_k = X_k^dagger U' X_k``."""
    uprime = np.asarray(uprime, dtype=complex)
    Lam = np.asarray(Lam, dtype=float)
    d = basis.shape[0]
    if uprime.shape != (d, d):
        raise ValueError(f"operator shape {uprime.shape} does not match dimension {d}")
    if Lam.shape != (d, d):
        raise ValueError(f"phase block must have shape {(d, d)}, got {Lam.shape}")
    out = np.eye(d, dtype=complex)
    for k in range(d):
        x = shift_phase_in_basis(basis, Lam[k], k)
        out = (x.conj().T @ uprime @ x) @ out
    return out


def f_transform(u, Lam, uprime) -> np.ndarray:
    u = np.asarray(u, dtype=complex)
    uprime = np.asarray(uprime, dtype=complex)
    if u.shape != uprime.shape:
        raise ValueError(f"dimension mismatch {u.shape} vs {uprime.shape}")
    if not is_unitary(uprime):
        raise ValueError("F-transform target must be unitary")
    _, basis = eig_unitary(u)
    return f_transform_in_basis(basis, Lam, uprime)


def find_nonscalar_lambda(u, uprime, rng=None, tol: float = SCALAR_TOL, max_tries: int = LAMBDA_TRIES,
                          commute_tol: float = COMMUTE_TOL, basis: np.ndarray | None = None) -> np.ndarray:
    """Sample phase blocks uniformly until ``F_{u,Lam}(uprime)`` is not scalar.

    Raises:
        ValueError: ``u`` and ``uprime`` commute, so every transform is scalar.
        VerificationError: no witness within ``max_tries`` samples.
    """
    u = np.asarray(u, dtype=complex)
    uprime = np.asarray(uprime, dtype=complex)
    if commutator_norm(u, uprime) <= commute_tol:
        raise ValueError("operators commute; every F-transform of uprime is scalar")
    if basis is None:
        _, basis = eig_unitary(u)
    rng = _rng(rng)
    d = u.shape[0]
    for _ in range(max_tries):
        Lam = rng.uniform(0.0, TWO_PI, size=(d, d))
        if not is_scalar(f_transform_in_basis(basis, Lam, uprime), tol):
            return Lam
    raise VerificationError(f"no non-scalar witness found in {max_tries} samples")


@dataclass(frozen=True, eq=False)
class ReductionStep:
    theta: str
    partner: str
    Lam: np.ndarray
    basis: np.ndarray


@dataclass(frozen=True, eq=False)
class ReductionProgram:
    """Ordered F-transforms; step ``i`` uses the eigenbasis of its member after steps ``< i``."""

    d: int
    steps: tuple[ReductionStep, ...] = ()

    @property
    def calls_per_use(self) -> int:
        return self.d ** len(self.steps)

    def apply(self, u) -> np.ndarray:
        out = np.asarray(u, dtype=complex)
        for step in self.steps:
            out = f_transform_in_basis(step.basis, step.Lam, out)
        return out

    def apply_family(self, fam: UnitaryFamily) -> UnitaryFamily:
        return UnitaryFamily(fam.labels, tuple(self.apply(m) for m in fam.members))

    def compile(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Gate template for one controlled use of the transformed box.

        Returns ``(gates, target_only, call_slots, normalize_slots)``; the
        slot index arrays mark where the blackbox and the normalizing
        ``U_theta0^dagger`` go. Gates act in list order.
        """
        NORM, CALL = -1, -2
        seq: list = [NORM, CALL]
        for step in self.steps:
            layer: list = []
            for k in range(self.d):
                x = shift_phase_in_basis(step.basis, step.Lam[k], k)
                layer += [x] + seq + [x.conj().T]
            seq = layer
        gates = np.zeros((len(seq), self.d, self.d), dtype=complex)
        target_only = np.zeros(len(seq), dtype=np.uint8)
        calls, norms = [], []
        for g, item in enumerate(seq):
            if isinstance(item, int):
                target_only[g] = 1
                (calls if item == CALL else norms).append(g)
            else:
                gates[g] = item
        return gates, target_only, np.array(calls, dtype=int), np.array(norms, dtype=int)


def count_nonscalar(mats, tol: float = SCALAR_TOL) -> int:
    return sum(not is_scalar(m, tol) for m in mats)


def _first_noncommuting(mats, tol_scalar, tol_commute):
    for i, a in enumerate(mats):
        if is_scalar(a, tol_scalar):
            continue
        for j, b in enumerate(mats):
            if j != i and commutator_norm(a, b) > tol_commute:
                return i, j
    return None


def is_commuting_family(mats, tol: float = COMMUTE_TOL) -> bool:
    return all(commutator_norm(mats[i], mats[j]) < tol
               for i in range(len(mats)) for j in range(i + 1, len(mats)))


def reduce_family(fam: UnitaryFamily, rng=None, tol: float = SCALAR_TOL,
                  commute_tol: float = COMMUTE_TOL, max_tries: int = LAMBDA_TRIES) -> ReductionProgram:
    """Compile F-transforms until the family commutes.

    Each step scalarizes a non-scalar member that fails to commute with some
    partner, choosing the phase block so the partner stays non-scalar; the
    number of non-scalar members therefore drops every step.
    """
    if not any(np.allclose(m, np.eye(fam.d), atol=1e-12) for m in fam.members):
        raise ValueError("family must be normalized (contain the identity)")
    rng = _rng(rng)
    mats = list(fam.members)
    budget = count_nonscalar(mats, tol)
    steps: list[ReductionStep] = []
    for _ in range(budget + 1):
        pair = _first_noncommuting(mats, tol, commute_tol)
        if pair is None:
            break
        i, j = pair
        _, basis = eig_unitary(mats[i])
        Lam = find_nonscalar_lambda(mats[i], mats[j], rng, tol=tol, max_tries=max_tries,
                                    commute_tol=commute_tol, basis=basis)
        before = count_nonscalar(mats, tol)
        mats = [f_transform_in_basis(basis, Lam, m) for m in mats]
        after = count_nonscalar(mats, tol)
        if not is_scalar(mats[i], tol) or is_scalar(mats[j], tol) or not 0 < after < before:
            raise VerificationError(
                f"reduction step on {fam.labels[i]!r} did not shrink the non-scalar set "
                f"({before} -> {after})"
            )
        steps.append(ReductionStep(fam.labels[i], fam.labels[j], Lam, basis))
    else:
        raise VerificationError(f"family did not become commutative within {budget} steps")
    if not is_commuting_family(mats, commute_tol):
        raise VerificationError("reduced family is not pairwise commuting")
    return ReductionProgram(fam.d, tuple(steps))


def _snap_phase(phase):
    phase = np.mod(phase, TWO_PI)
    return np.where((phase >= TWO_PI - 1e-12) | (phase < 1e-12), 0.0, phase)


def common_eigenvectors(reduced: UnitaryFamily, tol: float = 1e-8, commute_tol: float = COMMUTE_TOL):
    """Simultaneous eigenbasis of a commuting family.

    Returns:
        (basis, phases): orthonormal columns and a ``(k, d)`` table of
        eigenphases in ``[0, 2*pi)``, columns ordered by their phase tuples.
    """
    mats = reduced.members
    if not is_commuting_family(mats, commute_tol):
        raise VerificationError("family is not commuting")
    d = reduced.d
    # fixed generic Hermitian combination; its eigenspaces are the joint eigenspaces
    coeffs = np.random.default_rng(20240229).uniform(0.5, 1.5, size=(len(mats), 2))
    h = np.zeros((d, d), dtype=complex)
    for (a, b), m in zip(coeffs, mats):
        h += a * (m + m.conj().T) / 2 + b * (m - m.conj().T) / 2j
    w, v = np.linalg.eigh((h + h.conj().T) / 2)
    basis = np.empty_like(v)
    start = 0
    while start < d:
        stop = start + 1
        while stop < d and w[stop] - w[stop - 1] <= 1e-8:
            stop += 1
        block = v[:, start:stop]
        if stop - start > 1:
            block = canonical_subspace_basis(block)
        basis[:, start:stop] = block
        start = stop
    for j in range(d):
        col = basis[:, j]
        mags = np.abs(col)
        idx = int(np.flatnonzero(mags >= mags.max() - 1e-9)[0])
        col = col * (np.conj(col[idx]) / mags[idx])
        col[idx] = abs(col[idx])
        basis[:, j] = col
    phases = np.empty((len(mats), d))
    for r, m in enumerate(mats):
        diag = basis.conj().T @ m @ basis
        off = diag - np.diag(np.diag(diag))
        if np.max(np.abs(off), initial=0.0) > tol:
            raise VerificationError(f"basis fails to diagonalize {reduced.labels[r]!r} (residual {np.abs(off).max():.2e})")
        phases[r] = _snap_phase(np.angle(np.diag(diag)))
    keys = np.round(phases, 9)
    order = np.lexsort(keys[::-1])
    return basis[:, order], phases[:, order]


def choose_target(reduced: UnitaryFamily, tol: float = SCALAR_TOL) -> str:
    """First non-scalar member, or the first non-identity member of an all-scalar family."""
    for label, m in reduced:
        if not is_scalar(m, tol):
            return label
    for label, m in reduced:
        if np.linalg.norm(m - np.eye(reduced.d)) > tol:
            return label
    raise VerificationError("reduced family has no member distinguishable from the identity")


def circular_gap(a, b):
    g = np.abs(np.mod(np.asarray(a) - np.asarray(b), TWO_PI))
    return np.minimum(g, TWO_PI - g)


def repetitions(p_max: float, delta: float) -> int:
    """Smallest ``N >= 1`` with ``p_max ** N <= delta``."""
    if p_max <= 0.0:
        return 1
    return max(1, int(np.ceil(np.log(1.0 / delta) / np.log(1.0 / p_max))))


@dataclass(frozen=True, eq=False)
class PhaseTest:
    """One-sided phase test for the designated member.

    ``selected`` indexes columns of ``basis``; each repetition uses one fresh
    control qubit per selected eigenvector. ``accept_probs[label]`` is the
    per-repetition probability that a competitor passes the test.
    """

    theta_star: str
    basis: np.ndarray
    phases: np.ndarray
    labels: tuple[str, ...]
    selected: tuple[int, ...]
    N: int
    delta: float
    accept_probs: dict

    @property
    def star_phases(self) -> np.ndarray:
        return self.phases[self.labels.index(self.theta_star), list(self.selected)]

    @property
    def p_max(self) -> float:
        return max(self.accept_probs.values(), default=0.0)

    @property
    def delta_min(self) -> float:
        """Single-eigenvector phase gap with the same per-repetition power."""
        return float(2.0 * np.arccos(np.sqrt(np.clip(self.p_max, 0.0, 1.0))))

    @property
    def error_bound(self) -> float:
        return self.p_max**self.N


def plan_round(reduced: UnitaryFamily, theta_star: str, delta: float, basis=None, phases=None,
               gap_tol: float = PHASE_GAP_TOL) -> PhaseTest:
    """Choose eigenvector(s) and repetition count for the test of ``theta_star``.

    Single eigenvectors are preferred; larger sets are tried only when no
    single eigenvector separates the designated phase from every competitor.
    Within a size the set with the fewest total queries wins.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta!r}")
    if basis is None or phases is None:
        basis, phases = common_eigenvectors(reduced)
    labels = reduced.labels
    star = labels.index(str(theta_star))
    rivals = [r for r in range(len(labels)) if r != star]
    d = reduced.d
    gaps = circular_gap(phases[star][None, :], phases[rivals]) if rivals else np.zeros((0, d))
    acc = np.cos(gaps / 2.0) ** 2
    min_sep = np.cos(gap_tol / 2.0) ** 2
    for size in range(1, d + 1):
        best = None
        for subset in combinations(range(d), size):
            per_rival = acc[:, list(subset)].prod(axis=1) if rivals else np.zeros(0)
            p = float(per_rival.max(initial=0.0))
            if p >= min_sep:
                continue
            cost = size * repetitions(p, delta)
            if best is None or cost < best[0]:
                best = (cost, subset, per_rival)
        if best is not None:
            _, subset, per_rival = best
            probs = {labels[r]: float(p) for r, p in zip(rivals, per_rival)}
            return PhaseTest(str(theta_star), basis, phases, labels, tuple(subset),
                             repetitions(max(probs.values(), default=0.0), delta), delta, probs)
    raise VerificationError(f"no eigenvector set separates {theta_star!r} from every competitor")


@dataclass(frozen=True, eq=False)
class RoundPlan:
    candidates: tuple[str, ...]
    theta0: str
    normalizer: np.ndarray
    program: ReductionProgram
    reduced: UnitaryFamily
    test: PhaseTest
    gates: np.ndarray
    target_only: np.ndarray
    call_slots: np.ndarray
    norm_slots: np.ndarray
    one_sided_residual: float

    @property
    def theta_star(self) -> str:
        return self.test.theta_star

    @property
    def calls(self) -> int:
        return self.test.N * len(self.test.selected) * self.program.calls_per_use


@dataclass
class BlockResult:
    control: np.ndarray
    reject: float
    distortion: float
    mid_block: float | None


def simulate_block(plan: RoundPlan, box, e, star_phase: float, mid_block: bool = False) -> BlockResult:
    """One controlled use of the transformed box with the input in eigenvector ``e``.

    The control starts in ``(|1> + |2>)/sqrt 2``. ``reject`` is the
    probability that the control qubit fails the projector onto
    ``(|1> + exp(i star_phase)|2>)/sqrt 2``.
    """
    gates = plan.gates.copy()
    gates[plan.call_slots] = box
    gates[plan.norm_slots] = plan.normalizer
    state0 = np.vstack([e, e]) * _SQRT_HALF
    hist = kernels.controlled_sequence(gates, plan.target_only, state0)
    final = hist[-1]
    total = float(np.vdot(final, final).real)
    c = final @ e.conj()
    leak = final - np.outer(c, e)
    perp = (c[0] - np.exp(-1j * star_phase) * c[1]) * _SQRT_HALF
    reject = (abs(perp) ** 2 + float(np.vdot(leak, leak).real)) / total
    rho = final.T @ final.conj()
    distortion = trace_norm(rho - np.outer(e, e.conj()))
    mid = None
    if mid_block:
        ref_gates = plan.gates.copy()
        ref_gates[plan.call_slots] = np.linalg.inv(plan.normalizer)
        ref_gates[plan.norm_slots] = plan.normalizer
        ref = kernels.controlled_sequence(ref_gates, plan.target_only, state0)
        mid = max(trace_norm(h.T @ h.conj() - r.T @ r.conj()) for h, r in zip(hist, ref))
    return BlockResult(c, reject, distortion, mid)


def prepare_round(fam: UnitaryFamily, delta: float, rng=None, theta0: str | None = None) -> RoundPlan:
    """Normalize, reduce, and plan the test for the current candidate family."""
    rng = _rng(rng)
    theta0 = fam.labels[0] if theta0 is None else str(theta0)
    normalized = normalize_family(fam, theta0)
    program = reduce_family(normalized, rng)
    reduced = program.apply_family(normalized)
    theta_star = choose_target(reduced)
    test = plan_round(reduced, theta_star, delta)
    gates, target_only, calls, norms = program.compile()
    plan = RoundPlan(fam.labels, theta0, fam[theta0].conj().T, program, reduced, test,
                     gates, target_only, calls, norms, 0.0)
    residual = _round_reject(plan, fam[theta_star])[0]
    if residual >= ONE_SIDED_TOL:
        raise VerificationError(f"test rejects its own hypothesis with probability {residual:.3e}")
    object.__setattr__(plan, "one_sided_residual", residual)
    return plan


def _round_reject(plan: RoundPlan, box, mid_block: bool = False):
    test = plan.test
    blocks = [simulate_block(plan, box, test.basis[:, j], phi, mid_block)
              for j, phi in zip(test.selected, test.star_phases)]
    log_pass = sum(np.log1p(-min(b.reject, 1.0)) if b.reject < 1.0 else -np.inf for b in blocks)
    reject = float(-np.expm1(test.N * log_pass))
    return reject, blocks


@dataclass
class RoundRecord:
    candidates: tuple[str, ...]
    theta_star: str
    N: int
    selected: tuple[int, ...]
    program_steps: int
    calls: int
    accept_prob: float
    reject_prob: float
    one_sided_residual: float
    outcome: str
    checkpoints: list[float]
    mid_block_max: float | None
    remaining: tuple[str, ...]


def run_round(plan: RoundPlan, fam: UnitaryFamily, hidden: str, rng=None,
              audit_mid_block: bool = False) -> RoundRecord:
    """Simulate the round against the hidden member and sample the binary outcome.

    Repetitions on the same eigenvector are identical (fresh control qubit,
    input back in the eigenvector), so one block per selected eigenvector is
    simulated and the per-repetition probabilities are raised to ``N``.
    """
    rng = _rng(rng)
    reject, blocks = _round_reject(plan, fam[hidden], audit_mid_block)
    accept = 1.0 - reject
    outcome = "accept" if rng.random() < accept else "reject"
    checkpoints = [0.0] + [b.distortion for b in blocks]
    mid = max((b.mid_block for b in blocks), default=None) if audit_mid_block else None
    remaining = (plan.theta_star,) if outcome == "accept" else tuple(
        x for x in plan.candidates if x != plan.theta_star)
    return RoundRecord(plan.candidates, plan.theta_star, plan.test.N, plan.test.selected,
                       len(plan.program.steps), plan.calls, accept, reject, plan.one_sided_residual,
                       outcome, checkpoints, mid, remaining)


@dataclass
class Transcript:
    hidden: str
    delta: float
    rounds: list[RoundRecord] = field(default_factory=list)
    theta_hat: str | None = None

    @property
    def calls(self) -> int:
        return sum(r.calls for r in self.rounds)

    @property
    def accepted_round_errors(self) -> int:
        return sum(r.outcome == "accept" and r.theta_star != self.hidden for r in self.rounds)


def discriminate(fam: UnitaryFamily, hidden: str, delta: float, rng=None,
                 audit_mid_block: bool = False) -> tuple[str, Transcript]:
    """Sequential elimination until a round accepts or one candidate is left."""
    if fam.k < 2:
        raise ValueError("need at least two candidates")
    fam.require_distinct()
    hidden = str(hidden)
    fam[hidden]
    rng = _rng(rng)
    transcript = Transcript(hidden, delta)
    candidates = fam.labels
    while len(candidates) > 1:
        plan = prepare_round(fam.restrict(candidates), delta, rng)
        record = run_round(plan, fam, hidden, rng, audit_mid_block)
        transcript.rounds.append(record)
        candidates = record.remaining
        if record.outcome == "accept":
            break
    transcript.theta_hat = candidates[0]
    return transcript.theta_hat, transcript


def distortion_audit(transcript: Transcript) -> float:
    """Largest input-register trace distance at block and round boundaries."""
    return max((max(r.checkpoints) for r in transcript.rounds), default=0.0)
