"""Derivative-free search over control-rotation schedules.

Minimizes the environment-projected distortion ``1 - ||psi_T||^2`` subject
to the exact discriminability reaching ``1 - eps``. Coordinate descent over
per-step rotation angles with golden-section line searches, from the equal
angle (Kwiat) schedule plus seeded random restarts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleTargetError, VerificationError
from .ifm import (
    InteractionModel,
    ProtocolSchedule,
    adversary_floor,
    discriminability,
    epsilon_achieved,
    rotation_schedule,
    run_effective,
)

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass
class OptimizationResult:
    schedule: ProtocolSchedule
    angles: np.ndarray
    d_lower: float
    discriminability: float
    eps_target: float
    kwiat_d_lower: float
    floor: float
    evaluations: int

    @property
    def eps_achieved(self) -> float:
        return epsilon_achieved(self.discriminability)


def evaluate_angles(angles, model: InteractionModel) -> tuple[float, float]:
    """Distortion lower bound and exact discriminability of a rotation schedule."""
    schedule = rotation_schedule(angles, dim_i=model.dim_i)
    traj1 = run_effective(schedule, model.a1)
    traj0 = run_effective(schedule)
    d = float(traj1.d_lower[-1])
    return d, discriminability(traj0, traj1, model=model, method="channel")


def golden_section(fun, lo: float, hi: float, tol: float = 1e-10, max_iter: int = 200):
    """Minimize a scalar function on ``[lo, hi]``; returns every evaluated ``(x, f(x))``."""
    seen = []

    def f(x):
        v = fun(x)
        seen.append((x, v))
        return v

    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a < tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    return seen


class _Objective:
    def __init__(self, model, eps_target):
        self.model = model
        self.required = 1.0 - eps_target
        self.calls = 0
        self.best = None  # (d, disc, angles)

    def __call__(self, angles) -> float:
        self.calls += 1
        d, disc = evaluate_angles(angles, self.model)
        if disc >= self.required:
            if self.best is None or d < self.best[0]:
                self.best = (d, disc, np.array(angles, dtype=float))
            return d
        # every infeasible point ranks above every feasible one (d <= 1)
        return 2.0 + (self.required - disc)


def _coordinate_descent(obj: _Objective, angles: np.ndarray, width: float, sweeps: int, tol: float):
    angles = angles.copy()
    current = obj(angles)
    for _ in range(sweeps):
        start = current
        for i in range(len(angles)):
            def line(x, i=i):
                trial = angles.copy()
                trial[i] = x
                return obj(trial)

            seen = golden_section(line, angles[i] - width, angles[i] + width, tol=tol)
            x, v = min(seen, key=lambda p: p[1])
            if v < current:
                angles[i], current = x, v
        width *= 0.5
        if start - current < tol:
            break
    return angles, current


def optimize_schedule(T: int, model: InteractionModel, eps_target: float, seed: int,
                      restarts: int = 3, sweeps: int = 25, tol: float = 1e-10) -> OptimizationResult:
    if not 0.0 < eps_target < 1.0:
        raise ValueError(f"eps_target must lie in (0, 1), got {eps_target!r}")
    floor = adversary_floor(model.constant, eps_target, T)
    if floor >= 1.0:
        raise InfeasibleTargetError(f"adversary floor {floor:.3g} leaves no admissible distortion")
    rng = np.random.default_rng(seed)
    obj = _Objective(model, eps_target)

    kwiat = np.full(T, np.pi / (2 * T))
    kwiat_d, _ = evaluate_angles(kwiat, model)

    # common-angle scan first: exact for T = 1, a good start otherwise
    seen = golden_section(lambda x: obj(np.full(T, x)), 0.0, np.pi / 2, tol=tol)
    common = np.full(T, min(seen, key=lambda p: p[1])[0])

    starts = [kwiat, common]
    starts += [common + rng.normal(scale=0.25 * np.pi / (2 * T), size=T) for _ in range(restarts)]
    for start in starts:
        _coordinate_descent(obj, start, width=np.pi / (4 * T), sweeps=sweeps, tol=tol)

    if obj.best is None:
        raise InfeasibleTargetError(f"no schedule reached discriminability {1 - eps_target:.3g}")
    d, disc, angles = obj.best
    result = OptimizationResult(
        schedule=rotation_schedule(angles, dim_i=model.dim_i),
        angles=angles,
        d_lower=d,
        discriminability=disc,
        eps_target=eps_target,
        kwiat_d_lower=kwiat_d,
        floor=floor,
        evaluations=obj.calls,
    )
    achieved_floor = adversary_floor(model.constant, result.eps_achieved, T)
    if d < achieved_floor - 1e-9:
        raise VerificationError(f"optimized distortion {d!r} is below the adversary floor {achieved_floor!r}")
    return result
