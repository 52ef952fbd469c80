import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ifmlab.errors import CapExceededError
from ifmlab.ifm import (
    InteractionModel,
    ProtocolSchedule,
    adversary_floor,
    audit_chain,
    build_kwiat_schedule,
    compressed_operator,
    discriminability,
    distortion_exact,
    distortion_lower,
    epsilon_achieved,
    project_environment,
    random_model,
    random_schedule,
    reduced_states_channel,
    rotation,
    rotation_schedule,
    run_effective,
    run_full,
)
from ifmlab.tensor import basis_state, haar_unitary, trace_norm

ABSORB = InteractionModel.absorbing()


def kwiat_norm_sq(T):
    return np.cos(np.pi / (2 * T)) ** (2 * T)


class TestModel:
    @pytest.mark.parametrize("alpha", [0.1, 0.7, np.pi / 3])
    def test_compressed_rotation_is_cos(self, alpha):
        m = InteractionModel.rotation_model(alpha)
        assert np.allclose(m.a1, [[np.cos(alpha)]], atol=1e-14)

    def test_absorbing_constants(self):
        assert np.allclose(ABSORB.a1, 0, atol=1e-15)
        assert ABSORB.constant == pytest.approx(6.0)

    def test_identity_box_rejected(self):
        with pytest.raises(ValueError):
            InteractionModel(np.eye(2), basis_state(2, 0), 1, 2)

    def test_compressed_oracle_two_level_input(self, rng):
        u = haar_unitary(6, rng)
        f = np.array([0.6, 0.8j, 0.0])
        # direct[a, c] = sum_{j,k} conj(f_j) U[(a,j),(c,k)] f_k
        direct = np.einsum("j,ajck,k->ac", f.conj(), u.reshape(2, 3, 2, 3), f)
        assert np.allclose(compressed_operator(u, f, 2), direct, atol=1e-14)

    def test_constant_at_least_six(self, rng):
        for _ in range(5):
            assert random_model(rng, 2, 2).constant >= 6.0

    def test_bad_refresh_state(self):
        with pytest.raises(ValueError):
            InteractionModel(rotation(1.0), [1.0, 1.0], 1, 2)


class TestSchedule:
    def test_nonunitary_step(self):
        with pytest.raises(ValueError):
            ProtocolSchedule(np.array([np.diag([1.0, 0.5])]), [1, 0])

    def test_shape_check(self):
        with pytest.raises(ValueError):
            ProtocolSchedule(np.eye(2)[None], [1, 0], dim_w=2)

    def test_kwiat_theta0_ends_triggering(self):
        for T in (1, 2, 7, 50):
            traj = run_effective(build_kwiat_schedule(T))
            assert np.allclose(np.abs(traj.phi[-1]), [0, 1], atol=1e-12)


class TestEffective:
    def test_empty_box_gives_phi(self, rng):
        s = random_schedule(5, rng)
        traj = run_effective(s, np.eye(1))
        assert np.allclose(traj.psi, traj.phi) and np.allclose(traj.d_lower, 0, atol=1e-14)

    def test_single_step_half_weight(self):
        # a quarter turn of the control Bloch vector splits the weight evenly
        s = rotation_schedule([np.pi / 4])
        assert run_effective(s, np.zeros((1, 1))).norms_sq[1] == pytest.approx(0.5)

    @pytest.mark.parametrize("T", [1, 2, 10, 100, 1000])
    def test_kwiat_closed_form(self, T):
        traj = run_effective(build_kwiat_schedule(T), ABSORB.a1)
        assert traj.norms_sq[-1] == pytest.approx(kwiat_norm_sq(T), abs=1e-12)
        assert distortion_lower(traj) == pytest.approx(1 - kwiat_norm_sq(T), abs=1e-12)

    def test_kwiat_t100_value(self):
        traj = run_effective(build_kwiat_schedule(100), ABSORB.a1)
        assert traj.norms_sq[-1] == pytest.approx(0.97563, abs=1e-5)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 12))
    def test_monotone_and_prime(self, seed, T):
        rng = np.random.default_rng(seed)
        s = random_schedule(T, rng, dim_w=2, dim_i=2)
        m = random_model(rng, 2, 2)
        traj = run_effective(s, m.a1)
        assert np.all(np.diff(traj.norms_sq) <= 1e-12)
        assert np.all(np.diff(traj.d_lower) >= -1e-12)
        for t in range(1, T + 1):
            assert np.allclose(traj.psi_prime[t], s.V[t - 1] @ traj.psi[t - 1], atol=1e-13)
        assert np.allclose(np.linalg.norm(traj.phi, axis=1), 1.0)

    def test_operator_shape_checked(self, rng):
        with pytest.raises(ValueError):
            run_effective(random_schedule(2, rng, dim_i=2), np.zeros((1, 1)))


class TestFull:
    def test_theta0_product(self, rng):
        m = random_model(rng)
        s = random_schedule(3, rng)
        states = run_full(s, m, 0)
        for t, fs in enumerate(states):
            evolved = s.initial
            for v in s.V[:t]:
                evolved = v @ evolved
            env = np.kron(np.kron(m.f, m.f), m.f)
            assert np.allclose(fs.state.amplitudes, np.kron(evolved, env), atol=1e-13)

    @pytest.mark.parametrize("theta", [0, 1])
    def test_unit_norm(self, rng, theta):
        for fs in run_full(random_schedule(4, rng), random_model(rng), theta):
            assert fs.state.norm == pytest.approx(1.0, abs=1e-12)

    def test_projection_matches_effective_t3(self):
        s = build_kwiat_schedule(3)
        traj = run_effective(s, ABSORB.a1)
        proj = project_environment(run_full(s, ABSORB, 1)[3], ABSORB)
        assert proj.norm == pytest.approx(np.sqrt(traj.norms_sq[3]), abs=1e-12)

    def test_untouched_slots_stay_refreshed(self, rng):
        m = random_model(rng)
        s = random_schedule(3, rng)
        fs = run_full(s, m, 1)[1]
        amp = fs.state.tensor()  # C, W, I, B1, B2, B3
        expected_tail = np.kron(m.f, m.f)
        rest = amp.reshape(-1, 4)
        for row in rest:
            if np.linalg.norm(row) > 1e-12:
                overlap = abs(np.vdot(expected_tail, row)) / np.linalg.norm(row)
                assert overlap == pytest.approx(1.0, abs=1e-12)

    def test_cap(self):
        with pytest.raises(CapExceededError):
            run_full(build_kwiat_schedule(8), ABSORB, 1, cap=64)

    def test_theta_domain(self):
        with pytest.raises(ValueError):
            run_full(build_kwiat_schedule(2), ABSORB, 2)


class TestDistortion:
    def test_theta0_zero(self, rng):
        s = random_schedule(3, rng)
        m = random_model(rng)
        for fs in run_full(s, m, 0):
            assert distortion_exact(fs, m) == pytest.approx(0.0, abs=1e-12)

    def test_kwiat_single_step_oracle(self):
        # control fully moved to the triggering branch; the environment qubit is flipped
        fs = run_full(build_kwiat_schedule(1), ABSORB, 1)[1]
        rho_b = np.diag([0.0, 1.0])
        assert distortion_exact(fs, ABSORB) == pytest.approx(trace_norm(rho_b - np.diag([1.0, 0.0])))
        assert distortion_lower(run_effective(build_kwiat_schedule(1), ABSORB.a1)) == pytest.approx(1.0)

    def test_exact_dominates_lower(self, rng):
        for _ in range(5):
            m = random_model(rng)
            s = random_schedule(4, rng)
            traj = run_effective(s, m.a1)
            for t, fs in enumerate(run_full(s, m, 1)):
                assert distortion_exact(fs, m) >= traj.d_lower[t] - 1e-12

    def test_exact_matches_dense_trace(self, rng):
        m = random_model(rng)
        s = random_schedule(3, rng)
        fs = run_full(s, m, 1)[2]
        g = np.moveaxis(fs.state.tensor(), [3, 4], [0, 1]).reshape(4, -1)
        rho = g @ g.conj().T
        ref = np.kron(np.outer(m.f, m.f.conj()), np.outer(m.f, m.f.conj()))
        assert distortion_exact(fs, m) == pytest.approx(trace_norm(rho - ref), abs=1e-12)


class TestDiscriminability:
    def test_same_box_zero(self, rng):
        s = random_schedule(3, rng)
        t0 = run_effective(s)
        assert discriminability(t0, run_effective(s, np.eye(1)), method="bound") == pytest.approx(0, abs=1e-12)

    def test_routes_agree(self, rng):
        for _ in range(4):
            m = random_model(rng, 2, 2)
            s = random_schedule(3, rng, dim_i=2)
            t0, t1 = run_effective(s), run_effective(s, m.a1)
            full0, full1 = run_full(s, m, 0), run_full(s, m, 1)
            exact = discriminability(t0, t1, full0=full0, full1=full1)
            chan = discriminability(t0, t1, model=m, method="channel")
            bound = discriminability(t0, t1, method="bound")
            assert exact == pytest.approx(chan, abs=1e-10)
            assert exact <= bound + 1e-12

    def test_kwiat_t100_exact_below_bound(self):
        s = build_kwiat_schedule(100)
        t0, t1 = run_effective(s), run_effective(s, ABSORB.a1)
        exact = discriminability(t0, t1, model=ABSORB)
        assert 0.0 <= exact <= discriminability(t0, t1, method="bound") + 1e-12

    def test_channel_trace_one(self, rng):
        m = random_model(rng, 2, 3)
        rho = reduced_states_channel(random_schedule(5, rng, dim_i=2), m, 1)
        assert np.allclose(np.trace(rho, axis1=1, axis2=2), 1.0, atol=1e-12)

    def test_orthogonal_reduced_states(self):
        s = build_kwiat_schedule(1)
        t0, t1 = run_effective(s), run_effective(s, ABSORB.a1)
        # both boxes leave the control in the triggering branch; only B records the difference
        assert discriminability(t0, t1, model=ABSORB) == pytest.approx(0.0, abs=1e-12)

    def test_missing_inputs(self, rng):
        s = random_schedule(2, rng)
        with pytest.raises(ValueError):
            discriminability(run_effective(s), run_effective(s, np.zeros((1, 1))), method="full")
        with pytest.raises(ValueError):
            discriminability(run_effective(s), run_effective(random_schedule(2, rng)), method="bound")

    def test_epsilon_clip(self):
        assert epsilon_achieved(1.5) == 0.0 and epsilon_achieved(-0.1) == 1.0
        assert epsilon_achieved(0.25) == 0.75


class TestFloor:
    def test_values(self):
        assert adversary_floor(6, 0, 1) == pytest.approx(1 / 49)
        assert adversary_floor(6, 0.3, 20) == pytest.approx(adversary_floor(6, 0.3, 10) / 2)
        assert adversary_floor(7.5, 1, 3) == 0.0

    @pytest.mark.parametrize("args", [(5.0, 0.1, 1), (6.0, 1.5, 1), (6.0, -0.1, 1), (6.0, 0.1, 0)])
    def test_domain(self, args):
        with pytest.raises(ValueError):
            adversary_floor(*args)


class TestAudit:
    @pytest.mark.parametrize("T", [1, 2, 3, 4, 5, 6])
    def test_kwiat_full_audit(self, T):
        s = build_kwiat_schedule(T)
        traj = run_effective(s, ABSORB.a1)
        report = audit_chain(traj, ABSORB, full0=run_full(s, ABSORB, 0), full1=run_full(s, ABSORB, 1))
        assert report.ok, report.violations
        assert report.discriminability_method == "full"
        assert np.nanmax(report.steps["cross_sim_residual"][1:]) < 1e-10
        assert report.final["floor_slack"] >= -1e-9

    def test_empty_box_all_zero(self, rng):
        s = random_schedule(4, rng)
        traj = run_effective(s, np.eye(1))
        report = audit_chain(traj, ABSORB, use_channel=False)
        assert report.ok
        assert np.allclose(report.steps["discriminability"][1:], 0, atol=1e-12)
        assert report.final["final_chain_slack"] == pytest.approx(0.0, abs=1e-12)

    def test_random_schedules_channel(self, rng):
        for _ in range(10):
            m = random_model(rng, 2, 2)
            s = random_schedule(int(rng.integers(1, 15)), rng, dim_w=2, dim_i=2)
            report = audit_chain(run_effective(s, m.a1), m)
            assert report.ok, report.violations
            assert report.min_slack() >= -1e-9

    def test_violation_recorded_not_raised(self):
        s = build_kwiat_schedule(3)
        traj = run_effective(s, ABSORB.a1)
        report = audit_chain(traj, ABSORB, tol=-1.0)  # demand slack >= 1 everywhere
        assert not report.ok and report.violations

    def test_observed_constant_below_six(self, rng):
        m = random_model(rng, 2, 2)
        report = audit_chain(run_effective(random_schedule(6, rng, dim_i=2), m.a1), m)
        assert np.nanmax(report.steps["observed_constant"][1:]) <= 6.0 + 1e-12
