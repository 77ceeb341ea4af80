import numpy as np
import numpy.testing as npt
import pytest

from switchpred.control import AveragePredictor, ExactOracle, OpenLoop
from switchpred.numerics import expm, solve_lyapunov, zoh_discretize
from switchpred.plant import (InputHistory, SwitchedPlantSpec, Trajectory,
                              history_integral, simulate, step)
from switchpred.switching import DwellSpec, SwitchingSignal, generate

A1 = np.array([[1.0, 1.0], [1.0, 2.0]])
B1 = np.array([0.0, 1.0])


def single_mode_spec(A, B, D=1.0):
    return SwitchedPlantSpec(A_list=np.array([A]), B_list=np.array([B]), D=D)


def no_switch_signal(p=1, horizon=30.0):
    return SwitchingSignal(np.array([0.0]), np.array([1]), p, horizon)


class TestSpecValidation:
    def test_accepts_column_b(self):
        s = SwitchedPlantSpec(A_list=np.array([A1]),
                              B_list=np.array([[[0.0], [1.0]]]), D=1.0)
        npt.assert_array_equal(s.B_list, [[0.0, 1.0]])

    def test_rejects_bad_shapes(self):
        with pytest.raises(ValueError):
            SwitchedPlantSpec(A_list=np.ones((2, 2)), B_list=np.ones((2, 2)), D=1.0)
        with pytest.raises(ValueError):
            SwitchedPlantSpec(A_list=np.ones((1, 2, 3)), B_list=np.ones((1, 2)), D=1.0)

    def test_rejects_nonpositive_delay(self):
        with pytest.raises(ValueError):
            SwitchedPlantSpec(A_list=np.array([A1]), B_list=np.array([B1]), D=0.0)

    def test_discretize_cached(self):
        s = single_mode_spec(A1, B1)
        Ad1, _ = s.discretize(1e-3)
        Ad2, _ = s.discretize(1e-3)
        assert Ad1 is Ad2


class TestStep:
    def test_integrator(self):
        s = single_mode_spec(np.zeros((2, 2)), np.array([0.0, 1.0]))
        x1 = step(s, [1.0, 2.0], 1, u_delayed=1.0, grid_dt=0.1)
        npt.assert_allclose(x1, [1.0, 2.1], atol=1e-15)

    def test_stable_free_motion_contracts_in_lyapunov_norm(self):
        A = np.array([[-1.0, 2.0], [0.0, -3.0]])
        s = single_mode_spec(A, np.zeros(2))
        S = solve_lyapunov(A, np.eye(2))
        rng = np.random.default_rng(0)
        for _ in range(10):
            x = rng.normal(size=2)
            x1 = step(s, x, 1, u_delayed=0.0, grid_dt=0.05)
            assert x1 @ S @ x1 < x @ S @ x

    def test_matches_fine_euler_oracle(self):
        s = single_mode_spec(A1, B1)
        rng = np.random.default_rng(4)
        x = rng.normal(size=2)
        u = rng.normal()
        got = step(s, x, 1, u, grid_dt=1e-3)
        h = 1e-3 / 1000
        xe = x.copy()
        for _ in range(1000):
            xe = xe + h * (A1 @ xe + B1 * u)
        assert np.abs(got - xe).max() <= 1e-8

    def test_rejects_bad_mode(self):
        s = single_mode_spec(A1, B1)
        with pytest.raises(ValueError):
            step(s, [0.0, 0.0], 2, 0.0, 1e-3)


class TestHistoryIntegral:
    def test_zero_history(self):
        h = InputHistory(0.1, np.zeros(10), current_time=1.0)
        npt.assert_array_equal(history_integral(h, A1, B1, 0.0, 1.0, 1.0),
                               np.zeros(2))

    def test_empty_interval(self):
        h = InputHistory(0.1, np.ones(10), current_time=1.0)
        npt.assert_array_equal(history_integral(h, A1, B1, 0.5, 0.5, 0.5),
                               np.zeros(2))

    def test_constant_history_zero_dynamics(self):
        h = InputHistory(0.1, np.ones(10), current_time=1.0)
        out = history_integral(h, np.zeros((2, 2)), B1, 0.2, 0.8, 0.8)
        npt.assert_allclose(out, 0.6 * B1, atol=1e-14)

    def test_matches_fine_quadrature_oracle(self):
        dt = 0.02
        rng = np.random.default_rng(21)
        samples = rng.normal(size=50)
        h = InputHistory(dt, samples, current_time=1.0)
        got = history_integral(h, A1, B1, 0.0, 1.0, anchor=1.0)
        # per-cell trapezoid so the piecewise-constant input stays exact
        total = np.zeros(2)
        m = 200
        for k in range(50):
            a = k * dt
            ts = np.linspace(a, a + dt, m + 1)
            vals = np.stack([expm(A1 * (1.0 - t)) @ B1 * samples[k] for t in ts])
            total += np.trapezoid(vals, dx=dt / m, axis=0)
        assert np.abs(got - total).max() <= 1e-7

    def test_anchor_shift(self):
        dt = 0.1
        h = InputHistory(dt, np.ones(10), current_time=1.0)
        base = history_integral(h, A1, B1, 0.0, 0.5, 0.5)
        shifted = history_integral(h, A1, B1, 0.0, 0.5, 0.8)
        npt.assert_allclose(shifted, expm(A1 * 0.3) @ base, rtol=1e-10)

    def test_rejects_off_grid(self):
        h = InputHistory(0.1, np.ones(10), current_time=1.0)
        with pytest.raises(ValueError, match="grid"):
            history_integral(h, A1, B1, 0.03, 0.5, 0.5)

    def test_rejects_outside_window(self):
        h = InputHistory(0.1, np.ones(10), current_time=1.0)
        with pytest.raises(ValueError, match="window"):
            history_integral(h, A1, B1, -0.2, 0.5, 0.5)


class TestSimulate:
    def test_open_loop_stable_mode_decay(self):
        A = np.diag([-1.0, -2.0])
        s = single_mode_spec(A, B1, D=0.5)
        traj = simulate(s, no_switch_signal(), OpenLoop(), [1.0, 1.0],
                        T=3.0, grid_dt=1e-2)
        assert np.linalg.norm(traj.states[-1]) <= np.exp(-1.0 * 3.0) * np.sqrt(2) + 1e-12

    def test_dead_time_is_free_motion(self):
        # until t = D with zero initial history the input cannot act
        spec = SwitchedPlantSpec(
            A_list=np.array([A1, 2 * A1]), B_list=np.array([B1, B1]), D=1.0)
        sig = SwitchingSignal(np.array([0.0, 0.4]), np.array([1, 2]), 2, 10.0)
        law = ExactOracle(K_list=np.array([[-13.0, -8.0], [-13.0, -8.0]]))
        traj = simulate(spec, sig, law, [1.0, -1.0], T=1.0, grid_dt=1e-3)
        free = expm(2 * A1 * 0.6) @ expm(A1 * 0.4) @ np.array([1.0, -1.0])
        npt.assert_allclose(traj.states[-1], free, rtol=1e-9)
        assert np.abs(traj.inputs).max() > 0  # the controller was active

    def test_first_step_uses_only_oldest_history_sample(self):
        s = single_mode_spec(A1, B1, D=0.01)
        sig = no_switch_signal()
        u0_a = np.array([3.0] + [1.0] * 9)
        u0_b = np.array([3.0] + [-2.0] * 9)
        ta = simulate(s, sig, OpenLoop(), [1.0, 0.0], u0=u0_a, T=1e-3, grid_dt=1e-3)
        tb = simulate(s, sig, OpenLoop(), [1.0, 0.0], u0=u0_b, T=1e-3, grid_dt=1e-3)
        npt.assert_array_equal(ta.states[1], tb.states[1])

    def test_grid_exactness_open_loop(self):
        # plant propagation is ZOH-exact: refining the grid does not move
        # the terminal state when no controller sampling is involved
        spec = SwitchedPlantSpec(
            A_list=np.array([A1, -A1]), B_list=np.array([B1, B1]), D=0.2)
        sig = SwitchingSignal(np.array([0.0, 0.4, 0.8]), np.array([1, 2, 1]), 2, 5.0)
        u0 = lambda t: 1.0
        coarse = simulate(spec, sig, OpenLoop(), [1.0, -1.0], u0=u0, T=2.0, grid_dt=0.02)
        fine = simulate(spec, sig, OpenLoop(), [1.0, -1.0], u0=u0, T=2.0, grid_dt=0.01)
        npt.assert_allclose(coarse.states[-1], fine.states[-1], rtol=1e-11)

    def test_rejects_misaligned_delay(self):
        s = single_mode_spec(A1, B1, D=0.00153)
        with pytest.raises(ValueError, match="multiple of grid_dt"):
            simulate(s, no_switch_signal(), OpenLoop(), [0.0, 0.0], T=1.0, grid_dt=1e-3)

    def test_rejects_short_signal(self):
        s = single_mode_spec(A1, B1)
        sig = no_switch_signal(horizon=2.0)
        with pytest.raises(ValueError, match="horizon"):
            simulate(s, sig, OpenLoop(), [0.0, 0.0], T=5.0, grid_dt=1e-3)

    def test_oracle_needs_future_signal(self):
        s = single_mode_spec(A1, B1)
        sig = no_switch_signal(horizon=4.0)
        law = ExactOracle(K_list=np.array([[-13.0, -8.0]]))
        with pytest.raises(ValueError, match="horizon"):
            simulate(s, sig, law, [0.0, 0.0], T=3.5, grid_dt=1e-3)

    def test_oracle_rejects_causal_signal(self):
        s = single_mode_spec(A1, B1)
        sig = no_switch_signal(horizon=10.0)
        sig.causal = True
        law = ExactOracle(K_list=np.array([[-13.0, -8.0]]))
        with pytest.raises(ValueError, match="causal"):
            simulate(s, sig, law, [0.0, 0.0], T=3.0, grid_dt=1e-3)

    def test_dwell_aware_controller_needs_tau_d(self):
        s = single_mode_spec(A1, B1)
        law = AveragePredictor(A1, B1, np.array([-13.0, -8.0]), dwell_known=True)
        with pytest.raises(ValueError, match="tau_d"):
            simulate(s, no_switch_signal(), law, [1.0, 0.0], T=2.0, grid_dt=1e-3)

    def test_trajectory_lengths_and_taus(self):
        s = single_mode_spec(A1, B1)
        law = AveragePredictor(A1, B1, np.array([-13.0, -8.0]),
                               dwell_known=True, tau_d=0.9)
        traj = simulate(s, no_switch_signal(), law, [1.0, 0.0], T=2.0, grid_dt=1e-3)
        n = traj.times.shape[0]
        assert n == 2001
        assert traj.states.shape == (n, 2)
        assert traj.inputs.shape == (n,)
        assert traj.taus[0] == pytest.approx(0.9)
        assert traj.taus[1200] == 0.0
        assert traj.residuals is None


class TestTrajectoryCsv:
    def test_schema_and_precision(self, tmp_path):
        s = single_mode_spec(A1, B1, D=0.1)
        traj = simulate(s, no_switch_signal(), OpenLoop(), [1.0, -1.0],
                        T=0.5, grid_dt=0.1)
        path = tmp_path / "run.csv"
        traj.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "t,x1,x2,u,mode,tau"
        x1_back = float(lines[-1].split(",")[1])
        assert x1_back == traj.states[-1, 0]  # 17 significant digits round-trip

    def test_residual_column(self, tmp_path):
        s = single_mode_spec(A1, B1, D=0.1)
        sig = no_switch_signal()
        law = ExactOracle(K_list=np.array([[-13.0, -8.0]]))
        traj = simulate(s, sig, law, [1.0, -1.0], T=0.5, grid_dt=0.1,
                        record_residuals=True)
        path = tmp_path / "run.csv"
        traj.to_csv(path)
        assert path.read_text().splitlines()[0] == "t,x1,x2,u,mode,tau,w"

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            Trajectory(times=np.zeros(3), states=np.zeros((2, 2)),
                       inputs=np.zeros(3), modes=np.zeros(3, dtype=int),
                       taus=np.zeros(3), grid_dt=0.1, inputs_pre=np.zeros(1))
