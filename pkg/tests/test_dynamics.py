import numpy as np
import pytest
from scipy.integrate import solve_ivp

from acmsim import dynamics as dyn
from acmsim import kinematics as kin
from conftest import random_state, standard_mounts, table_model, total_weight

RNG = np.random.default_rng(23)


def rest_state(model, q_s=(0.0, 0.0), euler=(0.0, 0.0, 0.0), position=(0.0, 0.0, 0.0)):
    q = np.concatenate([euler, position, q_s])
    return kin.GeneralizedState(q, np.zeros(q.size))


def hover_input(model):
    thrust = total_weight(model) / 4.0
    return dyn.ActuatorInput(np.full(4, thrust), np.zeros(model.rod.tendon_count))


def directional_mass_rate(state, model, eps=1e-6):
    scale = max(1.0, np.max(np.abs(state.qdot)))
    h = eps / scale
    plus = dyn.mass_matrix(kin.GeneralizedState(state.q + h * state.qdot, state.qdot), model)
    minus = dyn.mass_matrix(kin.GeneralizedState(state.q - h * state.qdot, state.qdot), model)
    return (plus - minus) / (2 * h)


class TestMassMatrix:
    def test_rod_density_limit(self):
        model = table_model(rod_density=1e-9)
        state = random_state(RNG)
        m = dyn.mass_matrix(state, model)
        jb = kin.uav_jacobian(state.q)
        np.testing.assert_allclose(m, jb.T @ model.uav.matrix() @ jb, atol=1e-9)

    def test_symmetry_at_random_states(self):
        model = table_model()
        for _ in range(5):
            m = dyn.mass_matrix(random_state(RNG), model)
            assert np.max(np.abs(m - m.T)) < 1e-10

    def test_positive_definite_at_scenario_initial_state(self):
        model = table_model()
        q = np.array([0.0, 0.0, np.pi / 18, -0.5, 0.5, 5.0, 0.3, 0.4])
        m = dyn.mass_matrix(kin.GeneralizedState(q, np.zeros(8)), model)
        assert np.min(np.linalg.eigvalsh(m)) > 0


class TestCoriolis:
    def test_zero_rates(self):
        model = table_model()
        state = random_state(RNG)
        state.qdot[:] = 0.0
        assert np.max(np.abs(dyn.coriolis_matrix(state, model))) == 0.0

    def test_skew_symmetry_identity(self):
        model = table_model()
        for _ in range(20):
            state = random_state(RNG)
            m = dyn.mass_matrix(state, model)
            c = dyn.coriolis_matrix(state, model)
            mdot = directional_mass_rate(state, model)
            residual = abs(state.qdot @ (mdot - 2 * c) @ state.qdot)
            bound = 1e-4 * np.dot(state.qdot, state.qdot) * np.linalg.norm(m)
            assert residual < bound


class TestStiffnessDamping:
    def test_zero_at_reference(self):
        model = table_model()
        assert np.max(np.abs(dyn.stiffness_vector(rest_state(model), model))) == 0.0

    def test_linear_with_analytic_slope(self):
        model = table_model()
        # constant basis: K_s = L * diag(EI, EI) @ q_s
        ei = model.rod.young_modulus * model.rod.bending_moment_of_area
        q_s = np.array([0.3, -0.7])
        k = dyn.stiffness_vector(rest_state(model, q_s=q_s), model)
        np.testing.assert_allclose(k[6:], ei * model.rod.length * q_s, rtol=1e-12)
        assert np.all(k[:6] == 0)

    def test_damping_block_structure(self):
        model = table_model()
        d = dyn.damping_matrix(model)
        assert np.all(d[:6, :] == 0) and np.all(d[:, :6] == 0)
        eigs = np.linalg.eigvalsh(d[6:, 6:])
        assert np.min(eigs) >= 0
        np.testing.assert_array_equal(d, d.T)


class TestActuationMatrix:
    def test_mixer_bottom_row(self):
        gamma = dyn.mixer_matrix(dyn.MixerParams())
        assert np.sum(gamma[5]) == 4.0
        np.testing.assert_array_equal(gamma[3], np.zeros(4))
        np.testing.assert_array_equal(gamma[4], np.zeros(4))

    def test_opposite_tendons_cancel(self):
        model = table_model()
        b = dyn.actuation_matrix(rest_state(model), model)
        rod_force = b[6:, 4:] @ np.array([1.0, 0.0, 1.0, 0.0])
        np.testing.assert_allclose(rod_force, 0.0, atol=1e-12)

    def test_thrust_force_independent_of_yaw(self):
        model = table_model()
        for psi in (0.0, 0.7):
            state = rest_state(model, euler=(0.0, 0.0, psi))
            b = dyn.actuation_matrix(state, model)
            force = b[3:6, :4] @ np.ones(4)
            np.testing.assert_allclose(force, [0, 0, 4.0], atol=1e-12)

    def test_block_structure(self):
        model = table_model()
        b = dyn.actuation_matrix(random_state(RNG), model)
        assert np.all(b[:6, 4:] == 0) and np.all(b[6:, :4] == 0)


class TestExternalForces:
    def test_zero_gravity(self):
        model = table_model(gravity=0.0)
        assert np.max(np.abs(dyn.external_forces(random_state(RNG), model))) == 0.0

    def test_total_weight_on_vertical_axis(self):
        model = table_model()
        tau = dyn.external_forces(rest_state(model), model)
        assert tau[5] == pytest.approx(-total_weight(model), rel=1e-12)

    def test_uav_block_weight_with_negligible_rod(self):
        model = table_model(rod_density=1e-12)
        tau = dyn.external_forces(rest_state(model), model)
        assert tau[5] == pytest.approx(-model.uav.mass * model.mixer.gravity, rel=1e-9)

    def test_hover_equilibrium(self):
        model = table_model()
        state = rest_state(model)
        b = dyn.actuation_matrix(state, model)
        residual = b @ hover_input(model).stacked() + dyn.external_forces(state, model)
        assert np.max(np.abs(residual)) < 1e-9


class TestForwardDynamics:
    def test_equilibrium_без_input(self):
        model = table_model(gravity=0.0)
        qdd = dyn.forward_dynamics(
            rest_state(model), model, dyn.ActuatorInput(np.zeros(4), np.zeros(4))
        )
        np.testing.assert_allclose(qdd, np.zeros(8), atol=1e-12)

    def test_thrust_step_newton_check(self):
        model = table_model()
        state = rest_state(model)
        extra = 0.8
        thrust = (total_weight(model) + extra) / 4.0
        qdd = dyn.forward_dynamics(
            state, model, dyn.ActuatorInput(np.full(4, thrust), np.zeros(4))
        )
        rho_al = model.rod.density * model.rod.cross_section_area * model.rod.length
        expected = extra / (model.uav.mass + rho_al)
        assert qdd[5] == pytest.approx(expected, rel=1e-9)
        others = np.delete(qdd, 5)
        assert np.max(np.abs(others)) < 1e-9


class TestStep:
    def test_equilibrium_hold(self):
        model = table_model()
        state = rest_state(model)
        after = dyn.step(state, model, hover_input(model), 0.02)
        np.testing.assert_allclose(after.q, state.q, atol=1e-12)
        np.testing.assert_allclose(after.qdot, state.qdot, atol=1e-12)

    def test_free_rigid_body_matches_euler_equations(self):
        # rod shrunk to nothing (stiffness scaled with density so the rod's
        # natural frequency stays integrable), gravity off: body rates follow
        # the classic Euler equations for a free rigid body
        shrink = 3e-5 / 6.45e3
        model = table_model(
            gravity=0.0,
            rod_density=3e-5,
            young_modulus=5e10 * shrink,
            damping_coeff=1e2 * shrink,
        )
        inertia = np.asarray(model.uav.moments)
        omega0 = np.array([0.3, 0.2, 2.0])

        def euler_rhs(_t, w):
            return -np.cross(w, inertia * w) / inertia

        oracle = solve_ivp(
            euler_rhs, (0.0, 1.0), omega0, rtol=1e-12, atol=1e-14, dense_output=True
        )
        t_map0 = np.eye(3)
        state = kin.GeneralizedState(
            np.zeros(8), np.concatenate([np.linalg.solve(t_map0, omega0), np.zeros(5)])
        )
        zero_input = dyn.ActuatorInput(np.zeros(4), np.zeros(4))
        dt = 0.005
        for k in range(200):
            state = dyn.step(state, model, zero_input, dt)
            from acmsim.liegroup import euler_rate_map

            omega_sim = euler_rate_map(state.q[0], state.q[1]) @ state.qdot[:3]
            np.testing.assert_allclose(
                omega_sim, oracle.sol((k + 1) * dt), atol=1e-6
            )

    def test_fourth_order_convergence(self):
        model = table_model()
        thrust = (total_weight(model) + 0.5) / 4.0
        control = dyn.ActuatorInput(np.full(4, thrust), np.array([0.4, 0.0, 0.1, 0.0]))
        start = rest_state(model, q_s=(0.2, -0.1))
        horizon = 0.16

        def integrate(dt):
            state = start.copy()
            for _ in range(int(round(horizon / dt))):
                state = dyn.step(state, model, control, dt)
            return np.concatenate([state.q, state.qdot])

        reference = integrate(0.00125)
        errors = [np.linalg.norm(integrate(dt) - reference) for dt in (0.04, 0.02, 0.01)]
        slope = np.polyfit(np.log([0.04, 0.02, 0.01]), np.log(errors), 1)[0]
        assert 3.5 <= slope <= 4.5


class TestEnergy:
    def test_passive_decay_gravity_off(self):
        model = table_model(gravity=0.0)
        state = rest_state(model, q_s=(0.3, 0.4))
        zero_input = dyn.ActuatorInput(np.zeros(4), np.zeros(4))
        energy = [dyn.total_energy(state, model)]
        for _ in range(50):
            state = dyn.step(state, model, zero_input, 0.02)
            energy.append(dyn.total_energy(state, model))
        energy = np.array(energy)
        assert np.all(np.diff(energy) <= 1e-6 * max(1.0, abs(energy[0])))

    def test_energy_balance_with_input(self):
        # |dE/dt - qdot.(B u) + qdot.D.qdot| small along a driven trajectory
        model = table_model()
        thrust = (total_weight(model) + 0.3) / 4.0
        control = dyn.ActuatorInput(
            np.full(4, thrust), np.array([0.2, 0.05, 0.0, 0.1])
        )
        state = rest_state(model, q_s=(0.1, -0.2))
        dt = 0.02
        states = [state]
        for _ in range(30):
            state = dyn.step(state, model, control, dt)
            states.append(state)
        energies = np.array([dyn.total_energy(s, model) for s in states])
        d_mat = dyn.damping_matrix(model)
        for k in range(1, len(states) - 1):
            s = states[k]
            b = dyn.actuation_matrix(s, model)
            power = s.qdot @ (b @ control.stacked()) - s.qdot @ d_mat @ s.qdot
            e_rate = (energies[k + 1] - energies[k - 1]) / (2 * dt)
            assert abs(e_rate - power) < 1e-3 * (1.0 + abs(e_rate))


class TestDecoupledQuadrotor:
    def test_matches_textbook_rigid_body(self):
        # negligible rod: generalized dynamics must reproduce Newton-Euler
        model = table_model(gravity=0.0, rod_density=1e-5)
        inertia = np.asarray(model.uav.moments)
        mass = model.uav.mass
        rng = np.random.default_rng(5)
        for _ in range(5):
            q = np.concatenate(
                [rng.uniform(-0.4, 0.4, 2), rng.uniform(-np.pi, np.pi, 1),
                 rng.uniform(-1, 1, 3), np.zeros(2)]
            )
            qd = np.concatenate([rng.normal(size=6), np.zeros(2)])
            state = kin.GeneralizedState(q, qd)
            torque_b = rng.normal(size=3)
            force_b = rng.normal(size=3)
            from acmsim.liegroup import euler_rate_map, euler_zyx_rotation

            t_map = euler_rate_map(q[0], q[1])
            r_b = euler_zyx_rotation(q[0], q[1], q[2])
            tau = np.zeros(8)
            tau[:3] = t_map.T @ torque_b
            tau[3:6] = r_b @ force_b
            qdd = dyn.forward_dynamics(state, model, generalized_force=tau)

            # textbook: I wdot = tau_b - w x I w ; m rddot = R f_b
            phi_d, theta_d = qd[0], qd[1]
            cf, sf = np.cos(q[0]), np.sin(q[0])
            ct, st = np.cos(q[1]), np.sin(q[1])
            dT_dphi = np.array(
                [[0, 0, 0], [0, -sf, cf * ct], [0, -cf, -sf * ct]]
            )
            dT_dtheta = np.array(
                [[0, 0, -ct], [0, 0, -sf * st], [0, 0, -cf * st]]
            )
            t_dot = dT_dphi * phi_d + dT_dtheta * theta_d
            omega = t_map @ qd[:3]
            omega_dot_sim = t_dot @ qd[:3] + t_map @ qdd[:3]
            omega_dot_ref = (torque_b - np.cross(omega, inertia * omega)) / inertia
            np.testing.assert_allclose(omega_dot_sim, omega_dot_ref, atol=1e-9)
            np.testing.assert_allclose(qdd[3:6], r_b @ force_b / mass, atol=1e-9)
