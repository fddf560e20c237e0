"""Plant models: simulation, linearization, residuals, JSON configs."""

import json

import numpy as np
import pytest

import ddstab as dd
from ddstab.errors import DivergenceError, InputError
from ddstab.plant import FD_STEP, PlantModel, _fd_jacobian, deviation_trajectory


# --- simulate ---------------------------------------------------------------


def test_scalar_quadratic_chain(scalar_plant):
    # x+ = x^2 + u from 0.1 under the geometric input chain
    traj = dd.simulate(scalar_plant, [0.1], [0.1, 0.11, 0.1221])
    expected = [0.1, 0.11, 0.1221, 0.13700841]
    assert traj.states.shape == (1, 4)
    np.testing.assert_allclose(traj.states[0], expected, rtol=0, atol=1e-15)


def test_equilibrium_is_fixed_point():
    for plant in (dd.scalar_quadratic(), dd.pendulum(), dd.linear([[0.5]], [[1.0]])):
        x_eq, u_eq = plant.equilibrium
        U = np.tile(u_eq[:, None], (1, 100))
        traj = dd.simulate(plant, x_eq, U)
        assert np.max(np.abs(traj.states - x_eq[:, None])) <= 1e-10


def test_pendulum_upright_is_unstable(pend):
    # a tiny initial angle grows without any applied torque
    traj = dd.simulate(pend, [0.01, 0.0], np.zeros((1, 200)))
    assert np.max(np.abs(traj.states[0])) > 0.5


def test_simulate_shapes_and_inputs_1d(pend):
    traj = dd.simulate(pend, [0.1, -0.2], np.linspace(-1, 1, 7))
    assert traj.states.shape == (2, 8)
    assert traj.inputs.shape == (1, 7)
    # column k+1 is exactly step applied to column k
    for k in range(7):
        np.testing.assert_array_equal(
            traj.states[:, k + 1], pend.step(traj.states[:, k], traj.inputs[:, k])
        )


def test_simulate_divergence(scalar_plant):
    x = 3.0
    steps = 0
    while np.isfinite(x):
        x = x * x
        steps += 1
    with np.errstate(over="ignore"), pytest.raises(DivergenceError) as exc:
        dd.simulate(scalar_plant, [3.0], np.zeros(steps + 5))
    assert exc.value.first_bad_index == steps


def test_simulate_rejects_bad_inputs(pend):
    with pytest.raises(InputError):
        dd.simulate(pend, [0.0, 0.0], np.zeros((2, 5)))  # m mismatch
    with pytest.raises(InputError):
        dd.simulate(pend, [np.nan, 0.0], np.zeros((1, 5)))
    with pytest.raises(InputError):
        dd.simulate(pend, [0.0, 0.0], [[1.0, np.inf]])


# --- linearize --------------------------------------------------------------


def test_linearize_builtins(pend, scalar_plant):
    lin = dd.linearize(scalar_plant)
    np.testing.assert_array_equal(lin.A, [[0.0]])
    np.testing.assert_array_equal(lin.B, [[1.0]])

    lin = dd.linearize(pend)
    np.testing.assert_allclose(lin.A, [[1.0, 0.1], [0.98, 0.999]], atol=1e-15)
    np.testing.assert_allclose(lin.B, [[0.0], [0.1]], atol=1e-15)

    A = [[0.2, 0.3], [0.0, -0.4]]
    B = [[1.0], [0.5]]
    lin = dd.linearize(dd.linear(A, B))
    np.testing.assert_array_equal(lin.A, A)
    np.testing.assert_array_equal(lin.B, B)


def test_finite_difference_matches_exact(pend):
    # strip the exact linearization and recover it numerically
    fd_plant = PlantModel(
        n=pend.n,
        m=pend.m,
        step=pend.step,
        equilibrium=pend.equilibrium,
        exact_linearization=None,
        name="pendulum_fd",
    )
    lin = dd.linearize(fd_plant)
    exact = pend.exact_linearization
    assert np.max(np.abs(lin.A - exact.A)) <= 1e-6
    assert np.max(np.abs(lin.B - exact.B)) <= 1e-6


def test_fd_jacobian_on_polynomial_map():
    # f(x, u) = (x1^2 + 2 u, x1 x2) has a known Jacobian at (1, 2), u=3
    def f(x, u):
        return np.array([x[0] ** 2 + 2.0 * u[0], x[0] * x[1]])

    x_eq = np.array([1.0, 2.0])
    u_eq = np.array([3.0])
    A, B = _fd_jacobian(f, x_eq, u_eq)
    np.testing.assert_allclose(A, [[2.0, 0.0], [2.0, 1.0]], atol=1e-6)
    np.testing.assert_allclose(B, [[2.0], [0.0]], atol=1e-6)
    assert FD_STEP < 1e-3  # central differences stay in the quadratic regime


def test_linearization_pair_validation():
    with pytest.raises(InputError):
        dd.LinearizationPair(A=[[1.0, 0.0]], B=[[1.0]])
    with pytest.raises(InputError):
        dd.LinearizationPair(A=[[1.0]], B=[[1.0], [0.0]])
    with pytest.raises(InputError):
        dd.LinearizationPair(A=[[np.nan]], B=[[1.0]])


def test_pendulum_parameter_validation():
    with pytest.raises(InputError):
        dd.pendulum(dt=0.0)
    with pytest.raises(InputError):
        dd.pendulum(friction=-0.01)
    with pytest.raises(InputError):
        dd.pendulum(gravity=0.0)
    lin = dd.linearize(dd.pendulum(dt=0.05, length=2.0))
    np.testing.assert_allclose(lin.A[0, 1], 0.05)
    np.testing.assert_allclose(lin.A[1, 0], 0.05 * 9.8 / 2.0)


# --- deviation coordinates / residuals --------------------------------------


def test_deviation_trajectory_shifts_equilibrium():
    def step(x, u):
        return np.array([0.5 * (x[0] - 1.0) + (u[0] - 2.0) + 1.0])

    plant = PlantModel(
        n=1, m=1, step=step, equilibrium=(np.array([1.0]), np.array([2.0]))
    )
    traj = dd.simulate(plant, [1.4], [2.0, 2.1, 2.0])
    dev = deviation_trajectory(plant, traj)
    np.testing.assert_allclose(dev.states, traj.states - 1.0)
    np.testing.assert_allclose(dev.inputs, traj.inputs - 2.0)


def test_remainder_linear_plant_is_zero(rng):
    A = rng.uniform(-0.5, 0.5, (3, 3))
    B = rng.uniform(-1, 1, (3, 2))
    plant = dd.linear(A, B)
    traj = dd.simulate(plant, rng.uniform(-1, 1, 3), rng.uniform(-1, 1, (2, 12)))
    dm = dd.remainder_sequence(plant, traj)
    assert np.max(np.abs(dm.D0)) <= 1e-12


def test_remainder_scalar_quadratic(scalar_plant):
    traj = dd.simulate(scalar_plant, [0.1], [0.1, 0.11, 0.1221])
    dm = dd.remainder_sequence(scalar_plant, traj)
    # the residual of x+ = x^2 + u against A=0, B=1 is the pure square
    np.testing.assert_allclose(dm.D0[0], traj.states[0, :3] ** 2, atol=1e-15)


def test_remainder_reconstructs_next_states(pend, scalar_plant, rng):
    plants = [pend, scalar_plant, dd.linear([[0.3, 0.1], [0.0, 0.2]], [[0.0], [1.0]])]
    for plant in plants:
        x0 = rng.uniform(-0.3, 0.3, plant.n)
        U = rng.uniform(-0.3, 0.3, (plant.m, 10))
        dm = dd.remainder_sequence(plant, dd.simulate(plant, x0, U))
        lin = dd.linearize(plant)
        recon = lin.A @ dm.X0 + lin.B @ dm.U0 + dm.D0
        assert np.max(np.abs(recon - dm.X1)) <= 1e-10


def test_pendulum_remainder_is_sine_defect(pend, rng):
    x0 = rng.uniform(-0.5, 0.5, 2)
    U = rng.uniform(-1, 1, (1, 8))
    traj = dd.simulate(pend, x0, U)
    dm = dd.remainder_sequence(pend, traj)
    np.testing.assert_allclose(dm.D0[0], 0.0, atol=1e-14)
    angles = traj.states[0, :8]
    np.testing.assert_allclose(dm.D0[1], 0.98 * (np.sin(angles) - angles), atol=1e-12)


def test_remainder_shrinks_linearly_with_scale(pend):
    # first-order Taylor residual: ||D0|| / ||X0|| = O(scale)
    def ratio(scale):
        inputs = scale * np.sin(np.arange(12))
        traj = dd.simulate(pend, [0.3 * scale, 0.0], inputs)
        dm = dd.remainder_sequence(pend, traj)
        return np.linalg.norm(dm.D0, 2) / np.linalg.norm(dm.X0, 2)

    scales = [1e-1, 1e-2, 1e-3]
    ratios = [ratio(s) for s in scales]
    c = ratios[0] / scales[0]
    for s, r in zip(scales[1:], ratios[1:]):
        assert r <= 1.1 * c * s


def test_remainder_rejects_mismatched_trajectory(pend, scalar_plant):
    traj = dd.simulate(scalar_plant, [0.1], [0.0, 0.0, 0.0])
    with pytest.raises(InputError):
        dd.remainder_sequence(pend, traj)


# --- JSON configs -----------------------------------------------------------


def test_plant_from_config_builtins():
    plant = dd.plant_from_config({"kind": "scalar_quadratic"})
    assert plant.name == "scalar_quadratic"

    plant = dd.plant_from_config({"kind": "pendulum", "params": {"dt": 0.2}})
    assert plant.exact_linearization.A[0, 1] == 0.2

    config = {"kind": "linear", "params": {"A": [[0.5, 0.0], [0.1, 0.2]], "B": [[1.0], [0.0]]}}
    plant = dd.plant_from_config(config)
    assert (plant.n, plant.m) == (2, 1)
    np.testing.assert_array_equal(plant.exact_linearization.A, config["params"]["A"])


def test_plant_from_config_rejects():
    for bad in [
        {"params": {}},
        {"kind": "rocket"},
        {"kind": "pendulum", "params": {"dtt": 0.1}},
        {"kind": "pendulum", "params": [0.1]},
        {"kind": "scalar_quadratic", "params": {"dt": 0.1}},
        {"kind": "linear", "params": {"A": [[1.0]]}},
        "pendulum",
    ]:
        with pytest.raises(InputError):
            dd.plant_from_config(bad)


def test_load_plant_round_trip(tmp_path):
    path = tmp_path / "plant.json"
    path.write_text(json.dumps({"kind": "pendulum", "params": {"length": 2.0}}))
    plant = dd.load_plant(str(path))
    assert plant.name == "pendulum"
    np.testing.assert_allclose(plant.exact_linearization.B[1, 0], 0.1 / 4.0)

    (tmp_path / "broken.json").write_text("{not json")
    with pytest.raises(InputError):
        dd.load_plant(str(tmp_path / "broken.json"))
    with pytest.raises(InputError):
        dd.load_plant(str(tmp_path / "missing.json"))
