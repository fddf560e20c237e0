"""Discrete-time plant models: simulation, linearization, residual extraction.

A PlantModel is the experiment oracle: it can be simulated, linearized at its
equilibrium, and asked for the one-step residuals that separate the nonlinear
data from what the linearization alone would have produced.  All data matrices
derived from a plant are expressed in deviation coordinates around the
equilibrium pair.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .datamat import DataMatrices, Trajectory, build_data_matrices, _freeze
from .errors import DivergenceError, InputError

#: Base step for finite-difference Jacobians; scaled by max(1, |equilibrium|).
FD_STEP = 1e-5


@dataclass(frozen=True)
class LinearizationPair:
    """First-approximation matrices (A, B) of a plant at its equilibrium."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        B = np.asarray(self.B, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise InputError("A must be square")
        if B.ndim != 2 or B.shape[0] != A.shape[0]:
            raise InputError("B must be n x m")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
            raise InputError("linearization must be finite")
        object.__setattr__(self, "A", _freeze(A))
        object.__setattr__(self, "B", _freeze(B))


@dataclass(frozen=True)
class PlantModel:
    """A discrete-time map x(k+1) = step(x(k), u(k)) with a known equilibrium."""

    n: int
    m: int
    step: Callable[[np.ndarray, np.ndarray], np.ndarray]
    equilibrium: tuple[np.ndarray, np.ndarray]
    exact_linearization: LinearizationPair | None = None
    name: str = "custom"

    def __post_init__(self):
        x_eq = np.asarray(self.equilibrium[0], dtype=float).reshape(self.n)
        u_eq = np.asarray(self.equilibrium[1], dtype=float).reshape(self.m)
        object.__setattr__(self, "equilibrium", (_freeze(x_eq), _freeze(u_eq)))


def scalar_quadratic() -> PlantModel:
    """The scalar benchmark x(k+1) = x(k)^2 + u(k) with equilibrium (0, 0)."""

    def step(x, u):
        return np.array([x[0] * x[0] + u[0]])

    return PlantModel(
        n=1,
        m=1,
        step=step,
        equilibrium=(np.zeros(1), np.zeros(1)),
        exact_linearization=LinearizationPair(A=[[0.0]], B=[[1.0]]),
        name="scalar_quadratic",
    )


def pendulum(
    dt: float = 0.1,
    mass: float = 1.0,
    length: float = 1.0,
    friction: float = 0.01,
    gravity: float = 9.8,
) -> PlantModel:
    """Euler-discretized inverted pendulum, upright equilibrium.

    State is (angle, angular velocity), input the applied torque:

        x1(k+1) = x1(k) + dt * x2(k)
        x2(k+1) = (dt*g/l) sin x1(k) + (1 - dt*mu/(m l^2)) x2(k)
                  + dt/(m l^2) * u(k)

    The default parameter values are package defaults, configurable through
    the keyword arguments and the plant JSON config.
    """
    if min(dt, mass, length) <= 0 or gravity <= 0 or friction < 0:
        raise InputError("pendulum parameters must be positive (friction >= 0)")
    a21 = dt * gravity / length
    a22 = 1.0 - dt * friction / (mass * length**2)
    b2 = dt / (mass * length**2)

    def step(x, u):
        return np.array([x[0] + dt * x[1], a21 * np.sin(x[0]) + a22 * x[1] + b2 * u[0]])

    return PlantModel(
        n=2,
        m=1,
        step=step,
        equilibrium=(np.zeros(2), np.zeros(1)),
        exact_linearization=LinearizationPair(A=[[1.0, dt], [a21, a22]], B=[[0.0], [b2]]),
        name="pendulum",
    )


def linear(A, B) -> PlantModel:
    """A linear plant x(k+1) = A x(k) + B u(k) (its own exact linearization)."""
    lin = LinearizationPair(A=A, B=B)
    n, m = lin.B.shape

    def step(x, u):
        return lin.A @ x + lin.B @ u

    return PlantModel(
        n=n,
        m=m,
        step=step,
        equilibrium=(np.zeros(n), np.zeros(m)),
        exact_linearization=lin,
        name="linear",
    )


def simulate(plant: PlantModel, x0, inputs) -> Trajectory:
    """Roll the plant forward from x0 under the given input columns.

    `inputs` is (m, T) with one column per step (a 1-D array is treated as a
    scalar input signal).  Raises DivergenceError with the index of the first
    non-finite state if the trajectory blows up.
    """
    x0 = np.asarray(x0, dtype=float).reshape(plant.n)
    U = np.asarray(inputs, dtype=float)
    if U.ndim == 1:
        U = U[None, :]
    if U.shape[0] != plant.m:
        raise InputError(f"inputs have {U.shape[0]} rows, plant has m={plant.m}")
    if not (np.all(np.isfinite(x0)) and np.all(np.isfinite(U))):
        raise InputError("x0 and inputs must be finite")
    T = U.shape[1]
    X = np.empty((plant.n, T + 1))
    X[:, 0] = x0
    for k in range(T):
        X[:, k + 1] = plant.step(X[:, k], U[:, k])
        if not np.all(np.isfinite(X[:, k + 1])):
            raise DivergenceError(
                f"state became non-finite at step {k + 1}", first_bad_index=k + 1
            )
    return Trajectory(states=X, inputs=U)


def _fd_jacobian(f, x_eq: np.ndarray, u_eq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n, m = x_eq.size, u_eq.size
    hx = FD_STEP * max(1.0, float(np.linalg.norm(x_eq)))
    hu = FD_STEP * max(1.0, float(np.linalg.norm(u_eq)))
    A = np.empty((n, n))
    B = np.empty((n, m))
    for j in range(n):
        e = np.zeros(n)
        e[j] = hx
        A[:, j] = (f(x_eq + e, u_eq) - f(x_eq - e, u_eq)) / (2.0 * hx)
    for j in range(m):
        e = np.zeros(m)
        e[j] = hu
        B[:, j] = (f(x_eq, u_eq + e) - f(x_eq, u_eq - e)) / (2.0 * hu)
    return A, B


def linearize(plant: PlantModel) -> LinearizationPair:
    """Exact linearization if the plant carries one, else central differences."""
    if plant.exact_linearization is not None:
        return plant.exact_linearization
    x_eq, u_eq = plant.equilibrium
    A, B = _fd_jacobian(plant.step, x_eq, u_eq)
    return LinearizationPair(A=A, B=B)


def deviation_trajectory(plant: PlantModel, traj: Trajectory) -> Trajectory:
    """Shift a raw trajectory into deviation coordinates around the equilibrium."""
    x_eq, u_eq = plant.equilibrium
    return Trajectory(
        states=traj.states - x_eq[:, None],
        inputs=traj.inputs - u_eq[:, None],
    )


def remainder_sequence(plant: PlantModel, traj: Trajectory) -> DataMatrices:
    """Data matrices of a trajectory with the one-step residuals filled in.

    Column k of D0 is x(k+1) - A x(k) - B u(k) in deviation coordinates; by
    construction X1 = A X0 + B U0 + D0 holds exactly.
    """
    if traj.n != plant.n or traj.m != plant.m:
        raise InputError("trajectory dimensions do not match the plant")
    lin = linearize(plant)
    dev = deviation_trajectory(plant, traj)
    base = build_data_matrices(dev)
    D0 = base.X1 - lin.A @ base.X0 - lin.B @ base.U0
    return DataMatrices(U0=base.U0, X0=base.X0, X1=base.X1, D0=D0)


# ---------------------------------------------------------------------------
# Plant JSON config
# ---------------------------------------------------------------------------

_BUILTIN_PARAMS = {"dt", "mass", "length", "friction", "gravity"}


def plant_from_config(config: dict) -> PlantModel:
    """Build a plant from its JSON config dict.

    {"kind": "pendulum", "params": {"dt": 0.1, ...}}   (params optional)
    {"kind": "scalar_quadratic"}
    {"kind": "linear", "params": {"A": [[...]], "B": [[...]]}}  (row-major)
    """
    if not isinstance(config, dict) or "kind" not in config:
        raise InputError("plant config must be an object with a 'kind' key")
    kind = config["kind"]
    params = config.get("params", {}) or {}
    if not isinstance(params, dict):
        raise InputError("'params' must be an object")
    if kind == "pendulum":
        unknown = set(params) - _BUILTIN_PARAMS
        if unknown:
            raise InputError(f"unknown pendulum params: {sorted(unknown)}")
        return pendulum(**params)
    if kind == "scalar_quadratic":
        if params:
            raise InputError("scalar_quadratic takes no params")
        return scalar_quadratic()
    if kind == "linear":
        if "A" not in params or "B" not in params:
            raise InputError("linear plant needs 'A' and 'B' arrays")
        return linear(params["A"], params["B"])
    raise InputError(f"unknown plant kind {kind!r}")


def load_plant(path: str) -> PlantModel:
    """Read a plant JSON config file."""
    try:
        with open(path, encoding="utf-8") as fp:
            config = json.load(fp)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read plant config {path}: {exc}") from exc
    return plant_from_config(config)
