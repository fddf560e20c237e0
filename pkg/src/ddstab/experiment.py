"""Experiment generation, execution, and scaling.

An ExperimentSpec is an open-loop experiment in deviation coordinates: an
initial state offset and an input sequence.  Scaling an experiment by epsilon
multiplies both; driving epsilon down shrinks the nonlinear residual in the
recorded data faster than the informative linear content, which is what makes
small experiments certifiable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .datamat import (
    DataMatrices,
    Trajectory,
    build_data_matrices,
    is_persistently_exciting,
    _freeze,
)
from .errors import ExcitationError, InputError
from .plant import (
    PlantModel,
    deviation_trajectory,
    linear,
    linearize,
    remainder_sequence,
    simulate,
)

#: Input amplitude default: uniform samples on [-5, 5].
DEFAULT_AMPLITUDE = 5.0
#: Default horizon for the n=2, m=1 demos; comfortably above the excitation
#: minimum (m+1)(n+1)-1 = 5 so rank margins are not borderline.
DEFAULT_HORIZON = 15
_PE_RETRIES = 10


@dataclass(frozen=True)
class ExperimentSpec:
    """Initial state, input columns, scale, and the seed that generated them."""

    x0: np.ndarray
    inputs: np.ndarray
    epsilon: float = 1.0
    seed: int | None = None

    def __post_init__(self):
        x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        U = np.asarray(self.inputs, dtype=float)
        if U.ndim == 1:
            U = U[None, :]
        if U.ndim != 2 or U.shape[1] < 1:
            raise InputError("inputs must be (m, T) with T >= 1")
        if not (np.all(np.isfinite(x0)) and np.all(np.isfinite(U))):
            raise InputError("experiment spec must be finite")
        if not self.epsilon > 0:
            raise InputError(f"epsilon must be positive, got {self.epsilon}")
        object.__setattr__(self, "x0", _freeze(x0))
        object.__setattr__(self, "inputs", _freeze(U))

    @property
    def T(self) -> int:
        return self.inputs.shape[1]

    @property
    def m(self) -> int:
        return self.inputs.shape[0]


def generate_pe_input(
    m: int,
    n: int,
    T: int,
    amplitude: float = DEFAULT_AMPLITUDE,
    seed: int | None = None,
) -> np.ndarray:
    """Seeded uniform input columns, verified persistently exciting of order n+1.

    Redraws up to a bounded number of times if a realization fails the rank
    check (possible only for pathological amplitude/seed combinations).
    """
    order = n + 1
    min_T = (m + 1) * (n + 1) - 1
    if T < min_T:
        raise InputError(
            f"T={T} too short for excitation of order {order}: need T >= {min_T}"
        )
    rng = np.random.default_rng(seed)
    for _ in range(_PE_RETRIES):
        U = rng.uniform(-amplitude, amplitude, size=(m, T))
        ok, _ = is_persistently_exciting(U, order)
        if ok:
            return U
    raise ExcitationError(
        f"no persistently exciting draw of order {order} after {_PE_RETRIES} tries "
        f"(amplitude={amplitude})"
    )


def adversarial_theta_input(theta: float) -> ExperimentSpec:
    """The length-3 scalar experiment that defeats the rank certificate.

    Starting the scalar quadratic plant at theta and feeding
    [theta, theta + theta^2, and once more with the sum squared and added]
    makes the input row reproduce the state row exactly, so [U0; X0] has rank 1
    for every nonzero theta no matter how small.
    """
    if not np.isfinite(theta):
        raise InputError("theta must be finite")
    u0 = theta
    u1 = theta + theta * theta
    u2 = u1 + u1 * u1
    return ExperimentSpec(x0=[theta], inputs=[[u0, u1, u2]], epsilon=1.0)


def scale_experiment(spec: ExperimentSpec, epsilon: float) -> ExperimentSpec:
    """Multiply initial state and inputs by epsilon (> 0).

    Rank of the input's block-Hankel matrix is invariant under positive
    scaling, so excitation order is preserved.
    """
    if not (np.isfinite(epsilon) and epsilon > 0):
        raise InputError(f"scale must be a positive real, got {epsilon}")
    return replace(
        spec,
        x0=spec.x0 * epsilon,
        inputs=spec.inputs * epsilon,
        epsilon=spec.epsilon * epsilon,
    )


def run_experiment(
    plant: PlantModel, spec: ExperimentSpec, oracle: bool = False
) -> tuple[Trajectory, DataMatrices]:
    """Execute an experiment and build its data matrices.

    The spec is in deviation coordinates: simulation starts at
    equilibrium + x0 with inputs equilibrium-input + u, and the returned
    matrices are shifted back to deviation coordinates.

    With oracle=True the plant model is consulted to fill in D0 (the one-step
    residuals) and the data the linearized model would have produced from the
    same experiment (U0_lin, X0_lin, X1_lin).
    """
    if spec.x0.size != plant.n or spec.m != plant.m:
        raise InputError("experiment spec dimensions do not match the plant")
    x_eq, u_eq = plant.equilibrium
    traj = simulate(plant, x_eq + spec.x0, u_eq[:, None] + spec.inputs)
    if not oracle:
        return traj, build_data_matrices(deviation_trajectory(plant, traj))

    with_resid = remainder_sequence(plant, traj)
    lin = linearize(plant)
    lin_traj = simulate(linear(lin.A, lin.B), spec.x0, spec.inputs)
    lin_dm = build_data_matrices(lin_traj)
    dm = DataMatrices(
        U0=with_resid.U0,
        X0=with_resid.X0,
        X1=with_resid.X1,
        D0=with_resid.D0,
        U0_lin=lin_dm.U0,
        X0_lin=lin_dm.X0,
        X1_lin=lin_dm.X1,
    )
    return traj, dm


# ---------------------------------------------------------------------------
# Experiment spec JSON
# ---------------------------------------------------------------------------


def spec_to_dict(spec: ExperimentSpec) -> dict:
    return {
        "x0": [float(v) for v in spec.x0],
        "inputs": [[float(v) for v in row] for row in spec.inputs],
        "epsilon": float(spec.epsilon),
        "seed": spec.seed,
    }


def spec_from_dict(data: dict) -> ExperimentSpec:
    if not isinstance(data, dict) or "x0" not in data or "inputs" not in data:
        raise InputError("experiment spec needs 'x0' and 'inputs'")
    return ExperimentSpec(
        x0=data["x0"],
        inputs=data["inputs"],
        epsilon=float(data.get("epsilon", 1.0)),
        seed=data.get("seed"),
    )


def load_experiment(path: str) -> ExperimentSpec:
    try:
        with open(path, encoding="utf-8") as fp:
            data = json.load(fp)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read experiment spec {path}: {exc}") from exc
    return spec_from_dict(data)
