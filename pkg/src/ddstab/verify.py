"""Closed-loop verification and the shrinking-experiment sweep.

The sweep is the practical recipe: run the same experiment at a decreasing
sequence of scales, certify and solve at each scale, and watch the design
converge to the one the exact linearization would give.  For smooth plants
the residual content of the data dies faster than the scale itself, so some
row down the grid passes both certificates — and from there on the returned
gain provably stabilizes.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from .certify import check_assumption1, check_gamma_condition, gamma_min
from .datamat import _freeze
from .errors import DDStabError, GammaUndefinedError, InputError
from .experiment import ExperimentSpec, run_experiment, scale_experiment
from .plant import LinearizationPair, PlantModel, linear, linearize
from .sdp import DEFAULT_SOLVER_TOL, SolverAdapter, build_design, solve_design

#: A closed-loop trajectory counts as stable when the deviation decays to
#: this fraction of its starting value over the test horizon.
DECAY_FACTOR = 0.1
DEFAULT_TRIALS = 20
DEFAULT_HORIZON = 200
DEFAULT_SIM_RADIUS = 0.05

SWEEP_COLUMNS = [
    "epsilon",
    "K_dist",
    "alpha_dist",
    "stability_achieved",
    "gamma_condition_fulfilled",
    "alpha",
    "gamma_min",
    "spectral_radius",
]


@dataclass(frozen=True)
class SweepRow:
    """One scale of the sweep: certificates, design outcome, verification."""

    epsilon: float
    alpha: float | None
    K: np.ndarray | None
    gamma_min: float | None
    assumption1: bool
    gamma_condition: bool | None
    spectral_radius: float | None
    sim_stable: bool
    K_dist: float | None = None
    alpha_dist: float | None = None
    solver_status: str = ""

    def __post_init__(self):
        if self.K is not None:
            object.__setattr__(self, "K", _freeze(np.asarray(self.K, dtype=float)))


def spectral_radius_closed_loop(lin: LinearizationPair, K) -> float:
    """Largest eigenvalue magnitude of A + B K."""
    K = np.asarray(K, dtype=float).reshape(lin.B.shape[1], lin.A.shape[0])
    return float(np.max(np.abs(np.linalg.eigvals(lin.A + lin.B @ K))))


def simulate_closed_loop_stability(
    plant: PlantModel,
    K,
    radius: float,
    n_trials: int = DEFAULT_TRIALS,
    horizon: int = DEFAULT_HORIZON,
    seed: int = 0,
) -> tuple[bool, dict]:
    """Monte-Carlo local stability test of x+ = f(x, u_eq + K (x - x_eq)).

    Samples initial states uniformly in the ball of the given radius around
    the equilibrium and simulates the closed loop.  Passes when every
    trajectory's final deviation is at most DECAY_FACTOR times its initial
    one; a diverging trajectory counts as failure, never as an exception.
    """
    if not radius > 0:
        raise InputError(f"radius must be positive, got {radius}")
    K = np.asarray(K, dtype=float).reshape(plant.m, plant.n)
    rng = np.random.default_rng(seed)
    x_eq, u_eq = plant.equilibrium
    worst = 0.0
    diverged = 0
    all_ok = True
    for _ in range(n_trials):
        direction = rng.standard_normal(plant.n)
        direction /= max(float(np.linalg.norm(direction)), 1e-300)
        r = radius * max(float(rng.uniform()), 1e-12) ** (1.0 / plant.n)
        x = x_eq + r * direction
        failed = False
        for _ in range(horizon):
            u = u_eq + K @ (x - x_eq)
            x = plant.step(x, u)
            if not np.all(np.isfinite(x)):
                failed = True
                break
        if failed:
            diverged += 1
            all_ok = False
            continue
        ratio = float(np.linalg.norm(x - x_eq)) / r
        worst = max(worst, ratio)
        if ratio > DECAY_FACTOR:
            all_ok = False
    return all_ok, {
        "worst_decay_ratio": worst,
        "n_diverged": diverged,
        "n_trials": n_trials,
        "horizon": horizon,
        "radius": radius,
    }


def _reference_design(
    plant: PlantModel,
    base: ExperimentSpec,
    adapter: SolverAdapter | None,
    tol: float,
) -> tuple[np.ndarray, float] | None:
    """Design on the data the exact linearization produces from the unscaled
    experiment — the convergence target of the sweep."""
    lin = linearize(plant)
    _, lin_dm = run_experiment(linear(lin.A, lin.B), base, oracle=False)
    result = solve_design(build_design(lin_dm), adapter=adapter, tol=tol)
    if result.solver_status != "optimal":
        return None
    return result.K, result.alpha


def epsilon_sweep(
    plant: PlantModel,
    base: ExperimentSpec,
    eps_grid,
    oracle: bool = True,
    reference: tuple[np.ndarray, float] | None = None,
    adapter: SolverAdapter | None = None,
    tol: float = DEFAULT_SOLVER_TOL,
    sim_radius: float = DEFAULT_SIM_RADIUS,
    sim_seed: int = 0,
) -> list[SweepRow]:
    """Certify + design + verify the base experiment at every scale in the grid.

    eps_grid must be strictly decreasing and positive.  Per-row failures are
    recorded in the row (solver_status) and the sweep continues.  When no
    reference gain/alpha pair is supplied and an oracle is available, it is
    computed once from the linearized plant's unscaled data.
    """
    grid = [float(e) for e in eps_grid]
    if not grid:
        raise InputError("eps_grid must be non-empty")
    if any(e <= 0 for e in grid) or any(a <= b for a, b in zip(grid, grid[1:])):
        raise InputError("eps_grid must be strictly decreasing and positive")

    lin = linearize(plant) if oracle else None
    if reference is None and oracle:
        reference = _reference_design(plant, base, adapter, tol)

    rows = []
    for eps in grid:
        try:
            rows.append(
                _sweep_row(
                    plant, base, eps, oracle, lin, reference, adapter, tol,
                    sim_radius, sim_seed,
                )
            )
        except DDStabError as exc:
            rows.append(
                SweepRow(
                    epsilon=eps, alpha=None, K=None, gamma_min=None,
                    assumption1=False, gamma_condition=None,
                    spectral_radius=None, sim_stable=False,
                    solver_status=f"error: {exc}",
                )
            )
    return rows


def _sweep_row(
    plant, base, eps, oracle, lin, reference, adapter, tol, sim_radius, sim_seed
) -> SweepRow:
    spec = scale_experiment(base, eps)
    _, dm = run_experiment(plant, spec, oracle=oracle)
    cert = check_assumption1(dm)

    gamma = None
    if oracle and dm.D0 is not None:
        try:
            gamma = gamma_min(dm)
        except GammaUndefinedError:
            gamma = None

    result = solve_design(build_design(dm), adapter=adapter, tol=tol)
    alpha, K = result.alpha, result.K

    gamma_condition = None
    if gamma is not None and alpha is not None:
        gamma_condition = check_gamma_condition(gamma, alpha)

    rho = None
    if lin is not None and K is not None:
        rho = spectral_radius_closed_loop(lin, K)

    sim_ok = False
    if K is not None:
        sim_ok, _ = simulate_closed_loop_stability(
            plant, K, radius=sim_radius, seed=sim_seed
        )

    K_dist = None
    alpha_dist = None
    if reference is not None:
        K_ref, alpha_ref = reference
        if K is not None:
            K_dist = float(np.linalg.norm(K - K_ref, 2))
        if alpha is not None:
            alpha_dist = abs(alpha - alpha_ref)

    return SweepRow(
        epsilon=eps,
        alpha=alpha,
        K=K,
        gamma_min=gamma,
        assumption1=cert.assumption1_holds,
        gamma_condition=gamma_condition,
        spectral_radius=rho,
        sim_stable=sim_ok,
        K_dist=K_dist,
        alpha_dist=alpha_dist,
        solver_status=result.solver_status,
    )


def alpha_convergence_diagnostic(rows: list[SweepRow]) -> tuple[str, float]:
    """Fit log(alpha_dist) against log(epsilon) across the sweep.

    Returns ("superlinear", slope) when the fitted slope exceeds 1 — distances
    shrinking faster than the scale itself.  Needs at least three rows with a
    positive alpha_dist (exact-zero rows carry no decay information).
    """
    pts = [
        (row.epsilon, row.alpha_dist)
        for row in rows
        if row.alpha_dist is not None and row.alpha_dist > 0
    ]
    if len(pts) < 3:
        raise InputError("need at least 3 rows with positive alpha_dist")
    eps = np.log([p[0] for p in pts])
    dist = np.log([p[1] for p in pts])
    slope = float(np.polyfit(eps, dist, 1)[0])
    return ("superlinear" if slope > 1.0 else "not-superlinear"), slope


# ---------------------------------------------------------------------------
# Sweep CSV
# ---------------------------------------------------------------------------


def _fmt(value: float | None) -> str:
    return "" if value is None else repr(float(value))


def _yes_no(value: bool | None) -> str:
    if value is None:
        return ""
    return "YES" if value else "NO"


def write_sweep_csv(rows: list[SweepRow], fp: io.TextIOBase, timestamp: bool = True) -> None:
    """Write the sweep table; identical inputs yield byte-identical output
    except for the optional timestamp comment line."""
    if timestamp:
        stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
        fp.write(f"# generated {stamp}\n")
    writer = csv.writer(fp, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    for row in rows:
        writer.writerow(
            [
                _fmt(row.epsilon),
                _fmt(row.K_dist),
                _fmt(row.alpha_dist),
                _yes_no(row.sim_stable),
                _yes_no(row.gamma_condition),
                _fmt(row.alpha),
                _fmt(row.gamma_min),
                _fmt(row.spectral_radius),
            ]
        )
