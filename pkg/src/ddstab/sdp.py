"""The design program: maximize alpha over two linear matrix inequalities,
then read the feedback gain out of the decision matrix.

Variables are a T x n matrix Q and a scalar alpha > 0.  Writing XQ = X0 @ Q
(constrained symmetric), the constraints are

    [[ XQ - alpha * X1 X1',  X1 Q ],          [[ I_T,  Q  ],
     [ (X1 Q)',              XQ   ]] >= 0,     [ Q',   XQ ]] >= 0

and the gain is K = U0 Q (X0 Q)^-1.  Data are normalized to unit spectral
norm before the solve — an exact reformulation (Q rescales with the data,
alpha and K are untouched) that keeps the conic solver well conditioned even
for very small scaled experiments.

Solvers plug in through a small adapter protocol; the default adapter drives
an interior-point conic solver through cvxpy.  Every returned solution is
re-certified by direct eigenvalue tests of both blocks before it is reported
as optimal.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .certify import check_assumption1
from .datamat import DataMatrices, _freeze
from .errors import DataRankWarning, ExtractionError, InputError

#: Default convergence tolerance handed to the conic solver.
DEFAULT_SOLVER_TOL = 1e-8
#: Eigenvalue slack accepted when re-certifying a returned solution.
FEASIBILITY_SLACK = 1e-7
POLISH_FEAS_TOL = 1e-11
REPAIR_MARGIN = 1e-9
SCHUR_KAPPA_RTOL = 1e-7
#: Lower bound on alpha so "alpha > 0" is machine-checkable.
ALPHA_FLOOR = 1e-12
#: Relative conditioning guard for inverting X0 @ Q.
EXTRACTION_RTOL = 1e-9


def _sym(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


@dataclass(frozen=True)
class DesignProblem:
    """The two LMI blocks as functions of (Q, alpha), bound to one dataset."""

    dm: DataMatrices

    @property
    def n(self) -> int:
        return self.dm.n

    @property
    def m(self) -> int:
        return self.dm.m

    @property
    def T(self) -> int:
        return self.dm.T

    @property
    def block_sizes(self) -> tuple[tuple[int, int], tuple[int, int]]:
        two_n = 2 * self.n
        tn = self.T + self.n
        return (two_n, two_n), (tn, tn)

    def decay_block(self, Q: np.ndarray, alpha: float) -> np.ndarray:
        """The 2n x 2n block coupling the data and alpha (symmetrized)."""
        X0, X1 = self.dm.X0, self.dm.X1
        XQ = X0 @ Q
        X1Q = X1 @ Q
        return _sym(
            np.block([[XQ - alpha * (X1 @ X1.T), X1Q], [X1Q.T, XQ]])
        )

    def norm_block(self, Q: np.ndarray) -> np.ndarray:
        """The (T+n) x (T+n) block bounding Q against X0 @ Q (symmetrized)."""
        XQ = self.dm.X0 @ Q
        return _sym(np.block([[np.eye(self.T), Q], [Q.T, XQ]]))

    def feasibility_slack(self, Q: np.ndarray, alpha: float) -> float:
        """Smallest eigenvalue over both blocks — >= 0 means feasible."""
        e1 = float(np.linalg.eigvalsh(self.decay_block(Q, alpha)).min())
        e2 = float(np.linalg.eigvalsh(self.norm_block(Q)).min())
        return min(e1, e2)


@dataclass(frozen=True)
class DesignResult:
    """Solution of the design program.

    solver_status is "optimal" only for solutions that passed the direct
    eigenvalue re-certification; alpha, Q, K are None otherwise (except that
    an infeasible report carries no solution by definition).
    """

    Q: np.ndarray | None
    alpha: float | None
    K: np.ndarray | None
    XQ_min_eig: float | None
    solver_status: str  # optimal | infeasible | numerical_failure
    solve_time: float

    def to_dict(self) -> dict:
        return {
            "K": None if self.K is None else [[float(v) for v in row] for row in self.K],
            "alpha": self.alpha,
            "status": self.solver_status,
            "xq_min_eig": self.XQ_min_eig,
            "solve_time_s": self.solve_time,
        }


@dataclass(frozen=True)
class AdapterSolution:
    """Raw solver outcome before re-certification."""

    status: str  # optimal | optimal_inaccurate | infeasible | unbounded | solver_error
    Q: np.ndarray | None
    alpha: float | None


class SolverAdapter(Protocol):
    """Anything that can maximize alpha over the two PSD blocks.

    Must support a linear objective, PSD constraints on affine symmetric
    matrix expressions, and equality constraints, and report a status plus
    the primal solution.
    """

    def solve(self, prob: DesignProblem, tol: float) -> AdapterSolution: ...


class CvxpyAdapter:
    """Default adapter: cvxpy with a high-accuracy interior-point solver.

    feas_tol tightens the solver's feasibility criterion independently of the
    optimality gap; None keeps it equal to the gap tolerance.
    """

    def __init__(self, solver: str = "CLARABEL", feas_tol: float | None = None):
        self.solver = solver
        self.feas_tol = feas_tol

    def solve(self, prob: DesignProblem, tol: float) -> AdapterSolution:
        import cvxpy as cp

        dm = prob.dm
        n, T = prob.n, prob.T
        Q = cp.Variable((T, n))
        alpha = cp.Variable()
        XQ = dm.X0 @ Q
        X1Q = dm.X1 @ Q
        decay = cp.bmat([[XQ - alpha * (dm.X1 @ dm.X1.T), X1Q], [X1Q.T, XQ]])
        norm = cp.bmat([[np.eye(T), Q], [Q.T, XQ]])
        constraints = [
            0.5 * (decay + decay.T) >> 0,
            0.5 * (norm + norm.T) >> 0,
            XQ == XQ.T,
            alpha >= ALPHA_FLOOR,
        ]
        problem = cp.Problem(cp.Maximize(alpha), constraints)
        kwargs = {}
        if self.solver == "CLARABEL":
            feas = self.feas_tol if self.feas_tol is not None else tol
            kwargs = {"tol_gap_abs": tol, "tol_gap_rel": tol, "tol_feas": feas}
        try:
            with warnings.catch_warnings():
                # Inaccurate-solution warnings are handled by the caller's re-check.
                warnings.simplefilter("ignore")
                problem.solve(solver=self.solver, **kwargs)
        except cp.error.SolverError:
            return AdapterSolution(status="solver_error", Q=None, alpha=None)

        status = problem.status or "solver_error"
        if Q.value is None or alpha.value is None:
            return AdapterSolution(status=status, Q=None, alpha=None)
        return AdapterSolution(status=status, Q=np.asarray(Q.value), alpha=float(alpha.value))


def build_design(dm: DataMatrices) -> DesignProblem:
    """Bind the design program to a dataset.

    Warns (does not block) when the rank certificate fails: the solve is
    still run, but its outcome is degenerate by construction.
    """
    if dm.X0.shape != dm.X1.shape:
        raise InputError("X0 and X1 must have equal shapes")
    if not check_assumption1(dm).assumption1_holds:
        warnings.warn(
            "data fail the row-rank certificate; the design is degenerate",
            DataRankWarning,
            stacklevel=2,
        )
    return DesignProblem(dm=dm)


def solve_design(
    prob: DesignProblem,
    adapter: SolverAdapter | None = None,
    tol: float = DEFAULT_SOLVER_TOL,
) -> DesignResult:
    """Solve the design program and re-certify the returned solution.

    The data are rescaled to unit spectral norm of [U0; X0] first; the
    transformation is exact (see module docstring), so alpha and K are those
    of the original problem and Q is mapped back to original coordinates.

    A solution is reported optimal only if the solver succeeded and both
    blocks pass a direct eigenvalue test with slack >= -1e-7; an inaccurate
    solver status is accepted on the same terms.  When the first solve lands
    slightly outside the cone (interior-point returns usually do, since the
    norm block is active at the optimum), one re-solve with a tighter
    feasibility tolerance is attempted and kept if it improves the slack
    without giving up objective value.  Raises ExtractionError when the
    optimum has a singular X0 @ Q (degenerate data).
    """
    if adapter is None:
        adapter = CvxpyAdapter()
    dm = prob.dm
    scale = float(np.linalg.norm(dm.stacked(), 2))
    s = 1.0 / scale if scale > 0 else 1.0
    scaled = DataMatrices(U0=s * dm.U0, X0=s * dm.X0, X1=s * dm.X1)
    scaled_prob = DesignProblem(dm=scaled)

    start = time.monotonic()
    sol = adapter.solve(scaled_prob, tol)
    elapsed = time.monotonic() - start

    def failure(status: str) -> DesignResult:
        return DesignResult(
            Q=None, alpha=None, K=None, XQ_min_eig=None,
            solver_status=status, solve_time=elapsed,
        )

    if sol.status in ("infeasible", "infeasible_inaccurate"):
        return failure("infeasible")
    if sol.status not in ("optimal", "optimal_inaccurate") or sol.Q is None:
        return failure("numerical_failure")

    slack = scaled_prob.feasibility_slack(sol.Q, sol.alpha)

    polishable = isinstance(adapter, CvxpyAdapter) and adapter.feas_tol is None
    if slack < 0 and polishable:
        tight = CvxpyAdapter(solver=adapter.solver, feas_tol=POLISH_FEAS_TOL)
        t2 = time.monotonic()
        sol2 = tight.solve(scaled_prob, tol)
        elapsed += time.monotonic() - t2
        if (
            sol2.status in ("optimal", "optimal_inaccurate")
            and sol2.Q is not None
            and sol2.alpha is not None
            and sol2.alpha > 0
        ):
            slack2 = scaled_prob.feasibility_slack(sol2.Q, sol2.alpha)
            # Only trade in the first answer if the re-solve is at least as
            # feasible and does not lose measurable objective (unless the
            # first answer was failing anyway).
            keeps_alpha = sol2.alpha >= sol.alpha - 10.0 * tol * max(1.0, abs(sol.alpha))
            if slack2 > slack and (keeps_alpha or slack < -FEASIBILITY_SLACK):
                sol, slack = sol2, slack2

    if slack < -FEASIBILITY_SLACK or not sol.alpha > 0:
        return failure("numerical_failure")

    # Interior-point answers sit on (or a hair outside) the norm-constraint
    # boundary.  Shrinking Q so that lambda_max(Q (X0 Q)^-1 Q^T) < 1 moves the
    # answer inside that cone without touching alpha or the gain, at a decay
    # margin cost of order lambda_excess * alpha; keep the shrunk point only
    # if it still certifies.
    try:
        lam = float(
            np.linalg.eigvalsh(_sym(sol.Q @ _solve_xq(scaled, sol.Q) @ sol.Q.T)).max()
        )
        if 1.0 - lam < REPAIR_MARGIN:
            Q_rep = sol.Q / (lam + REPAIR_MARGIN)
            slack_rep = scaled_prob.feasibility_slack(Q_rep, sol.alpha)
            if slack_rep >= -FEASIBILITY_SLACK:
                sol = AdapterSolution(status=sol.status, Q=Q_rep, alpha=sol.alpha)
                slack = slack_rep
    except ExtractionError:
        pass  # degenerate X0 @ Q; extraction below reports it properly

    K = extract_controller(scaled, sol.Q)  # gain is invariant under the rescaling
    Q = sol.Q / s
    XQ_min_eig = float(np.linalg.eigvalsh(_sym(dm.X0 @ Q)).min())
    return DesignResult(
        Q=_freeze(Q),
        alpha=sol.alpha,
        K=_freeze(K),
        XQ_min_eig=XQ_min_eig,
        solver_status="optimal",
        solve_time=elapsed,
    )


def _solve_xq(dm: DataMatrices, Q: np.ndarray) -> np.ndarray:
    """(X0 @ Q)^-1, guarded by a relative conditioning test."""
    Q = np.asarray(Q, dtype=float)
    if Q.shape != (dm.T, dm.n):
        raise InputError(f"Q must be {dm.T} x {dm.n}, got {Q.shape}")
    XQ = dm.X0 @ Q
    svals = np.linalg.svd(XQ, compute_uv=False)
    if svals[-1] <= EXTRACTION_RTOL * max(svals[0], np.finfo(float).eps):
        raise ExtractionError(
            f"X0 @ Q is numerically singular (singular values {svals[0]:.3e} .. "
            f"{svals[-1]:.3e}); the optimum is degenerate"
        )
    return np.linalg.inv(XQ)


def extract_controller(dm: DataMatrices, Q: np.ndarray) -> np.ndarray:
    """The feedback gain K = U0 Q (X0 Q)^-1."""
    inv = _solve_xq(dm, Q)
    return dm.U0 @ np.asarray(Q, dtype=float) @ inv


def closed_loop_matrix(dm: DataMatrices, Q: np.ndarray) -> np.ndarray:
    """X1 Q (X0 Q)^-1 — for residual-free linear data this equals A + B K."""
    inv = _solve_xq(dm, Q)
    return dm.X1 @ np.asarray(Q, dtype=float) @ inv


def schur_contraction_check(dm: DataMatrices, Q: np.ndarray, slack: float = 1e-8) -> dict:
    """Compare the norm block against its Schur-complement form.

    With XQ = X0 @ Q positive definite, [[I, Q], [Q', XQ]] >= 0 holds exactly
    when I - Q XQ^-1 Q' >= 0.  Evaluated in the solver's normalized
    coordinates (data scaled to unit spectral norm), where the absolute slack
    is meaningful; returns both smallest eigenvalues and whether the two
    verdicts agree at the given slack.

    The Schur form inverts XQ, so the comparison only carries the slack's
    digits while cond(XQ) stays below ~1/SCHUR_KAPPA_RTOL; "applicable" is
    False past that point (XQ positive definite in name only) and "agree"
    should then be ignored.
    """
    scale = float(np.linalg.norm(dm.stacked(), 2))
    s = 1.0 / scale if scale > 0 else 1.0
    Qs = np.asarray(Q, dtype=float) * s
    X0s = s * dm.X0
    XQ = _sym(X0s @ Qs)
    xq_eigs = np.linalg.eigvalsh(XQ)
    xq_min = float(xq_eigs.min())
    if xq_min <= 0:
        raise InputError("Schur comparison needs X0 @ Q positive definite")
    block = _sym(np.block([[np.eye(dm.T), Qs], [Qs.T, XQ]]))
    block_min = float(np.linalg.eigvalsh(block).min())
    schur = np.eye(dm.T) - Qs @ np.linalg.solve(XQ, Qs.T)
    schur_min = float(np.linalg.eigvalsh(_sym(schur)).min())
    return {
        "block_min_eig": block_min,
        "schur_min_eig": schur_min,
        "xq_min_eig": xq_min,
        "applicable": bool(xq_min >= SCHUR_KAPPA_RTOL * float(xq_eigs.max())),
        "agree": (block_min >= -slack) == (schur_min >= -slack),
    }
