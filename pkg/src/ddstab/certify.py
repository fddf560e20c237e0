"""Data certificates: rank checks, the residual-dominance bound, and the
propagated-residual decomposition.

Two certificates decide whether a dataset supports controller design:

* the rank certificate — [U0; X0] and X1 must have full row rank;
* the residual-dominance bound gamma_min — the smallest gamma with
  D0 D0' <= gamma * X1 X1', which must stay below alpha^2 / (4 + 2*alpha)
  for the design's alpha.

The Xi/Psi matrices collect how the one-step residuals propagate through the
recorded data; they are exactly the gap between the nonlinear experiment and
the experiment the linearized model would have produced.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .datamat import (
    DEFAULT_RANK_RTOL,
    DataMatrices,
    RankReport,
    min_singular_value,
    numerical_rank,
    _freeze,
)
from .errors import GammaUndefinedError, InputError, OracleRequiredError
from .plant import LinearizationPair


@dataclass(frozen=True)
class CertReport:
    """Outcome of the data certificates for one dataset.

    gamma_min and gamma_condition_holds are None whenever the residuals D0
    are unavailable (data-only mode): the bound is then unknown, not zero.
    """

    assumption1_holds: bool
    rank_UX: RankReport
    rank_X1: RankReport
    margin_UX: float
    margin_X1: float
    gamma_min: float | None = None
    gamma_condition_holds: bool | None = None

    def to_dict(self) -> dict:
        return {
            "assumption1_holds": self.assumption1_holds,
            "rank_UX": self.rank_UX.to_dict(),
            "rank_X1": self.rank_X1.to_dict(),
            "margin_UX": self.margin_UX,
            "margin_X1": self.margin_X1,
            "gamma_min": self.gamma_min,
            "gamma_condition_holds": self.gamma_condition_holds,
        }


@dataclass(frozen=True)
class XiPsi:
    """Propagated residuals: Xi enters the state block, Psi the shifted block.

    Xi column 0 is zero and Xi column k+1 = A @ Xi column k + D0 column k;
    Psi column k is Xi column k+1 of the one-step-extended recursion.  With
    the linearized data U0_lin/X0_lin/X1_lin from the same experiment,
    [U0; X0] = [U0_lin; X0_lin] + [0; Xi] and X1 = X1_lin + Psi hold exactly.
    """

    Xi: np.ndarray
    Psi: np.ndarray

    def __post_init__(self):
        Xi = np.asarray(self.Xi, dtype=float)
        Psi = np.asarray(self.Psi, dtype=float)
        if Xi.shape != Psi.shape or Xi.ndim != 2:
            raise InputError("Xi and Psi must be equal-shape 2-D matrices")
        object.__setattr__(self, "Xi", _freeze(Xi))
        object.__setattr__(self, "Psi", _freeze(Psi))


def check_assumption1(dm: DataMatrices, rel_tol: float = DEFAULT_RANK_RTOL) -> CertReport:
    """Rank certificate: [U0; X0] and X1 both full row rank.

    The margins are the smallest singular values — the spectral-norm distance
    of each matrix to the nearest rank-deficient one.
    """
    stacked = dm.stacked()
    rank_UX = numerical_rank(stacked, rel_tol)
    rank_X1 = numerical_rank(dm.X1, rel_tol)
    return CertReport(
        assumption1_holds=rank_UX.is_full_row_rank and rank_X1.is_full_row_rank,
        rank_UX=rank_UX,
        rank_X1=rank_X1,
        margin_UX=min_singular_value(stacked),
        margin_X1=min_singular_value(dm.X1),
    )


def gamma_min(dm: DataMatrices) -> float:
    """Smallest gamma >= 0 with D0 D0' <= gamma * X1 X1'.

    Computed as the largest generalized eigenvalue of the symmetric pair
    (D0 D0', X1 X1').  Requires the residuals D0 (oracle mode) and a full
    row rank X1 — without the latter no finite gamma exists.
    """
    if dm.D0 is None:
        raise OracleRequiredError("gamma_min needs the residual matrix D0")
    if not numerical_rank(dm.X1).is_full_row_rank:
        raise GammaUndefinedError(
            "X1 is row-rank deficient: no finite residual-dominance bound exists"
        )
    S = dm.D0 @ dm.D0.T
    W = dm.X1 @ dm.X1.T
    try:
        eigs = scipy.linalg.eigh(S, W, eigvals_only=True)
    except scipy.linalg.LinAlgError:
        ridge = 1e-12 * float(np.trace(W))
        warnings.warn(
            f"X1 X1' numerically near-singular; retrying with ridge {ridge:.3e}",
            RuntimeWarning,
            stacklevel=2,
        )
        eigs = scipy.linalg.eigh(S, W + ridge * np.eye(W.shape[0]), eigvals_only=True)
    return max(float(eigs[-1]), 0.0)


def gamma_threshold(alpha: float) -> float:
    """The certification threshold alpha^2 / (4 + 2*alpha)."""
    if not alpha > 0:
        raise InputError(f"alpha must be positive, got {alpha}")
    return alpha * alpha / (4.0 + 2.0 * alpha)


def check_gamma_condition(gamma: float, alpha: float) -> bool:
    """Whether the residual-dominance bound certifies the design's alpha."""
    if gamma < 0:
        raise InputError(f"gamma must be non-negative, got {gamma}")
    return gamma < gamma_threshold(alpha)


def build_xi_psi(dm: DataMatrices, lin: LinearizationPair) -> XiPsi:
    """Accumulate the residuals D0 through the linear dynamics into Xi and Psi."""
    if dm.D0 is None:
        raise OracleRequiredError("building Xi/Psi needs the residual matrix D0")
    A = lin.A
    if A.shape != (dm.n, dm.n):
        raise InputError("linearization does not match the data dimensions")
    n, T = dm.n, dm.T
    ext = np.zeros((n, T + 1))
    for k in range(T):
        ext[:, k + 1] = A @ ext[:, k] + dm.D0[:, k]
    return XiPsi(Xi=ext[:, :T], Psi=ext[:, 1:])


def xi_margin_check(
    xi: XiPsi, lin_data_min_sv: float, epsilon: float
) -> tuple[bool, dict]:
    """Check the perturbation margin of the state-block residual Xi.

    The scaled experiment keeps its rank certificate as long as the spectral
    norm of Xi stays below epsilon times the smallest singular value of the
    unscaled linearized stacked data.  Returns the verdict plus diagnostics
    (both norms, the threshold, and the ratio |Xi|/epsilon whose decay is the
    whole point of scaling down).
    """
    if not epsilon > 0:
        raise InputError(f"epsilon must be positive, got {epsilon}")
    if lin_data_min_sv < 0:
        raise InputError("lin_data_min_sv must be non-negative")
    spectral = float(np.linalg.norm(xi.Xi, 2))
    frobenius = float(np.linalg.norm(xi.Xi, "fro"))
    threshold = epsilon * lin_data_min_sv
    return spectral < threshold, {
        "spectral_norm": spectral,
        "frobenius_norm": frobenius,
        "threshold": threshold,
        "ratio_to_epsilon": spectral / epsilon,
    }
