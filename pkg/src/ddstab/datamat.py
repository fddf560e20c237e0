"""Data matrices, block-Hankel construction, and numerical rank analysis.

Everything downstream (rank certificates, the design SDP, the scaling
procedure) is stated on the column-per-time-step matrices built here:
U0 collects the applied inputs, X0 the visited states, X1 the same states
shifted one step forward.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, InvalidOrderError

#: Default relative SVD threshold for rank decisions.  Relative to the largest
#: singular value so that uniformly rescaled data keep their rank verdicts.
DEFAULT_RANK_RTOL = 1e-9


def _as_float_array(a, name: str) -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if arr.size == 0:
        raise InputError(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite entries")
    return arr


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Trajectory:
    """One recorded experiment: states x(0..T) and inputs u(0..T-1).

    states has shape (n, T+1) and inputs (m, T), one column per time step.
    """

    states: np.ndarray
    inputs: np.ndarray

    def __post_init__(self):
        states = _as_float_array(self.states, "states")
        inputs = _as_float_array(self.inputs, "inputs")
        if states.ndim != 2 or inputs.ndim != 2:
            raise InputError("states and inputs must be 2-D (one column per step)")
        if states.shape[1] != inputs.shape[1] + 1:
            raise InputError(
                f"states must have one more column than inputs, got "
                f"{states.shape[1]} vs {inputs.shape[1]}"
            )
        if inputs.shape[1] < 1:
            raise InputError("need at least one input column")
        object.__setattr__(self, "states", _freeze(states))
        object.__setattr__(self, "inputs", _freeze(inputs))

    @property
    def n(self) -> int:
        return self.states.shape[0]

    @property
    def m(self) -> int:
        return self.inputs.shape[0]

    @property
    def T(self) -> int:
        return self.inputs.shape[1]


@dataclass(frozen=True)
class DataMatrices:
    """The U0 / X0 / X1 blocks of an experiment, plus optional oracle blocks.

    D0 holds the one-step residuals x(k+1) - A x(k) - B u(k) when a model
    oracle produced them; it is None in data-only mode (never silently zero).
    The *_lin blocks are the matrices the linearized model would have produced
    from the same experiment, again only available from an oracle.
    """

    U0: np.ndarray
    X0: np.ndarray
    X1: np.ndarray
    D0: np.ndarray | None = None
    U0_lin: np.ndarray | None = None
    X0_lin: np.ndarray | None = None
    X1_lin: np.ndarray | None = None

    def __post_init__(self):
        U0 = _as_float_array(self.U0, "U0")
        X0 = _as_float_array(self.X0, "X0")
        X1 = _as_float_array(self.X1, "X1")
        if U0.ndim != 2 or X0.ndim != 2 or X1.ndim != 2:
            raise InputError("data matrices must be 2-D")
        if not (U0.shape[1] == X0.shape[1] == X1.shape[1]):
            raise InputError("U0, X0, X1 must share the column count T")
        if X0.shape[0] != X1.shape[0]:
            raise InputError("X0 and X1 must share the row count n")
        object.__setattr__(self, "U0", _freeze(U0))
        object.__setattr__(self, "X0", _freeze(X0))
        object.__setattr__(self, "X1", _freeze(X1))
        for name in ("D0", "U0_lin", "X0_lin", "X1_lin"):
            val = getattr(self, name)
            if val is not None:
                arr = _as_float_array(val, name)
                if name == "U0_lin":
                    want = U0.shape
                else:
                    want = X0.shape
                if arr.shape != want:
                    raise InputError(f"{name} has shape {arr.shape}, expected {want}")
                object.__setattr__(self, name, _freeze(arr))

    @property
    def n(self) -> int:
        return self.X0.shape[0]

    @property
    def m(self) -> int:
        return self.U0.shape[0]

    @property
    def T(self) -> int:
        return self.U0.shape[1]

    def stacked(self) -> np.ndarray:
        """The (m+n) x T matrix [U0; X0] whose row rank certifies the data."""
        return np.vstack([self.U0, self.X0])


@dataclass(frozen=True)
class RankReport:
    """Numerical rank of a matrix together with the full singular spectrum."""

    matrix_rows: int
    matrix_cols: int
    singular_values: np.ndarray = field(repr=False)
    numerical_rank: int
    rank_tolerance: float
    min_nonzero_sv: float

    @property
    def is_full_row_rank(self) -> bool:
        return self.numerical_rank == self.matrix_rows

    def to_dict(self) -> dict:
        return {
            "rows": self.matrix_rows,
            "cols": self.matrix_cols,
            "numerical_rank": self.numerical_rank,
            "rank_tolerance": self.rank_tolerance,
            "min_nonzero_sv": self.min_nonzero_sv,
            "full_row_rank": self.is_full_row_rank,
            "singular_values": [float(s) for s in self.singular_values],
        }


def build_data_matrices(traj: Trajectory) -> DataMatrices:
    """Arrange a trajectory into the U0 / X0 / X1 blocks (D0 left absent)."""
    return DataMatrices(
        U0=traj.inputs,
        X0=traj.states[:, :-1],
        X1=traj.states[:, 1:],
    )


def hankel_matrix(signal, order: int) -> np.ndarray:
    """Block-Hankel matrix of a vector signal.

    `signal` is either a length-T sequence of scalars or an (m, T) array with
    one column per time step.  The result has `order` block rows and
    T - order + 1 columns; block (i, j) is signal sample i + j, with the m
    entries of each sample stacked contiguously.
    """
    sig = _as_float_array(signal, "signal")
    if sig.ndim == 1:
        sig = sig[None, :]
    if sig.ndim != 2:
        raise InputError("signal must be 1-D or 2-D")
    if order < 1:
        raise InvalidOrderError(f"order must be >= 1, got {order}")
    m, T = sig.shape
    if T < order:
        raise InvalidOrderError(f"signal length {T} is shorter than order {order}")
    cols = T - order + 1
    H = np.empty((m * order, cols))
    for i in range(order):
        H[i * m:(i + 1) * m, :] = sig[:, i:i + cols]
    return H


def numerical_rank(M, rel_tol: float = DEFAULT_RANK_RTOL) -> RankReport:
    """Rank of M under a relative SVD threshold.

    A singular value counts toward the rank when it exceeds
    rel_tol * max(largest singular value, machine epsilon); the machine-eps
    floor keeps the all-zero matrix at rank 0 instead of dividing by zero.
    """
    M = _as_float_array(M, "matrix")
    if M.ndim != 2:
        raise InputError("matrix must be 2-D")
    if rel_tol <= 0:
        raise InputError("rel_tol must be positive")
    s = np.linalg.svd(M, compute_uv=False)
    tol = rel_tol * max(float(s[0]), float(np.finfo(float).eps))
    rank = int(np.sum(s > tol))
    return RankReport(
        matrix_rows=M.shape[0],
        matrix_cols=M.shape[1],
        singular_values=_freeze(s),
        numerical_rank=rank,
        rank_tolerance=tol,
        min_nonzero_sv=float(s[rank - 1]) if rank > 0 else 0.0,
    )


def min_singular_value(M) -> float:
    """Smallest singular value of M.

    For a full-row-rank matrix this is the spectral-norm distance to the
    nearest matrix that loses row rank.
    """
    M = _as_float_array(M, "matrix")
    if M.ndim != 2:
        raise InputError("matrix must be 2-D")
    s = np.linalg.svd(M, compute_uv=False)
    return float(s[-1])


def is_persistently_exciting(
    inputs, order: int, rel_tol: float = DEFAULT_RANK_RTOL
) -> tuple[bool, RankReport]:
    """Whether the block-Hankel matrix of `inputs` at `order` has full row rank."""
    H = hankel_matrix(inputs, order)
    report = numerical_rank(H, rel_tol)
    return report.is_full_row_rank, report


# ---------------------------------------------------------------------------
# Trajectory CSV format (shared with the CLI)
#
# header: k,u_1,..,u_m,x_1,..,x_n ; rows k = 0..T ; the u fields are empty in
# the final row because no input is applied at time T.
# ---------------------------------------------------------------------------


def trajectory_to_csv(traj: Trajectory, fp: io.TextIOBase) -> None:
    """Write a trajectory in the shared CSV format."""
    writer = csv.writer(fp, lineterminator="\n")
    header = (
        ["k"]
        + [f"u_{i+1}" for i in range(traj.m)]
        + [f"x_{i+1}" for i in range(traj.n)]
    )
    writer.writerow(header)
    for k in range(traj.T + 1):
        if k < traj.T:
            u_fields = [repr(float(v)) for v in traj.inputs[:, k]]
        else:
            u_fields = [""] * traj.m
        x_fields = [repr(float(v)) for v in traj.states[:, k]]
        writer.writerow([k] + u_fields + x_fields)


def trajectory_from_csv(fp: io.TextIOBase) -> Trajectory:
    """Parse the shared CSV format back into a Trajectory.

    Rejects non-finite values, missing fields, and out-of-order time indices
    outright: silently dropping rows would corrupt every rank verdict
    downstream.
    """
    reader = csv.reader(fp)
    try:
        header = next(reader)
    except StopIteration:
        raise InputError("empty trajectory file") from None
    header = [h.strip() for h in header]
    if not header or header[0] != "k":
        raise InputError("trajectory header must start with 'k'")
    u_cols = [h for h in header[1:] if h.startswith("u_")]
    x_cols = [h for h in header[1:] if h.startswith("x_")]
    if not x_cols or len(u_cols) + len(x_cols) != len(header) - 1:
        raise InputError(f"unrecognized trajectory header: {header}")
    if u_cols != [f"u_{i+1}" for i in range(len(u_cols))] or x_cols != [
        f"x_{i+1}" for i in range(len(x_cols))
    ]:
        raise InputError("u_/x_ columns must be u_1..u_m,x_1..x_n in order")
    m, n = len(u_cols), len(x_cols)

    rows = []
    for line_no, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 1 + m + n:
            raise InputError(f"line {line_no}: expected {1 + m + n} fields, got {len(row)}")
        rows.append((line_no, row))
    if len(rows) < 2:
        raise InputError("trajectory needs at least two rows (T >= 1)")

    T = len(rows) - 1
    states = np.empty((n, T + 1))
    inputs = np.empty((m, T))

    def parse(field: str, line_no: int) -> float:
        try:
            val = float(field)
        except ValueError:
            raise InputError(f"line {line_no}: bad numeric field {field!r}") from None
        if not np.isfinite(val):
            raise InputError(f"line {line_no}: non-finite value {field!r}")
        return val

    for idx, (line_no, row) in enumerate(rows):
        if parse(row[0], line_no) != idx:
            raise InputError(f"line {line_no}: expected k={idx}, got {row[0]!r}")
        u_fields, x_fields = row[1:1 + m], row[1 + m:]
        if idx < T:
            for i, f in enumerate(u_fields):
                inputs[i, idx] = parse(f, line_no)
        else:
            if any(f.strip() for f in u_fields):
                raise InputError(f"line {line_no}: final row must leave u fields empty")
        for i, f in enumerate(x_fields):
            states[i, idx] = parse(f, line_no)

    return Trajectory(states=states, inputs=inputs)
