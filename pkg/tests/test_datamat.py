import io

import numpy as np
import pytest

import ddstab as dd
from ddstab.datamat import DEFAULT_RANK_RTOL

from .oracles import hankel_naive, rank_dropping_perturbation, svd_truncation_perturbation

THETA_STATES = [0.1, 0.11, 0.1221, 0.13700841]
THETA_INPUTS = [0.1, 0.11, 0.1221]


def _theta_trajectory():
    return dd.Trajectory(
        states=np.array([THETA_STATES]), inputs=np.array([THETA_INPUTS])
    )


def test_data_matrices_theta_chain():
    dm = dd.build_data_matrices(_theta_trajectory())
    assert np.array_equal(dm.U0, [[0.1, 0.11, 0.1221]])
    assert np.array_equal(dm.X0, [[0.1, 0.11, 0.1221]])
    assert np.array_equal(dm.X1, [[0.11, 0.1221, 0.13700841]])
    # the crafted input makes the input and state rows coincide bit for bit
    assert np.array_equal(dm.U0, dm.X0)


def test_data_matrices_zero_trajectory():
    traj = dd.Trajectory(states=np.zeros((1, 4)), inputs=np.zeros((1, 3)))
    dm = dd.build_data_matrices(traj)
    for M in (dm.U0, dm.X0, dm.X1):
        assert M.shape == (1, 3)
        assert not M.any()


def test_data_matrices_shapes_and_shift(rng):
    for _ in range(20):
        n = int(rng.integers(1, 5))
        m = int(rng.integers(1, 3))
        T = int(rng.integers(1, 8))
        states = rng.standard_normal((n, T + 1))
        inputs = rng.standard_normal((m, T))
        dm = dd.build_data_matrices(dd.Trajectory(states=states, inputs=inputs))
        assert dm.U0.shape == (m, T)
        assert dm.X0.shape == (n, T)
        assert dm.X1.shape == (n, T)
        for j in range(T):
            assert np.array_equal(dm.X0[:, j], states[:, j])
            assert np.array_equal(dm.X1[:, j], states[:, j + 1])


def test_trajectory_rejects_mismatched_lengths():
    with pytest.raises(dd.InputError):
        dd.Trajectory(states=np.zeros((1, 3)), inputs=np.zeros((1, 3)))


def test_trajectory_arrays_are_frozen():
    traj = _theta_trajectory()
    with pytest.raises(ValueError):
        traj.states[0, 0] = 99.0
    dm = dd.build_data_matrices(traj)
    with pytest.raises(ValueError):
        dm.X0[0, 0] = 99.0


def test_hankel_scalar_examples():
    assert np.array_equal(dd.hankel_matrix([1, 0, 0], 1), [[1, 0, 0]])
    assert np.array_equal(dd.hankel_matrix([1, 0, 0], 2), [[1, 0], [0, 0]])
    assert np.array_equal(
        dd.hankel_matrix([1, -1, 2, 0, 1], 2), [[1, -1, 2, 0], [-1, 2, 0, 1]]
    )


def test_hankel_shape_and_oracle(rng):
    for _ in range(25):
        d = int(rng.integers(1, 4))
        length = int(rng.integers(2, 10))
        depth = int(rng.integers(1, length + 1))
        sig = rng.standard_normal((d, length))
        H = dd.hankel_matrix(sig, depth)
        assert H.shape == (d * depth, length - depth + 1)
        assert np.array_equal(H, hankel_naive(sig, depth))


def test_hankel_rejects_bad_depth():
    with pytest.raises(dd.InvalidOrderError):
        dd.hankel_matrix([1.0, 2.0], 0)
    with pytest.raises(dd.InvalidOrderError):
        dd.hankel_matrix([1.0, 2.0], 3)


def test_numerical_rank_examples():
    assert dd.numerical_rank(np.eye(3)).numerical_rank == 3
    assert dd.numerical_rank(np.ones((2, 3))).numerical_rank == 1
    dm = dd.build_data_matrices(_theta_trajectory())
    assert dd.numerical_rank(dm.stacked()).numerical_rank == 1


def test_numerical_rank_report_fields():
    rep = dd.numerical_rank(np.diag([3.0, 1.0]))
    assert rep.matrix_rows == 2 and rep.matrix_cols == 2
    assert rep.is_full_row_rank
    assert rep.rank_tolerance == pytest.approx(DEFAULT_RANK_RTOL * 3.0)
    assert rep.min_nonzero_sv == pytest.approx(1.0)
    d = rep.to_dict()
    assert d["numerical_rank"] == 2
    assert len(d["singular_values"]) == 2


def test_rank_monotonicity(rng):
    for _ in range(30):
        rows = int(rng.integers(1, 5))
        cols = int(rng.integers(1, 6))
        M = rng.standard_normal((rows, cols))
        r = dd.numerical_rank(M).numerical_rank
        assert r <= min(rows, cols)
        extra = rng.standard_normal((rows, 1))
        r2 = dd.numerical_rank(np.hstack([M, extra])).numerical_rank
        assert r2 >= r


def test_min_singular_value_examples(rng):
    assert dd.min_singular_value(np.diag([3.0, 1.0])) == pytest.approx(1.0)
    M = rng.standard_normal((2, 4))
    lam = np.linalg.eigvalsh(M @ M.T).min()
    for eps in (1.0, 0.5, 0.1):
        assert dd.min_singular_value(eps * M) == pytest.approx(
            eps * np.sqrt(lam), rel=1e-12
        )


def test_min_singular_value_brute_force(rng):
    # exhaustive check over a dense set of unit directions, 2x4 case
    M = rng.standard_normal((2, 4))
    best = np.inf
    for _ in range(2000):
        w = rng.standard_normal(2)
        best = min(best, np.linalg.norm(rank_dropping_perturbation(M, w), 2))
    sv = dd.min_singular_value(M)
    assert sv <= best + 1e-8
    assert np.linalg.norm(svd_truncation_perturbation(M), 2) == pytest.approx(sv)


def test_min_singular_value_is_rank_drop_distance(rng):
    # no rank-dropping perturbation can be smaller than the reported margin
    for _ in range(15):
        rows = int(rng.integers(1, 5))
        cols = int(rng.integers(rows, 5))
        M = rng.standard_normal((rows, cols))
        sv = dd.min_singular_value(M)
        for _ in range(20):
            delta = rank_dropping_perturbation(M, rng.standard_normal(rows))
            assert sv <= np.linalg.norm(delta, 2) + 1e-8
        trunc = svd_truncation_perturbation(M)
        assert np.linalg.norm(trunc, 2) == pytest.approx(sv, abs=1e-8)
        # truncation annihilates a singular direction at the original scale
        smallest = np.linalg.svd(M + trunc, compute_uv=False).min()
        assert smallest <= 1e-9 * np.linalg.norm(M, 2)


def test_pe_examples(rng):
    ok, rep = dd.is_persistently_exciting([1.0, 0.0, 0.0], 2)
    assert not ok and rep.numerical_rank == 1
    ok, _ = dd.is_persistently_exciting(THETA_INPUTS, 2)
    assert ok
    ok, rep = dd.is_persistently_exciting(rng.uniform(-1, 1, 20), 3)
    assert ok and rep.numerical_rank == 3


def test_csv_round_trip(rng):
    for _ in range(10):
        n = int(rng.integers(1, 4))
        m = int(rng.integers(1, 3))
        T = int(rng.integers(1, 6))
        traj = dd.Trajectory(
            states=rng.standard_normal((n, T + 1)),
            inputs=rng.standard_normal((m, T)),
        )
        buf = io.StringIO()
        dd.trajectory_to_csv(traj, buf)
        back = dd.trajectory_from_csv(io.StringIO(buf.getvalue()))
        assert np.array_equal(back.states, traj.states)
        assert np.array_equal(back.inputs, traj.inputs)


def test_csv_final_row_has_empty_inputs():
    traj = _theta_trajectory()
    buf = io.StringIO()
    dd.trajectory_to_csv(traj, buf)
    lines = buf.getvalue().strip().splitlines()
    assert lines[0] == "k,u_1,x_1"
    assert len(lines) == 5
    last = lines[-1].split(",")
    assert last[0] == "3" and last[1] == ""


def test_csv_rejects_bad_data():
    good = "k,u_1,x_1\n0,0.1,0.1\n1,,0.11\n"
    dd.trajectory_from_csv(io.StringIO(good))
    bad = [
        "k,u_1,x_1\n0,NaN,0.1\n1,,0.11\n",          # non-finite
        "k,u_1,x_1\n0,0.1,0.1\n2,,0.11\n",          # time index gap
        "k,u_1,x_1\n0,0.1\n1,,0.11\n",              # missing field
        "k,u_1,x_1\n0,0.1,0.1\n1,0.2,0.11\n",       # input present in final row
        "k,u_1,x_1\n",                               # no rows
    ]
    for text in bad:
        with pytest.raises(dd.InputError):
            dd.trajectory_from_csv(io.StringIO(text))
