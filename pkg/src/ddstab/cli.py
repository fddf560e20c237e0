"""Command-line surface: excitation checks, one-shot designs, certification,
scale sweeps, and the two built-in demonstrations.

Exit codes: 0 success; 1 I/O or validation error; 2 signal not persistently
exciting (pe-check); 3 design not certified/infeasible (design, certify);
4 sweep's smallest scale not certified (sweep).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile

import numpy as np

from .certify import CertReport, check_assumption1, gamma_min
from .datamat import (
    DEFAULT_RANK_RTOL,
    build_data_matrices,
    is_persistently_exciting,
    trajectory_from_csv,
)
from .errors import DDStabError, GammaUndefinedError, InputError
from .experiment import (
    DEFAULT_AMPLITUDE,
    DEFAULT_HORIZON,
    ExperimentSpec,
    adversarial_theta_input,
    generate_pe_input,
    load_experiment,
    run_experiment,
)
from .plant import (
    linear,
    linearize,
    load_plant,
    remainder_sequence,
    scalar_quadratic,
)
from .sdp import DEFAULT_SOLVER_TOL, build_design, solve_design
from .verify import (
    alpha_convergence_diagnostic,
    epsilon_sweep,
    simulate_closed_loop_stability,
    spectral_radius_closed_loop,
    write_sweep_csv,
)

ENV_SOLVER_TOL = "DDSTAB_SOLVER_TOL"
DEFAULT_EPS_GRID = (1.0, 0.5, 0.1, 0.01)


def _atomic_write(path: str, text: str) -> None:
    """Write a file all-or-nothing: temp file in the target dir, then rename."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".ddstab-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fp:
            fp.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _emit(text: str, out_path: str | None) -> None:
    if out_path:
        _atomic_write(out_path, text)
    else:
        sys.stdout.write(text)


def _solver_tol(args) -> float:
    if getattr(args, "tol", None) is not None:
        return args.tol
    env = os.environ.get(ENV_SOLVER_TOL)
    if env is not None:
        try:
            return float(env)
        except ValueError:
            raise InputError(f"{ENV_SOLVER_TOL}={env!r} is not a number") from None
    return DEFAULT_SOLVER_TOL


def _read_signal_csv(path: str) -> np.ndarray:
    """Input-signal CSV -> (m, T) array, one row per channel.

    Accepts a plain numeric table (rows are time steps), a headered table of
    channel columns, or a full trajectory file (its u_* columns are taken and
    the final, input-less row dropped).  Non-finite values are rejected.
    """
    import csv as _csv

    try:
        with open(path, newline="", encoding="utf-8") as fp:
            rows = [row for row in _csv.reader(fp) if any(c.strip() for c in row)]
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise InputError(f"{path} is empty")

    def as_floats(row):
        try:
            return [float(c) for c in row]
        except ValueError:
            return None

    if as_floats(rows[0]) is not None:
        data_rows, col_idx = rows, list(range(len(rows[0])))
    else:
        header = [h.strip() for h in rows[0]]
        if header and header[0] == "k":
            col_idx = [i for i, h in enumerate(header) if h.startswith("u_")]
            if not col_idx:
                raise InputError("trajectory file has no u_* columns")
            data_rows = rows[1:-1]
        else:
            data_rows, col_idx = rows[1:], list(range(len(header)))
    if not data_rows:
        raise InputError("no signal samples found")

    samples = []
    for row in data_rows:
        vals = []
        for i in col_idx:
            field = row[i] if i < len(row) else ""
            try:
                v = float(field)
            except ValueError:
                raise InputError(f"bad numeric field {field!r} in {path}") from None
            if not np.isfinite(v):
                raise InputError(f"non-finite value {field!r} in {path}")
            vals.append(v)
        samples.append(vals)
    return np.asarray(samples, dtype=float).T


def _load_trajectory(path: str):
    try:
        with open(path, newline="", encoding="utf-8") as fp:
            return trajectory_from_csv(fp)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def _parse_eps(text: str) -> list[float]:
    try:
        grid = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise InputError(f"bad --eps list {text!r}") from None
    if not grid:
        raise InputError("--eps list is empty")
    return grid


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_pe_check(args) -> int:
    signal = _read_signal_csv(args.data)
    rel_tol = args.tol if args.tol is not None else DEFAULT_RANK_RTOL
    ok, report = is_persistently_exciting(signal, args.order, rel_tol)
    payload = {
        "persistently_exciting": bool(ok),
        "order": args.order,
        "channels": signal.shape[0],
        "samples": signal.shape[1],
        "hankel": report.to_dict(),
    }
    _emit(json.dumps(payload, indent=2) + "\n", args.out)
    return 0 if ok else 2


def cmd_design(args) -> int:
    traj = _load_trajectory(args.data)
    if args.n is not None and traj.n != args.n:
        raise InputError(f"--n {args.n} does not match the file's {traj.n} states")
    if args.m is not None and traj.m != args.m:
        raise InputError(f"--m {args.m} does not match the file's {traj.m} inputs")
    dm = build_data_matrices(traj)
    cert = check_assumption1(dm)

    import warnings as _warnings

    with _warnings.catch_warnings():
        _warnings.simplefilter("ignore")  # the rank verdict is reported explicitly
        problem = build_design(dm)
    result = solve_design(problem, tol=_solver_tol(args))

    payload = result.to_dict()
    payload["certification"] = cert.to_dict()
    strict_failure = None
    if args.strict:
        strict_failure = "residual bound unknown (no oracle): certification is heuristic-only"
        payload["strict_failure"] = strict_failure
    _emit(json.dumps(payload, indent=2) + "\n", args.out)

    if result.solver_status == "numerical_failure":
        print("design: solver failed", file=sys.stderr)
        return 1
    if not cert.assumption1_holds or result.solver_status == "infeasible":
        return 3
    if strict_failure:
        print(f"design: {strict_failure}", file=sys.stderr)
        return 3
    return 0


def cmd_certify(args) -> int:
    traj = _load_trajectory(args.data)
    if args.oracle:
        if not args.plant:
            raise InputError("--oracle needs --plant for the residual model")
        plant = load_plant(args.plant)
        dm = remainder_sequence(plant, traj)
    else:
        dm = build_data_matrices(traj)
    rel_tol = args.tol if args.tol is not None else DEFAULT_RANK_RTOL
    cert = check_assumption1(dm, rel_tol)
    gamma = None
    if dm.D0 is not None:
        try:
            gamma = gamma_min(dm)
        except GammaUndefinedError:
            gamma = None
    cert = CertReport(
        assumption1_holds=cert.assumption1_holds,
        rank_UX=cert.rank_UX,
        rank_X1=cert.rank_X1,
        margin_UX=cert.margin_UX,
        margin_X1=cert.margin_X1,
        gamma_min=gamma,
    )
    payload = cert.to_dict()
    if args.strict and gamma is None:
        payload["strict_failure"] = "residual bound unknown: certification is heuristic-only"
    _emit(json.dumps(payload, indent=2) + "\n", args.out)
    if not cert.assumption1_holds:
        return 3
    if args.strict and gamma is None:
        return 3
    return 0


def cmd_sweep(args) -> int:
    plant = load_plant(args.plant)
    grid = _parse_eps(args.eps) if args.eps else list(DEFAULT_EPS_GRID)

    if args.data:
        if any(v is not None for v in (args.seed, args.T, args.amplitude)):
            raise InputError(
                "--data provides the experiment; --seed/--T/--amplitude only "
                "apply to generated inputs"
            )
        base = load_experiment(args.data)
    else:
        T = args.T if args.T is not None else DEFAULT_HORIZON
        amplitude = args.amplitude if args.amplitude is not None else DEFAULT_AMPLITUDE
        seed = args.seed if args.seed is not None else 42
        inputs = generate_pe_input(plant.m, plant.n, T, amplitude=amplitude, seed=seed)
        base = ExperimentSpec(x0=np.zeros(plant.n), inputs=inputs, epsilon=1.0, seed=seed)

    rows = epsilon_sweep(plant, base, grid, oracle=True, tol=_solver_tol(args))

    import io as _io

    buf = _io.StringIO()
    write_sweep_csv(rows, buf, timestamp=not args.no_timestamp)
    _emit(buf.getvalue(), args.out)

    last = rows[-1]
    certified = last.assumption1 and bool(last.gamma_condition)
    if args.strict and any(r.solver_status != "optimal" for r in rows):
        print("sweep: not every scale solved cleanly", file=sys.stderr)
        return 4
    return 0 if certified else 4


def cmd_demo(args) -> int:
    if args.name == "scalar":
        return _demo_scalar(args.theta)
    if args.name == "pendulum":
        return _demo_pendulum(args)
    raise InputError(f"unknown demo {args.name!r}")


def _demo_scalar(theta: float) -> int:
    plant = scalar_quadratic()
    spec = adversarial_theta_input(theta)
    print(f"scalar plant x+ = x^2 + u, experiment crafted at theta = {theta}")
    if theta == 0:
        print("warning: theta = 0 excites nothing; all data are zero (degenerate)")
    _, dm = run_experiment(plant, spec, oracle=True)
    cert = check_assumption1(dm)
    lin = linearize(plant)
    _, lin_dm = run_experiment(linear(lin.A, lin.B), spec, oracle=False)
    lin_cert = check_assumption1(lin_dm)
    print(f"  inputs:             {np.array2string(spec.inputs[0], precision=6)}")
    print(f"  nonlinear data:     rank[U0;X0] = {cert.rank_UX.numerical_rank} "
          f"of {cert.rank_UX.matrix_rows} rows -> certificate "
          f"{'holds' if cert.assumption1_holds else 'FAILS'}")
    print(f"  linearized data:    rank[U0;X0] = {lin_cert.rank_UX.numerical_rank} "
          f"of {lin_cert.rank_UX.matrix_rows} rows -> certificate "
          f"{'holds' if lin_cert.assumption1_holds else 'FAILS'}")
    print("  the input row reproduces the state row exactly, and re-crafting the")
    print("  chain at a smaller theta reproduces the failure at any scale.")
    return 0


def _demo_pendulum(args) -> int:
    from .plant import pendulum

    plant = pendulum()
    T = args.T if args.T is not None else DEFAULT_HORIZON
    amplitude = args.amplitude if args.amplitude is not None else DEFAULT_AMPLITUDE
    seed = args.seed if args.seed is not None else 42
    grid = _parse_eps(args.eps) if args.eps else list(DEFAULT_EPS_GRID)
    tol = _solver_tol(args)

    print(f"inverted pendulum demo: T={T}, amplitude={amplitude}, seed={seed}")
    inputs = generate_pe_input(plant.m, plant.n, T, amplitude=amplitude, seed=seed)
    base = ExperimentSpec(x0=np.zeros(plant.n), inputs=inputs, epsilon=1.0, seed=seed)
    rows = epsilon_sweep(plant, base, grid, oracle=True, tol=tol)
    for row in rows:
        gc = {None: "unknown", True: "yes", False: "no"}[row.gamma_condition]
        alpha_s = "-" if row.alpha is None else f"{row.alpha:.6g}"
        rho_s = "-" if row.spectral_radius is None else f"{row.spectral_radius:.4f}"
        print(
            f"  eps={row.epsilon:<7g} alpha={alpha_s:<12} "
            f"rank-ok={'yes' if row.assumption1 else 'no':<4} "
            f"residual-bound-ok={gc:<8} rho={rho_s}"
        )
    best = next((r for r in reversed(rows) if r.K is not None), None)
    if best is None:
        print("no scale produced a gain")
        return 1
    print(f"gain at eps={best.epsilon}: K = {np.array2string(best.K, precision=4)}")
    ok, stats = simulate_closed_loop_stability(plant, best.K, radius=0.05)
    rho = spectral_radius_closed_loop(linearize(plant), best.K)
    print(f"closed loop: spectral radius {rho:.4f}, "
          f"simulation {'stable' if ok else 'UNSTABLE'} "
          f"(worst decay {stats['worst_decay_ratio']:.3g} over {stats['horizon']} steps)")
    try:
        verdict, slope = alpha_convergence_diagnostic(rows)
        print(f"alpha convergence: {verdict} (fitted slope {slope:.2f})")
    except InputError:
        pass
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ddstab",
        description="Learn stabilizing state feedback from one short experiment, "
        "with excitation checks, certification, and scale sweeps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    pe = sub.add_parser("pe-check", help="check persistency of excitation of an input CSV")
    pe.add_argument("--data", required=True, help="input-signal CSV")
    pe.add_argument("--order", type=int, required=True, help="excitation order to verify")
    pe.add_argument("--tol", type=float, default=None, help="relative rank tolerance")
    pe.add_argument("--out", default=None, help="write the JSON report here")
    pe.set_defaults(func=cmd_pe_check)

    de = sub.add_parser("design", help="solve the gain design on a trajectory CSV")
    de.add_argument("--data", required=True, help="trajectory CSV (k,u_*,x_*)")
    de.add_argument("--n", type=int, default=None, help="expected state dimension (cross-check)")
    de.add_argument("--m", type=int, default=None, help="expected input dimension (cross-check)")
    de.add_argument("--tol", type=float, default=None, help="solver tolerance")
    de.add_argument("--out", default=None, help="write the JSON result here")
    de.add_argument("--strict", action="store_true",
                    help="fail unless the residual bound is certifiable (needs an oracle)")
    de.set_defaults(func=cmd_design)

    ce = sub.add_parser("certify", help="run the data certificates on a trajectory CSV")
    ce.add_argument("--data", required=True, help="trajectory CSV (k,u_*,x_*)")
    ce.add_argument("--plant", default=None, help="plant JSON config (for --oracle)")
    ce.add_argument("--oracle", action="store_true",
                    help="use the plant model to compute residuals and the residual bound")
    ce.add_argument("--tol", type=float, default=None, help="relative rank tolerance")
    ce.add_argument("--out", default=None, help="write the JSON report here")
    ce.add_argument("--strict", action="store_true",
                    help="fail unless the residual bound is certifiable")
    ce.set_defaults(func=cmd_certify)

    sw = sub.add_parser("sweep", help="run the shrinking-experiment sweep on a plant")
    sw.add_argument("--plant", required=True, help="plant JSON config")
    sw.add_argument("--data", default=None, help="experiment JSON overriding the generated base")
    sw.add_argument("--eps", default=None, help="comma-separated decreasing scales")
    sw.add_argument("--seed", type=int, default=None, help="input-generation seed (default 42)")
    sw.add_argument("--T", type=int, default=None, help="experiment horizon (default 15)")
    sw.add_argument("--amplitude", type=float, default=None, help="input amplitude (default 5)")
    sw.add_argument("--tol", type=float, default=None, help="solver tolerance")
    sw.add_argument("--out", default=None, help="write the sweep CSV here")
    sw.add_argument("--no-timestamp", action="store_true",
                    help="omit the timestamp comment line (byte-identical reruns)")
    sw.add_argument("--strict", action="store_true",
                    help="also fail unless every scale solved cleanly")
    sw.set_defaults(func=cmd_sweep)

    dm = sub.add_parser("demo", help="built-in demonstrations")
    dm.add_argument("name", choices=["scalar", "pendulum"])
    dm.add_argument("--theta", type=float, default=0.1, help="scalar demo excitation")
    dm.add_argument("--eps", default=None, help="pendulum demo scale grid")
    dm.add_argument("--seed", type=int, default=None)
    dm.add_argument("--T", type=int, default=None)
    dm.add_argument("--amplitude", type=float, default=None)
    dm.add_argument("--tol", type=float, default=None)
    dm.set_defaults(func=cmd_demo)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DDStabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
