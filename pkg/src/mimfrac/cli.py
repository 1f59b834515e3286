"""Command-line front end: forward runs, inversions, table sweeps, checks.

Subcommands: forward | invert | tables | verify.  Exit codes: 0 success,
1 configuration problems, 2 solver failures or a verification suite
missing its tolerance, 3 filesystem problems, 4 a line search that failed
before taking a single step.

A line search that stalls after making progress is recorded as stop
reason "stagnated" and treated as normal termination: with noisy data the
descent bottoms out at the noise floor, which is where the discrepancy
principle would stop it anyway.  Every command writes its artifacts
(delimited text plus rendered figures) under one output directory and a
config.txt manifest that re-parses to the run's configuration.
"""
from __future__ import annotations

import argparse
import dataclasses
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import (
    ConfigError,
    RunConfig,
    build_problem,
    canonical_manifest,
    inverse_config,
    load_config,
    parse_config,
)
from .duhamel import (
    residual_refinement_study,
    save_mu_series,
    save_residual_table,
    verify_duhamel,
)
from .fem import (
    Coefficients,
    SolverError,
    assemble,
    build_mesh,
    l2_inner,
    project_function,
    save_field,
    zero_boundary,
)
from .fractime import TimeGrid, TimeSeries, trapezoid_weights
from .inversion import (
    InversionState,
    LineSearchError,
    ObservationData,
    add_noise,
    cost,
    generate_data,
    gradient,
    observed_nodes,
    reconstruct,
    relative_error,
)
from .plots import (
    save_field_plot,
    save_history_plot,
    save_reconstruction_plot,
    save_residual_plot,
    save_table_plot,
)
from .solver import convergence_study, save_space_time, solve_forward

__all__ = [
    "main",
    "run_inversion",
    "RunOutcome",
    "table_rows",
    "example_base",
    "BETA_SWEEP",
    "EXIT_OK",
    "EXIT_CONFIG",
    "EXIT_SOLVER",
    "EXIT_IO",
    "EXIT_LINESEARCH",
]

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SOLVER = 2
EXIT_IO = 3
EXIT_LINESEARCH = 4

# Regularization sweep for table reproduction; each noisy run picks the
# weight whose final data misfit best matches the injected noise energy.
BETA_SWEEP = (1e-6, 1e-5, 1e-4, 1e-3)

DUHAMEL_LEVELS = ((10, 40), (20, 80), (40, 160))
DUHAMEL_TOL = 5e-2
CONVERGENCE_LEVELS = ((10, 10), (20, 20), (40, 40))
CONVERGENCE_MIN_ORDER = 0.9
GRADIENT_TOL = 1e-2


@dataclass(frozen=True)
class RunOutcome:
    """One finished inversion: the pick of the sweep when one ran."""

    g_rec: np.ndarray
    state: InversionState
    error: float
    loss: float
    beta: float
    stop_reason: str


def _reconstruct_tolerant(icfg, problem, data):
    """Run the descent, accepting noise-floor stagnation as a stop.

    A LineSearchError with an empty history means not even one step was
    possible; that one propagates (exit code 4 at the command level).
    """
    try:
        g_rec, state = reconstruct(icfg, problem, data)
    except LineSearchError as exc:
        if len(exc.state.history) <= 1:
            raise
        state = exc.state
        return state.iterate, state, "stagnated"
    reason = "iterations" if len(state.history) == icfg.max_iters + 1 else "gradient"
    return g_rec, state, reason


def run_inversion(config: RunConfig, seed=None, sweep: bool = False) -> RunOutcome:
    """Generate data, add noise, reconstruct; optionally sweep beta.

    seed overrides config.seed for the noise draw (it may be a
    SeedSequence, which the table driver uses for splittable streams).
    With sweep=True and positive noise the run is repeated over BETA_SWEEP
    and the returned outcome is the discrepancy pick: the beta whose final
    data misfit is closest (in log ratio) to the expected noise energy
    (eps/100)^2/3 * int ||u_d||^2_omega dt.
    """
    problem = build_problem(config)
    if problem.system.mask is None:
        raise ConfigError("inversion requires an observation frame (set frame=lo,hi)")
    g_true = zero_boundary(problem.mesh, problem.g)
    clean = generate_data(g_true, problem, refine=config.refine)
    noise_seed = config.seed if seed is None else seed
    nodes = observed_nodes(problem.mesh, problem.system.mask)
    frames = add_noise(clean.frames, config.epsilon, noise_seed, nodes=nodes)
    data = ObservationData(frames, problem.system.mask, config.epsilon)

    M = problem.system.M
    betas = BETA_SWEEP if sweep and config.epsilon > 0.0 else (config.beta,)
    outcomes = []
    scores = []
    if config.epsilon > 0.0:
        w = trapezoid_weights(problem.grid)
        weighted = (problem.system.M_omega @ frames.T).T
        energy = float(w @ np.einsum("nj,nj->n", frames, weighted))
        expected = (config.epsilon / 100.0) ** 2 / 3.0 * energy
    else:
        expected = None
    for beta in betas:
        icfg = dataclasses.replace(inverse_config(config), beta=beta)
        g_rec, state, reason = _reconstruct_tolerant(icfg, problem, data)
        loss = state.history[-1][1]
        error = relative_error(g_rec, g_true, M)
        outcomes.append(RunOutcome(g_rec, state, error, loss, beta, reason))
        if expected is not None:
            j_data = loss - 0.5 * beta * l2_inner(g_rec, g_rec, M)
            good = j_data > 0.0 and expected > 0.0
            scores.append(abs(np.log(2.0 * j_data / expected)) if good else np.inf)
        else:
            scores.append(0.0)
    return outcomes[int(np.argmin(scores))]


def example_base() -> RunConfig:
    """The standard benchmark configuration the tables perturb."""
    return RunConfig(T=1.5, N=20, nx=20, ny=20, alpha=0.5, q=1.0)


def table_rows(which: int, base: RunConfig) -> list[RunConfig]:
    """Row configurations for the three benchmark tables.

    Table 1 varies noise level and observation frame, table 2 the
    fractional order, table 3 the true source profile.
    """
    if which == 1:
        specs = [
            (1.0, (0.1, 0.9)),
            (3.0, (0.1, 0.9)),
            (5.0, (0.1, 0.9)),
            (1.0, (0.2, 0.8)),
            (1.0, (0.05, 0.95)),
        ]
        return [dataclasses.replace(base, epsilon=e, frame=f) for e, f in specs]
    if which == 2:
        return [
            dataclasses.replace(base, epsilon=2.0, frame=(0.05, 0.95), alpha=a)
            for a in (0.3, 0.6, 0.9)
        ]
    if which == 3:
        return [
            dataclasses.replace(base, epsilon=1.0, frame=(0.05, 0.95), g_true=name)
            for name in ("example2a", "example2b", "example2c")
        ]
    raise ConfigError(f"unknown table {which}; choose 1, 2 or 3")


def _row_label(which: int, row: RunConfig) -> list[str]:
    frame = f"{row.frame[0]:g}-{row.frame[1]:g}"
    if which == 1:
        return [f"{row.epsilon:g}", frame]
    if which == 2:
        return [f"{row.alpha:g}", frame]
    return [row.g_true, frame]


_LABEL_HEADERS = {1: ["epsilon", "frame"], 2: ["alpha", "frame"], 3: ["g_true", "frame"]}


def _table_job(payload):
    """One (row, rep) cell; module-level so process pools can pickle it."""
    manifest, which, row_idx, rep, master_seed = payload
    config = parse_config(manifest)
    seq = np.random.SeedSequence(master_seed, spawn_key=(which, row_idx, rep))
    outcome = run_inversion(config, seed=seq, sweep=True)
    return row_idx, rep, outcome.error, outcome.loss


def _ensure_out(args, config: RunConfig | None = None) -> Path:
    name = args.out if args.out else (config.out if config else "out")
    out = Path(name)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_forward(args) -> int:
    config = load_config(args.config)
    out = _ensure_out(args, config)
    problem = build_problem(config)
    frames = solve_forward(problem)
    save_space_time(
        out / "frames", frames, problem.mesh, problem.grid, config.alpha, config.q
    )
    (out / "config.txt").write_text(canonical_manifest(config), encoding="ascii")
    save_field_plot(
        out / "final_frame.png", problem.mesh, frames[-1], title=f"t = {config.T:g}"
    )
    print(f"forward: wrote {problem.grid.N + 1} frames to {out / 'frames'}")
    return EXIT_OK


def cmd_invert(args) -> int:
    config = load_config(args.config)
    out = _ensure_out(args, config)
    seed = args.seed if args.seed is not None else config.seed
    outcome = run_inversion(config, seed=seed, sweep=False)

    problem = build_problem(config)
    g_true = zero_boundary(problem.mesh, problem.g)
    save_field(out / "g_rec.csv", problem.mesh, outcome.g_rec)
    with open(out / "history.csv", "w", encoding="ascii") as fh:
        fh.write("iteration,cost,grad_norm,step\n")
        for it, j, gnorm, step in outcome.state.history:
            fh.write(f"{it},{j:.17g},{gnorm:.17g},{step:.17g}\n")
    with open(out / "summary.csv", "w", encoding="ascii") as fh:
        fh.write("Error,Loss,beta,iterations,stop_reason,epsilon,seed\n")
        fh.write(
            f"{outcome.error:.6e},{outcome.loss:.6e},{outcome.beta:.17g},"
            f"{len(outcome.state.history) - 1},{outcome.stop_reason},"
            f"{config.epsilon:.17g},{seed}\n"
        )
    (out / "config.txt").write_text(canonical_manifest(config), encoding="ascii")
    save_reconstruction_plot(out / "reconstruction.png", problem.mesh, outcome.g_rec, g_true)
    save_history_plot(out / "history.png", outcome.state.history)
    print(
        f"invert: error {outcome.error:.6e}, loss {outcome.loss:.6e}, "
        f"{len(outcome.state.history) - 1} iterations ({outcome.stop_reason})"
    )
    return EXIT_OK


def cmd_tables(args) -> int:
    try:
        which = int(args.table)
    except ValueError:
        raise ConfigError(f"table must be 1, 2 or 3, got {args.table!r}") from None
    if which not in (1, 2, 3):
        raise ConfigError(f"table must be 1, 2 or 3, got {which}")
    if args.seeds < 1:
        raise ConfigError(f"seeds must be at least 1, got {args.seeds}")
    base = load_config(args.config) if args.config else example_base()
    out = _ensure_out(args, base)
    master_seed = args.seed if args.seed is not None else base.seed
    rows = table_rows(which, base)

    jobs = [
        (canonical_manifest(row), which, row_idx, rep, master_seed)
        for row_idx, row in enumerate(rows)
        for rep in range(args.seeds)
    ]
    errors = np.zeros((len(rows), args.seeds))
    losses = np.zeros((len(rows), args.seeds))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_table_job, jobs))
    else:
        results = [_table_job(payload) for payload in jobs]
    for row_idx, rep, error, loss in results:
        errors[row_idx, rep] = error
        losses[row_idx, rep] = loss

    ddof = 1 if args.seeds > 1 else 0
    path = out / f"table{which}.csv"
    with open(path, "w", encoding="ascii") as fh:
        fh.write(
            ",".join(
                _LABEL_HEADERS[which]
                + ["Error_mean", "Error_spread", "Loss_mean", "Loss_spread", "reps"]
            )
            + "\n"
        )
        for row_idx, row in enumerate(rows):
            stats = (
                errors[row_idx].mean(),
                errors[row_idx].std(ddof=ddof),
                losses[row_idx].mean(),
                losses[row_idx].std(ddof=ddof),
            )
            fh.write(
                ",".join(_row_label(which, row) + [f"{v:.6e}" for v in stats])
                + f",{args.seeds}\n"
            )
    (out / "config.txt").write_text(canonical_manifest(base), encoding="ascii")
    labels = ["/".join(_row_label(which, row)) for row in rows]
    save_table_plot(
        out / f"table{which}.png",
        labels,
        errors.mean(axis=1),
        errors.std(axis=1, ddof=ddof),
    )
    for label, err, loss in zip(labels, errors.mean(axis=1), losses.mean(axis=1)):
        print(f"table {which} row {label}: error {err:.6e}, loss {loss:.6e}")
    print(f"tables: wrote {path}")
    return EXIT_OK


def _verify_duhamel(out: Path) -> int:
    rows = residual_refinement_study(list(DUHAMEL_LEVELS))
    save_residual_table(out / "residuals.csv", rows)
    save_residual_plot(out / "residuals.png", rows)
    nx, N = DUHAMEL_LEVELS[-1]
    mesh = build_mesh(nx, nx)
    system = assemble(mesh, Coefficients.laplace())
    grid = TimeGrid(T=1.5, N=N)
    rho = TimeSeries.from_function(grid, lambda t: 2.0 + (2 * np.pi * t) ** 2)
    g = project_function(
        mesh, lambda x, y: 0.5 * np.cos(np.pi * x) * np.cos(np.pi * y) + 1.0
    )
    save_mu_series(out / "mu.csv", verify_duhamel(g, rho, 1.0, 0.5, system, grid).mu)

    residuals = [row.residual for row in rows]
    for row in rows:
        print(f"duhamel level {row.level} (nx={row.nx}, N={row.N}): residual {row.residual:.6e}")
    monotone = all(b < a for a, b in zip(residuals, residuals[1:]))
    final_ok = residuals[-1] <= DUHAMEL_TOL
    print(f"duhamel monotone decrease: {'PASS' if monotone else 'FAIL'}")
    print(f"duhamel final residual <= {DUHAMEL_TOL:g}: {'PASS' if final_ok else 'FAIL'}")
    return EXIT_OK if monotone and final_ok else EXIT_SOLVER


def _verify_convergence(out: Path) -> int:
    rows = convergence_study(list(CONVERGENCE_LEVELS))
    with open(out / "convergence.csv", "w", encoding="ascii") as fh:
        fh.write("nx,N,error,order\n")
        for row in rows:
            order = "" if row.order is None else f"{row.order:.6e}"
            fh.write(f"{row.nx},{row.N},{row.error:.6e},{order}\n")
    errors = [row.error for row in rows]
    orders = [row.order for row in rows if row.order is not None]
    for row in rows:
        shown = "-" if row.order is None else f"{row.order:.3f}"
        print(f"convergence nx={row.nx}, N={row.N}: error {row.error:.6e}, order {shown}")
    monotone = all(b < a for a, b in zip(errors, errors[1:]))
    orders_ok = all(order >= CONVERGENCE_MIN_ORDER for order in orders)
    print(f"convergence monotone decrease: {'PASS' if monotone else 'FAIL'}")
    print(
        f"convergence observed orders >= {CONVERGENCE_MIN_ORDER:g}: "
        f"{'PASS' if orders_ok else 'FAIL'}"
    )
    return EXIT_OK if monotone and orders_ok else EXIT_SOLVER


def _verify_gradient(out: Path) -> int:
    config = dataclasses.replace(example_base(), frame=(0.1, 0.9))
    problem = build_problem(config)
    g_true = zero_boundary(problem.mesh, problem.g)
    data = generate_data(g_true, problem)
    M = problem.system.M
    beta = 1e-8
    g0 = np.zeros(problem.mesh.n_nodes)
    grad = gradient(g0, problem, data, beta)
    ref_norm = np.sqrt(l2_inner(grad, grad, M))

    # smooth screened probe directions; white noise would make the relative
    # gap a ratio of near-cancelling terms
    rng = np.random.default_rng(0)
    x, y = problem.mesh.nodes[:, 0], problem.mesh.nodes[:, 1]
    gaps = []
    eps_fd = 1e-3
    while len(gaps) < 3:
        direction = np.zeros(problem.mesh.n_nodes)
        for k in range(1, 4):
            for l in range(1, 4):
                direction += rng.normal() * np.sin(k * np.pi * x) * np.sin(l * np.pi * y)
        direction /= np.sqrt(l2_inner(direction, direction, M))
        if abs(l2_inner(grad, direction, M)) < 0.5 * ref_norm:
            continue
        slope = l2_inner(grad, direction, M)
        fd = (
            cost(g0 + eps_fd * direction, problem, data, beta)
            - cost(g0 - eps_fd * direction, problem, data, beta)
        ) / (2.0 * eps_fd)
        gaps.append(abs(fd - slope) / max(abs(fd), abs(slope)))

    with open(out / "gradient.csv", "w", encoding="ascii") as fh:
        fh.write("direction,gap\n")
        for idx, gap in enumerate(gaps):
            fh.write(f"{idx},{gap:.6e}\n")
    for idx, gap in enumerate(gaps):
        print(f"gradient direction {idx}: relative gap {gap:.6e}")
    ok = max(gaps) <= GRADIENT_TOL
    print(f"gradient gaps <= {GRADIENT_TOL:g}: {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_SOLVER


def cmd_verify(args) -> int:
    suites = {
        "duhamel": _verify_duhamel,
        "convergence": _verify_convergence,
        "gradient": _verify_gradient,
    }
    if args.suite not in suites:
        raise ConfigError(
            f"unknown suite {args.suite!r}; choose one of {', '.join(sorted(suites))}"
        )
    out = _ensure_out(args)
    return suites[args.suite](out)


def _add_common(parser: argparse.ArgumentParser, config_required: bool) -> None:
    parser.add_argument(
        "--config", required=config_required, help="path to a key=value run file"
    )
    parser.add_argument("--out", help="output directory (default: config out key)")
    parser.add_argument("--seed", type=int, help="override the configured noise seed")
    parser.add_argument("--jobs", type=int, default=1, help="parallel worker count")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mimfrac",
        description="Two-time-scale diffusion: forward solves and source recovery.",
    )
    sub = parser.add_subparsers(dest="command")

    p_forward = sub.add_parser("forward", help="solve the forward problem")
    _add_common(p_forward, config_required=True)
    p_forward.set_defaults(func=cmd_forward)

    p_invert = sub.add_parser("invert", help="reconstruct the source factor")
    _add_common(p_invert, config_required=True)
    p_invert.set_defaults(func=cmd_invert)

    p_tables = sub.add_parser("tables", help="reproduce a benchmark table")
    p_tables.add_argument("table", help="which table: 1, 2 or 3")
    p_tables.add_argument("--seeds", type=int, default=5, help="noise seeds per row")
    _add_common(p_tables, config_required=False)
    p_tables.set_defaults(func=cmd_tables)

    p_verify = sub.add_parser("verify", help="run a verification suite")
    p_verify.add_argument("suite", help="duhamel | convergence | gradient")
    _add_common(p_verify, config_required=False)
    p_verify.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    if not hasattr(args, "func"):
        parser.print_help()
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LineSearchError as exc:
        print(f"line search error: {exc}", file=sys.stderr)
        return EXIT_LINESEARCH
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
