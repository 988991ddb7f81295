"""Command-line interface.

Exit codes: 0 success, 1 usage or schema error, 2 runtime or numerical error.
"""

from __future__ import annotations

import json
import sys
import warnings
from importlib import resources
from pathlib import Path

import click
import numpy as np

from .core import StructuralError
from .diagnostics import DEGENERACY_TOL, degeneracy_warning, diagnostics_to_dict, full_rank_check
from .dictionary import build_dictionary, enumerate_monomials
from .dynamics import IntegrationError, integrate, make_system, read_series_csv, simulate_switching, write_series_csv
from .experiments import ReportError, emit_report, load_config, run_experiment
from .pipeline import build_problems, identify_problems, prepare_sources
from .solver import INITS, VARIANTS, ConfigError, SolverConfig

EXIT_USAGE = 1
EXIT_RUNTIME = 2


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise click.BadParameter(f"expected comma-separated numbers, got {text!r}")


def _write_json(data, path: Path) -> None:
    try:
        path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise ReportError(f"cannot write {path}: {exc.strerror}") from exc


@click.group()
def cli():
    """Learn shared sparse ODE models from several data sources."""


@cli.command()
@click.argument("system", type=click.Choice(["logistic", "lorenz", "duffing", "switching"]))
@click.option("--alpha", type=float, help="Bifurcation parameter (logistic, lorenz).")
@click.option("--beta", type=float, help="Duffing stiffness.")
@click.option("--delta", type=float, help="Duffing damping.")
@click.option("--alpha-before", type=float, default=-1.0, show_default=True)
@click.option("--alpha-after", type=float, default=6.6, show_default=True)
@click.option("--t-switch", type=float, help="Switch time (default: 33/64 of t-final).")
@click.option("--x0", required=True, help="Initial state, comma separated.")
@click.option("--dt", type=float, default=0.005, show_default=True)
@click.option("--t-final", type=float, required=True)
@click.option("-o", "--output", type=click.Path(dir_okay=False, path_type=Path), required=True)
def simulate(system, alpha, beta, delta, alpha_before, alpha_after, t_switch, x0, dt, t_final, output):
    """Integrate SYSTEM with RK4 and write a t,x1,...,xn CSV."""
    x0 = _floats(x0)
    if system == "switching":
        ts = t_switch if t_switch is not None else 33.0 / 64.0 * t_final
        series = simulate_switching(alpha_before, alpha_after, x0, dt, ts, t_final)
    else:
        if system == "duffing":
            if beta is None or delta is None:
                raise click.UsageError("duffing needs --beta and --delta")
            params = {"beta": beta, "delta": delta}
        else:
            if alpha is None:
                raise click.UsageError(f"{system} needs --alpha")
            params = {"alpha": alpha}
        sys_ = make_system(system, **params)
        if len(x0) != sys_.n:
            raise click.BadParameter(f"{system} needs {sys_.n} initial values", param_hint="--x0")
        series = integrate(sys_, x0, dt, t_final)
    try:
        write_series_csv(series, output)
    except OSError as exc:
        raise ReportError(f"cannot write {output}: {exc.strerror}") from exc
    final = ", ".join(f"{v:.6g}" for v in series.states[-1])
    click.echo(f"wrote {len(series)} rows to {output}; final state [{final}]")


def _load_sources(paths):
    if not paths:
        raise click.UsageError("give at least one CSV file")
    sources = [read_series_csv(p, i + 1) for i, p in enumerate(paths)]
    n = sources[0].n
    for p, s in zip(paths, sources):
        if s.n != n:
            raise StructuralError(f"{p}: {s.n} state columns, expected {n}")
    return sources


@cli.command()
@click.argument("csvs", nargs=-1, type=click.Path(path_type=Path))
@click.option("-p", "--degree", type=int, required=True, help="Maximum monomial degree.")
@click.option("--threshold", type=float, required=True, help="Row threshold a (penalty a^2).")
@click.option("--variant", type=click.Choice(VARIANTS), default="group-l20", show_default=True)
@click.option("--tol", type=float, default=1e-8, show_default=True)
@click.option("--max-iter", type=int, default=500, show_default=True)
@click.option("--init", type=click.Choice(INITS), default="zero", show_default=True)
@click.option("--s", "sparsity", type=int, help="Row budget for ks-rows.")
@click.option("--noise", type=float, default=0.0, show_default=True,
              help="Relative velocity noise added to every source.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("-o", "--output", type=click.Path(dir_okay=False, path_type=Path), default=Path("model.json"),
              show_default=True)
def identify(csvs, degree, threshold, variant, tol, max_iter, init, sparsity, noise, seed, output):
    """Identify one shared sparse model from CSVS, one source per file."""
    config = SolverConfig(threshold=threshold, tol=tol, max_iter=max_iter, variant=variant,
                          s=sparsity, init=init)
    if degree < 0:
        raise click.BadParameter("must be >= 0", param_hint="--degree")
    if noise < 0:
        raise click.BadParameter("must be >= 0", param_hint="--noise")
    sources = _load_sources(csvs)
    states, velocities = prepare_sources(sources, noise, seed)
    spec = enumerate_monomials(sources[0].n, degree)
    problems = build_problems(states, velocities, spec)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        model = identify_problems(problems, config, labels=[str(p) for p in csvs])
    for w in caught:
        click.echo(f"warning: {w.message}", err=True)
    for i, path in enumerate(csvs):
        click.echo(f"[{path}]")
        for j in range(spec.n):
            click.echo("  " + model.equation(j, i))
    _write_json(model.to_dict(), output)
    click.echo(f"model written to {output}")


def _resolve_config(path: str) -> Path:
    p = Path(path)
    if p.exists():
        return p
    shipped = resources.files("groupsindy") / "configs" / p.name
    if shipped.is_file():
        return Path(str(shipped))
    raise ConfigError(str(path), "no such file (and no shipped config with that name)")


@cli.command()
@click.argument("config")
@click.option("-o", "--output", type=click.Path(file_okay=False, path_type=Path), default=Path("report"),
              show_default=True)
@click.option("-j", "--jobs", type=int, default=1, show_default=True, help="Parallel trial workers.")
@click.option("--no-figures", is_flag=True, help="Skip the SVG renderings.")
def experiment(config, output, jobs, no_figures):
    """Run the experiment described by CONFIG (a path or a shipped name such as logistic.cfg)."""
    cfg = load_config(_resolve_config(config))
    report = run_experiment(cfg, n_jobs=max(1, jobs))
    emit_report(report, output, figures=not no_figures)
    for variant, s in report.summary.items():
        err = s.get("mean_rel_err_pct")
        err_txt = "n/a" if err is None else f"{err:.4f}%"
        click.echo(f"{variant}: P = {s['P']:.2f} ({s['matches']}/{report.n_trials}), "
                   f"mean rel. error {err_txt}, failed {s['n_failed']}")
    if report.kind == "switching":
        click.echo(f"switch segment: {report.extra['switch_segment']} "
                   f"(true {report.extra['true_switch_segment']})")
    click.echo(f"report written to {output}")


@cli.command()
@click.argument("csvs", nargs=-1, type=click.Path(path_type=Path))
@click.option("-p", "--degree", type=int, required=True)
@click.option("--tolerance", type=float, default=DEGENERACY_TOL, show_default=True,
              help="Per-degree conditioning rate below which a source is flagged.")
@click.option("-o", "--output", type=click.Path(dir_okay=False, path_type=Path), default=Path("diagnostics.json"),
              show_default=True)
def diagnose(csvs, degree, tolerance, output):
    """Rank and near-degeneracy checks for each source's dictionary."""
    sources = _load_sources(csvs)
    states, velocities = prepare_sources(sources)
    spec = enumerate_monomials(sources[0].n, degree)
    problem = build_problems(states, velocities, spec)[0]
    report = degeneracy_warning(problem, tolerance)
    for diag, X in zip(report, states):
        diag.full_rank = full_rank_check(build_dictionary(X, spec))[1]
    data = diagnostics_to_dict(report, tolerance)
    for entry, path in zip(data["sources"], csvs):
        entry["path"] = str(path)
    _write_json(data, output)
    flagged = 0
    for diag, path in zip(report, csvs):
        notes = []
        if not diag.full_rank:
            notes.append("rank deficient")
        if diag.flags:
            d = diag.flags[0]
            notes.append(f"near degree-{d['degree']} hypersurface (rate {d['rate']:.3g})")
        if notes:
            flagged += 1
            click.echo(f"{path}: " + "; ".join(notes))
    if not flagged:
        click.echo("no sources flagged")
    click.echo(f"diagnostics written to {output}")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="groupsindy", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.Abort:
        click.echo("aborted", err=True)
        return EXIT_USAGE
    except click.ClickException as exc:
        exc.show()
        return EXIT_USAGE
    except (StructuralError, TypeError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_USAGE
    except (IntegrationError, np.linalg.LinAlgError, ReportError, OSError, ArithmeticError) as exc:
        click.echo(f"runtime error: {exc}", err=True)
        return EXIT_RUNTIME
    return 0


if __name__ == "__main__":
    sys.exit(main())
