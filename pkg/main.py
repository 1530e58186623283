import click
import pandas as pd

from eigen_calculator import COMPARISONS, MODES, compare, run, run_config_from
from femref import DEFAULT_SHIFT
from optimizer import OPTIMIZERS
from problems import KERNEL_SIGN_CONVENTIONS, PROBLEM_IDS, constants_table
from solver import GRADIENT_MODES
from utils import ConfigError, EigenSolverError, configure_logging, dump_config, load_config, save_results_to_csv

EXIT_NOT_CONVERGED = 1
EXIT_INVALID_CONFIG = 2


def _fail(ctx, error, code):
    click.echo(f"Error: {error}", err=True)
    ctx.exit(code)


def _resolve_config(config_path, overrides):
    """Config file values, overridden by every flag given on the command line."""
    values = load_config(config_path) if config_path else {}
    values.update({key: value for key, value in overrides.items() if value is not None})
    return run_config_from(values)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log at DEBUG level.")
def cli(verbose):
    """Neural-network collocation eigensolver with a finite-element reference."""
    configure_logging(verbose)


@cli.command("run")
@click.option("--problem", type=click.Choice(PROBLEM_IDS), help="Benchmark problem id.")
@click.option("--mode", type=click.Choice(MODES), help="collocation (default), variational or fem.")
@click.option("--levels", type=int, help="Number of levels, ground state first.")
@click.option("--seed", type=int, help="Seed of the restart sequence.")
@click.option("--restarts", type=int, help="Random restarts per level.")
@click.option("--hidden-units", type=int, help="Hidden units of the trial network.")
@click.option("--grid", type=int, help="Collocation points per axis.")
@click.option("--mesh", type=int, help="Elements per axis for --mode fem (every reference mesh size when omitted).")
@click.option("--optimizer", type=click.Choice(OPTIMIZERS))
@click.option("--max-iterations", type=int)
@click.option("--gradient-mode", type=click.Choice(GRADIENT_MODES))
@click.option("--kernel-signs", type=click.Choice(tuple(KERNEL_SIGN_CONVENTIONS)),
              help="Sign convention of the n-alpha kernel.")
@click.option("--kernel-scan", is_flag=True, default=None, help="Also solve n-alpha under every sign convention.")
@click.option("--shift", type=float, help=f"FEM shift (default {DEFAULT_SHIFT}).")
@click.option("--out", type=click.Path(file_okay=False), help="Output directory.")
@click.option("--deterministic/--nondeterministic", default=None,
              help="Ordered (reproducible) reductions; on by default.")
@click.option("--plots", is_flag=True, default=None, help="Also write html figures.")
@click.option("--dump-matrices", is_flag=True, default=None, help="Write the FEM matrices of the finest mesh.")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="Flat TOML file with run settings; flags override it.")
@click.option("--dump-config", is_flag=True, help="Print the effective configuration and exit.")
@click.pass_context
def run_command(ctx, config_path, **overrides):
    """Solve one benchmark and write its artifacts."""
    dump_only = overrides.pop("dump_config")
    try:
        config = _resolve_config(config_path, overrides)
    except ConfigError as e:
        _fail(ctx, e, EXIT_INVALID_CONFIG)

    if dump_only:
        click.echo(dump_config(config.effective_dict()), nl=False)
        return

    try:
        status = run(config)
    except ConfigError as e:
        _fail(ctx, e, EXIT_INVALID_CONFIG)
    except EigenSolverError as e:
        _fail(ctx, e, EXIT_NOT_CONVERGED)

    click.echo(f"Results saved to {config.out}")
    if status != 0:
        click.echo("Warning: at least one level did not converge, see eigenvalues.csv", err=True)
    ctx.exit(status)


@cli.command("compare")
@click.option("--problem", "which", type=click.Choice(COMPARISONS), default="henon-heiles", show_default=True)
@click.option("--levels", type=int, help="Levels compared (henon-heiles).")
@click.option("--seed", type=int)
@click.option("--restarts", type=int)
@click.option("--hidden-units", type=int)
@click.option("--grid", type=int)
@click.option("--mesh", type=int, help="FEM elements per axis (default 29).")
@click.option("--out", type=click.Path(file_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def compare_command(ctx, which, config_path, **overrides):
    """Neural collocation against FEM (henon-heiles) or Schrodinger against Dirac (muonic)."""
    overrides["problem"] = "henon-heiles" if which == "henon-heiles" else "muonic-schrodinger"
    try:
        config = _resolve_config(config_path, overrides)
        report = compare(config, which)
    except ConfigError as e:
        _fail(ctx, e, EXIT_INVALID_CONFIG)
    except EigenSolverError as e:
        _fail(ctx, e, EXIT_NOT_CONVERGED)
    click.echo(report.to_string(index=False))


@cli.command("constants")
@click.option("--out", type=click.Path(dir_okay=False), help="Also write the table to this csv file.")
def constants_command(out):
    """Print every physical constant and parameter of the problem catalog."""
    rows = constants_table()
    click.echo(pd.DataFrame(rows).to_string(index=False))
    if out:
        save_results_to_csv(rows, out)


if __name__ == "__main__":
    cli()
