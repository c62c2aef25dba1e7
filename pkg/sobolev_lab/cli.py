"""
Command line entry point.

    python -m sobolev_lab verify --config sobolev_lab/config/green.json
    python -m sobolev_lab converge --config sobolev_lab/config/radial_singular.json --min-level 2 --max-level 6
    python -m sobolev_lab list-checks
    python -m sobolev_lab list-families

Exit codes: 0 when every applicable check holds, 1 when one fails or a
computation breaks down, 2 for an invalid config or input the lab rejects, such as a
non-elliptic operator.
"""

import logging
import sys

import click
import click_log
from dotenv import load_dotenv
from rich.console import Console
from rich.table import Table

from sobolev_lab import runner
from sobolev_lab.errors import (ConfigError, ConstructionError, DomainError, EllipticityViolation, ExpressionError,
                                LabError)
from sobolev_lab.models import CHECK_NAMES
from sobolev_lab.operator import MatrixKind
from sobolev_lab.settings import get_settings
from sobolev_lab.testfn import TestFamily
from sobolev_lab.weights import NormalizationKind, WeightFamily

logger = logging.getLogger("sobolev_lab")
click_log.basic_config(logger)

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2
INPUT_ERRORS = (ConfigError, ConstructionError, DomainError, EllipticityViolation, ExpressionError)

CHECK_HELP = {
    "identity": "I^2 = JP + Jdiv + Θ under quadrature refinement",
    "identity-restricted": "identity with integrals over {0 < u < B}",
    "ineq-divfree": "I^2 <= ∫|Pu||H(u)| + Θ when div A = 0",
    "ineq-general": "I^2 <= d_A ∫G_H(u) + 2∫|Pu||H(u)| + 2Θ",
    "theta-trace": "-Θ <= d_A/4 ∫G_H(u) + ∫|Pu||H(u)|",
    "sign-simplification": "Θ <= 0, div-term >= 0 and I^2 <= ∫|Pu||H(u)| under sign conditions",
    "opial": "Opial-type bounds with C_P and C_H~",
    "gh-bound": "∫G_H(u) <= Γ I^2",
    "simplified": "I^2 <= (∫|Pu||H(u)| + Θ)/(1 - κ) for 0 < κ < 1",
    "chain-rule": "∫|P(H~(u))| <= ∫|H(u)Pu| + ∫h(u)||∇u||_A^2",
    "metafune": "∫ g(u)|g(u)|^{p-2} Δu = -(p-1) ∫ ||∇u||^2 g'(u)|g(u)|^{p-2}",
    "trace-constancy": "the boundary trace of u is one constant T in [0, B]",
    "tangential-gradient": "∇v is normal on the boundary when v vanishes there",
    "pointwise": "P(H~(u)) = h(u)||∇u||_A^2 + H(u)Pu by finite differences",
    "douglas": "Douglas energy against its Fourier form and the Dirichlet energy",
    "theta-representation": "Θ against its Sobolev-Bregman representation (P = Δ)",
}


def _fail_input(e: LabError) -> None:
    kind = "config" if isinstance(e, ConfigError) else "input"
    click.echo(f"✗ invalid {kind}: {e}", err=True)
    sys.exit(EXIT_CONFIG)


@click.group()
@click_log.simple_verbosity_option(logger, default=get_settings().log_level)
def cli():
    """Numerical verification of weighted Sobolev identities for non-divergent elliptic operators."""
    load_dotenv()


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False), help="Experiment JSON file")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None, help="Report path (default: stdout)")
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default=None, help="Report format")
@click.option("--timings", is_flag=True, help="Include wall times (reports are no longer byte-stable)")
def verify(config_path, out_path, fmt, timings):
    """Run every check of an experiment and emit the run report."""
    try:
        config = runner.load_config(config_path)
        report = runner.run_experiment(runner.build_experiment(config), timings=timings)
    except INPUT_ERRORS as e:
        _fail_input(e)
    except LabError as e:
        click.echo(f"✗ {e}", err=True)
        sys.exit(EXIT_FAILED)
    fmt = fmt or config.output.format
    out_path = out_path or config.output.path
    text = runner.emit_report(report, fmt, out_path)
    if out_path is None:
        click.echo(text, nl=False)
    sys.exit(EXIT_OK if report.verdict == "pass" else EXIT_FAILED)


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False), help="Experiment JSON file")
@click.option("--min-level", type=int, required=True)
@click.option("--max-level", type=int, required=True)
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), default=None, help="Also write the table as CSV")
def converge(config_path, min_level, max_level, csv_path):
    """Per-level terms and empirical convergence orders."""
    try:
        table = runner.convergence_study(runner.load_config(config_path), min_level, max_level)
    except INPUT_ERRORS as e:
        _fail_input(e)
    except LabError as e:
        click.echo(f"✗ {e}", err=True)
        sys.exit(EXIT_FAILED)

    rich_table = Table(title=f"convergence: {config_path}")
    for column in table.columns:
        rich_table.add_column(str(column), justify="right")
    for row in table.itertuples(index=False):
        rich_table.add_row(*(f"{v:.10g}" if isinstance(v, float) else str(v) for v in row))
    Console().print(rich_table)
    if csv_path:
        table.to_csv(csv_path, index=False, float_format="%.17g", lineterminator="\n")
        logger.info(f"✓ Table written to {csv_path}")


@cli.command("list-checks")
def list_checks():
    """Check names usable in experiment configs."""
    table = Table(title="checks")
    table.add_column("name", no_wrap=True)
    table.add_column("verifies")
    for name in CHECK_NAMES:
        table.add_row(name, CHECK_HELP[name])
    Console().print(table)


@cli.command("list-families")
def list_families():
    """Weight families, normalizations, test-function families and operator kinds."""
    table = Table(title="families")
    table.add_column("kind", no_wrap=True)
    table.add_column("names")
    for label, enum in (("weight", WeightFamily), ("normalization", NormalizationKind),
                        ("function", TestFamily), ("operator", MatrixKind)):
        table.add_row(label, ", ".join(member.value for member in enum))
    table.add_row("domain", "ball, box")
    table.add_row("boundary data", "trig-polynomial, closed-form")
    Console().print(table)


def main():
    cli()


if __name__ == "__main__":
    main()
