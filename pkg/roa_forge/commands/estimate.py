import logging

import click

from roa_forge import EXIT_INFEASIBLE, EXIT_OK, EXIT_USAGE
from roa_forge.commands import parse_lambda_grid, report_error
from roa_forge.config import Config
from roa_forge.errors import AllCasesFailedError, RoaForgeError
from roa_forge.results import build_results, write_results
from roa_forge.schema import load_run_config, with_results_path
from roa_forge.services.pipeline import RoaPipeline, area_comparison, union_from_outcomes

logger = logging.getLogger(__name__)


@click.command('estimate')
@click.argument('config_path', type=click.Path(dir_okay=False))
@click.option('--seed', type=int, help='Seed for every sampling stage.')
@click.option('--lambda-grid', help='Comma-separated coupling grid, e.g. 0,0.1,1.')
@click.option('--samples', type=int, help='Monte Carlo area and validation sample count.')
@click.option('--results', 'results_path', type=click.Path(dir_okay=False), help='Results file to write.')
@click.pass_context
def estimate_cmd(ctx, config_path, seed, lambda_grid, samples, results_path):
    """Run every case of CONFIG_PATH and write the union estimate."""
    try:
        config = load_run_config(config_path, seed, parse_lambda_grid(lambda_grid), samples)
    except RoaForgeError as exc:
        report_error(exc)
        ctx.exit(EXIT_USAGE)
    if results_path:
        config = with_results_path(config, results_path)

    outcomes = RoaPipeline(config.spec.options, Config.THREADS).run_all(config.spec)
    for outcome in outcomes:
        if outcome.success:
            est = outcome.estimate
            approx = ' (approximate)' if est.approximate else ''
            click.echo(f'case {outcome.index} [{outcome.label}]: k = {est.k:.6g}{approx}, '
                       f'lambdas = {list(est.certificate.lambdas)}, margin = {est.certificate.margin:.3e}')
        else:
            click.echo(f'case {outcome.index} [{outcome.label}] failed at stage {outcome.stage}: '
                       f'{outcome.message}', err=True)

    try:
        region = union_from_outcomes(outcomes)
    except AllCasesFailedError as exc:
        report_error(exc)
        _write(ctx, config, build_results(config, outcomes))
        ctx.exit(EXIT_INFEASIBLE)

    union = members = comparison = None
    if region.dim == 2:
        union, members, comparison = area_comparison(
            region, config.validation.area_samples, config.validation.seed)
        click.echo(f'area: union {union.area:.5f} +/- {union.half_width:.5f}, '
                   f'first member {members[0].area:.5f} +/- {members[0].half_width:.5f}')
    else:
        logger.info('skipping area estimates for a %d-dimensional region', region.dim)

    path = _write(ctx, config, build_results(config, outcomes, union, members, comparison))
    click.echo(f'results: {path}')
    ctx.exit(EXIT_OK)


def _write(ctx, config, doc):
    try:
        return write_results(config.outputs.results, doc)
    except (OSError, RoaForgeError) as exc:
        click.echo(f'error: cannot write results: {exc}', err=True)
        ctx.exit(EXIT_USAGE)
