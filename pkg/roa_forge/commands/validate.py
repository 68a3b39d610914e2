from pathlib import Path

import click

from roa_forge import EXIT_OK, EXIT_USAGE, EXIT_VALIDATION
from roa_forge.commands import report_error
from roa_forge.errors import RoaForgeError
from roa_forge.results import dumps, load_results
from roa_forge.schema import load_run_config
from roa_forge.services.levelset import max_level
from roa_forge.services.lmikit import verify_certificate
from roa_forge.services.simcheck import lyapunov_decrease_check, validate_region


def _fmt(point):
    return '(' + ', '.join(f'{v:.6g}' for v in point) + ')'


def acceptance_tol(spec, index):
    """Tolerance for case `index`, taken from the run config and never from the results file."""
    if 0 <= index < len(spec.cases):
        pinned = spec.cases[index].certificate
        if pinned is not None and pinned.tol is not None:
            return pinned.tol
    return spec.options.verify_tol


def check_members(bundle, spec):
    """Certificate and level checks that need no simulation; returns failure messages."""
    failures = []
    for member in bundle.members:
        est = member.estimate
        tol = acceptance_tol(spec, member.index)
        report = verify_certificate(est.certificate, member.vertices, tol)
        if not report.accepted:
            failures.append(f'case {member.index}: certificate fails at {report.worst} '
                            f'with margin {report.margin:.3e} < {tol:g}')
        level = max_level(est.P_list, est.box)
        if est.k > level.k * (1.0 + 1e-12):
            failures.append(f'case {member.index}: stored k={est.k!r} exceeds the box level {level.k!r}; '
                            f'counterexample {_fmt(level.witness)}')
    return failures


@click.command('validate')
@click.argument('results_path', type=click.Path(dir_okay=False))
@click.argument('config_path', type=click.Path(dir_okay=False))
@click.option('--seed', type=int, help='Seed for validation sampling.')
@click.option('--samples', type=int, help='Number of sampled initial states.')
@click.option('--report', 'report_path', type=click.Path(dir_okay=False), help='Write a JSON validation report.')
@click.pass_context
def validate_cmd(ctx, results_path, config_path, seed, samples, report_path):
    """Re-verify RESULTS_PATH and simulate the system of CONFIG_PATH from inside the union."""
    try:
        bundle = load_results(results_path)
        config = load_run_config(config_path, seed=seed, samples=samples)
    except RoaForgeError as exc:
        report_error(exc)
        ctx.exit(EXIT_USAGE)
    system = config.spec.system
    if system.dim != bundle.dim:
        click.echo(f'error: results are {bundle.dim}-dimensional, config system is {system.dim}-dimensional',
                   err=True)
        ctx.exit(EXIT_USAGE)
    if not bundle.members:
        click.echo('error: results contain no certified member', err=True)
        ctx.exit(EXIT_VALIDATION)

    failures = check_members(bundle, config.spec)
    settings = config.validation
    sim = dict(dt=settings.dt, horizon=settings.horizon, conv_radius=settings.conv_radius)

    report = validate_region(bundle.region, system, settings.samples, settings.seed, **sim)
    click.echo(f'simulation: {report.converged}/{report.tested} converged, '
               f'{report.left_boxes} left every modeling box')
    if not report.passed:
        point = report.failures[0] if report.failures else None
        failures.append(f'trajectory from {_fmt(point) if point else "nowhere"} did not converge '
                        f'({report.exit_reasons})')

    decrease = {}
    for member in bundle.members:
        decrease[member.index] = check = lyapunov_decrease_check(
            member.estimate, system, settings.samples, settings.seed, **sim)
        if not check.passed:
            failures.append(f'case {member.index}: V increases by up to {check.max_delta:.3e} along the '
                            f'trajectory from {_fmt(check.worst_point)}')

    if report_path:
        doc = {
            'passed': not failures,
            'failures': failures,
            'simulation': report.to_dict(),
            'decrease': [dict(check.to_dict(), index=index) for index, check in decrease.items()],
        }
        try:
            Path(report_path).write_text(dumps(doc))
        except OSError as exc:
            click.echo(f'error: cannot write report: {exc}', err=True)
            ctx.exit(EXIT_USAGE)

    if failures:
        for message in failures:
            click.echo(f'FAIL {message}', err=True)
        ctx.exit(EXIT_VALIDATION)
    click.echo(f'validated {len(bundle.members)} member(s)')
    ctx.exit(EXIT_OK)
