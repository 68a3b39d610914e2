import click

from roa_forge.errors import ConfigError


def parse_lambda_grid(text):
    """'0,0.1,1' -> (0.0, 0.1, 1.0)"""
    if text is None:
        return None
    try:
        return tuple(float(v) for v in text.split(',') if v.strip())
    except ValueError as exc:
        raise ConfigError(f'not a comma-separated list of numbers: {text!r}', field='--lambda-grid') from exc


def report_error(exc):
    click.echo(f'error [{exc.stage}]: {exc}', err=True)
