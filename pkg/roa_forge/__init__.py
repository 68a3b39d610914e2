import logging
import sys

import click

from roa_forge.config import Config

LOG_FORMAT = '[%(levelname)s - %(name)s] %(message)s'

# Exit codes
EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INFEASIBLE = 2
EXIT_VALIDATION = 3


def configure_logging(level=None):
    level = (level or Config.LOG_LEVEL).upper()
    root = logging.getLogger('roa_forge')
    root.setLevel(getattr(logging, level, logging.WARNING))
    # rebind to the current stderr on every invocation
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(handler)


class RoaForgeGroup(click.Group):
    """Command group whose usage errors exit with 1, leaving 2 for infeasible runs."""

    def main(self, *args, **kwargs):
        kwargs['standalone_mode'] = False
        try:
            rv = super().main(*args, **kwargs)
        except click.ClickException as exc:
            exc.show()
            sys.exit(EXIT_USAGE)
        except click.Abort:
            click.echo('Aborted!', err=True)
            sys.exit(EXIT_USAGE)
        sys.exit(rv if isinstance(rv, int) else EXIT_OK)


def create_app():
    @click.group(cls=RoaForgeGroup)
    @click.option('--log-level', default=None, help='Overrides ROA_FORGE_LOG_LEVEL.')
    def app(log_level):
        """Region-of-attraction estimates from transformed TS models and PWQ Lyapunov functions."""
        configure_logging(log_level)

    # Register commands
    from roa_forge.commands.estimate import estimate_cmd
    from roa_forge.commands.validate import validate_cmd
    from roa_forge.commands.render import render_cmd

    app.add_command(estimate_cmd)
    app.add_command(validate_cmd)
    app.add_command(render_cmd)

    return app


def main():
    create_app()(prog_name='roa-forge')
