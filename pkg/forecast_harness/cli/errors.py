"""Error reporting for commands."""

import functools
import logging
import sys

import click

from ..errors import HarnessError

logger = logging.getLogger(__name__)

EXIT_FAILURE = 1


def report_errors(command):
    """Turn a :class:`HarnessError` into ``error: <code>: <message>`` and exit status 1."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except HarnessError as e:
            logger.debug("command failed", exc_info=True)
            click.echo(f"error: {e.code}: {e}", err=True)
            sys.exit(EXIT_FAILURE)

    return wrapper
