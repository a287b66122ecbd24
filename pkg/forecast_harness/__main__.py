"""Main entry point for the forecast harness."""

import logging
import os

import click

from . import __version__
from .cli.config import CliConfig, default_run_dir
from .cli.run import replay, report, run, serve
from .cli.task import reconstruct, score, validate

DEBUG_ENV = "FORECAST_HARNESS_DEBUG"
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

# aiohttp access lines drown the run log below WARNING
QUIET_LOGGERS = ("aiohttp.access", "matplotlib", "PIL")


def setup_logging(debug: bool = False):
    """Configure the root logger once per process."""
    logging.basicConfig(level=logging.DEBUG if debug else logging.INFO, format=LOG_FORMAT)
    for name in QUIET_LOGGERS:
        logging.getLogger(name).setLevel(logging.WARNING)


def _debug_from_env() -> bool:
    return os.environ.get(DEBUG_ENV, "").lower() in ("1", "true", "yes")


@click.group()
@click.version_option(__version__, prog_name="forecast-harness")
@click.option("--debug", is_flag=True, default=_debug_from_env, help=f"Verbose logging; also set by {DEBUG_ENV}=true.")
@click.option("--run-dir", type=click.Path(file_okay=False), default=default_run_dir,
              help="Run directory; defaults to $FORECAST_HARNESS_RUN_DIR or ./run.")
@click.option("--port", type=click.IntRange(min=0, max=65535), default=0, help="Port for hosted endpoints.")
@click.option("--seed", type=int, default=0, help="Global seed.")
@click.option("--task-file", type=click.Path(dir_okay=False), help="Default task file.")
@click.option("--data-dir", type=click.Path(file_okay=False), help="Default raw data directory.")
@click.pass_context
def cli(ctx, debug, run_dir, port, seed, task_file, data_dir):
    """Governed forecasting harness over a reconstructed competition."""
    setup_logging(debug)
    ctx.obj = CliConfig(run_dir=run_dir, port=port, seed=seed, task_file=task_file, data_dir=data_dir)


for command in (reconstruct, serve, validate, score, run, replay, report):
    cli.add_command(command)


def main():
    """Run the command line interface."""
    cli(prog_name="forecast-harness")


if __name__ == "__main__":
    main()
