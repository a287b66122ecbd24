"""Commands that host the competition endpoint and drive governed runs."""

import asyncio
import logging
from pathlib import Path
from typing import Optional

import click

from ..config import HarnessConfig
from ..data.reconstruction import load_reconstruction
from ..orchestration.loop import RunOutcome, run_governed_loop
from ..orchestration.report import render_report
from ..orchestration.roles import CANDIDATE_SPECS, DEFAULT_CANDIDATES, scripted_roles
from ..protocol.events import replay_file
from ..server.app import TaskServer
from ..server.state import SUBMISSION_LOG_FILE, TaskServerState
from .config import CliConfig
from .errors import report_errors
from .task import read_task

logger = logging.getLogger(__name__)


def parse_candidates(ctx, param, value: str):
    """Map a comma list of strategy names onto candidate specs."""
    names = [name.strip() for name in value.split(",") if name.strip()]
    unknown = [name for name in names if name not in CANDIDATE_SPECS]
    if unknown or not names:
        raise click.BadParameter(
            f"unknown candidates {', '.join(unknown) or '(none given)'}; choose from {', '.join(CANDIDATE_SPECS)}",
        )
    return tuple(CANDIDATE_SPECS[name] for name in names)


async def serve_until_cancelled(state: TaskServerState, port: int):
    """Serve ``state`` until the task is cancelled."""
    async with TaskServer(state, port=port) as server:
        click.echo(f"serving horizon {state.task.scope.horizon_start} at {server.endpoint}")
        await asyncio.Event().wait()


@click.command("serve")
@click.argument("out_dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--port", type=click.IntRange(min=0, max=65535), help="Port to bind; 0 picks a free one.")
@click.pass_obj
@report_errors
def serve(config: CliConfig, out_dir: Path, port: Optional[int]):
    """Host the competition endpoint for a reconstruction."""
    bundle = load_reconstruction(out_dir)
    state = TaskServerState.from_bundle(bundle, log_path=out_dir / SUBMISSION_LOG_FILE)
    try:
        asyncio.run(serve_until_cancelled(state, config.port if port is None else port))
    except KeyboardInterrupt:
        logger.info("server stopped")


async def _run_against(task, endpoint, serve_from, roles, harness, run_dir: Path, port: int) -> RunOutcome:
    if serve_from is None:
        return await run_governed_loop(task, endpoint, roles, harness, run_dir)
    bundle = load_reconstruction(serve_from)
    state = TaskServerState.from_bundle(bundle, log_path=run_dir / SUBMISSION_LOG_FILE)
    async with TaskServer(state, port=port) as server:
        return await run_governed_loop(task, server.endpoint, roles, harness, run_dir)


@click.command("run")
@click.argument("task_file", required=False, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--endpoint", help="Base URL of a running competition endpoint.")
@click.option("--serve-from", type=click.Path(exists=True, file_okay=False, path_type=Path),
              help="Reconstruction to host in-process for this run.")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="JSON file overriding the harness defaults.")
@click.option("--run-dir", type=click.Path(file_okay=False, path_type=Path), help="Where the run writes its files.")
@click.option("--candidates", default=",".join(DEFAULT_CANDIDATES), show_default=True, callback=parse_candidates,
              help="Comma list of strategy lines for the constructor.")
@click.option("--fixture-issues/--no-fixture-issues", default=True, show_default=True,
              help="Let the temporal governor raise its standing review issues.")
@click.pass_obj
@report_errors
def run(config: CliConfig, task_file, endpoint, serve_from, config_path, run_dir, candidates, fixture_issues):
    """Drive a governed run from the task file to a released submission."""
    if (endpoint is None) == (serve_from is None):
        raise click.UsageError("give exactly one of --endpoint and --serve-from")
    task_file = task_file or config.task_file
    if task_file is None:
        raise click.UsageError("no task file given")
    task = read_task(task_file)
    harness = HarnessConfig.load(config_path)
    run_dir = Path(run_dir) if run_dir else config.ensure_run_dir()
    run_dir.mkdir(parents=True, exist_ok=True)
    roles = scripted_roles(fixture_issues=fixture_issues, candidates=candidates)
    outcome = asyncio.run(_run_against(task, endpoint, serve_from, roles, harness, run_dir, config.port))

    final = outcome.final_submission
    click.echo(f"signal {outcome.final_signal.kind}")
    click.echo(f"rounds {outcome.rounds}")
    click.echo(f"leader {outcome.leader}")
    if final:
        click.echo(f"final {final['submitter']} {final['primary_score']!r}")
    click.echo(outcome.statistics.to_table(), nl=False)


@click.command("replay")
@click.argument("events_log", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@report_errors
def replay(events_log: Path):
    """Fold an event log into the protocol state and print it."""
    click.echo(replay_file(events_log).to_text(), nl=False)


@click.command("report")
@click.argument("run_dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@report_errors
def report(run_dir: Path):
    """Print the trace statistics and figure index of a run."""
    click.echo(render_report(run_dir), nl=False)
