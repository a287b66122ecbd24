"""Commands that build a local task and check submissions offline."""

import datetime
import logging
from pathlib import Path
from typing import Dict, FrozenSet, Optional, Tuple

import click

from ..data.reconstruction import (
    PUBLIC_DIR,
    TEST_FILE,
    TRAIN_FILE,
    SliceSpec,
    build_reconstruction,
    derive_task_file,
    read_hidden_truth,
    write_reconstruction,
)
from ..data.synthetic import FAMILIES, generate_store_sales
from ..data.table import STORE_SALES_SCHEMA, ColumnRole, ingest_table, read_csv_strings
from ..errors import InconsistentDates
from ..task.codec import parse_task_file
from ..task.model import TaskFile
from ..validation.gate import evaluate, validate_against_skeleton
from .config import CliConfig
from .errors import EXIT_FAILURE, report_errors

logger = logging.getLogger(__name__)

DEFAULT_HIDDEN = "2017-07-31:2017-08-15"
DEFAULT_STORES = "1-5"
DEFAULT_TIMEZONE = "America/Guayaquil"

# companion tables cut at the cutoff unless told otherwise
TRUNCATED_AUXILIARY = ("oil.csv", "transactions.csv")
FULL_SPAN_AUXILIARY = ("holidays_events.csv", "stores.csv")

FAMILY_COLUMN = next(column for column, role in STORE_SALES_SCHEMA.items() if role == ColumnRole.family)


def _date(value: str, name: str) -> datetime.date:
    try:
        return datetime.date.fromisoformat(value)
    except ValueError:
        raise click.BadParameter(f"{value!r} is not YYYY-MM-DD", param_hint=name) from None


def parse_stores(ctx, param, value: str) -> FrozenSet[int]:
    """Parse ``1-5`` or ``1,3,7`` into store ids."""
    stores = set()
    try:
        for part in value.split(","):
            part = part.strip()
            if "-" in part:
                low, high = (int(bound) for bound in part.split("-", 1))
                stores.update(range(low, high + 1))
            elif part:
                stores.add(int(part))
    except ValueError:
        raise click.BadParameter(f"{value!r} is not a store list such as 1-5 or 1,3") from None
    if not stores or min(stores) <= 0:
        raise click.BadParameter(f"{value!r} selects no positive store id")
    return frozenset(stores)


def parse_window(ctx, param, value: str) -> Tuple[datetime.date, datetime.date]:
    """Parse ``START:END`` into two dates; their order is checked by the slice."""
    start, sep, end = value.partition(":")
    if not sep:
        raise click.BadParameter(f"{value!r} is not START:END")
    return _date(start, "--hidden"), _date(end, "--hidden")


def _read_data_dir(data_dir: Path) -> Dict[str, bytes]:
    return {path.name: path.read_bytes() for path in sorted(data_dir.glob("*.csv"))}


def _first_families(raw_files: Dict[str, bytes], count: Optional[int]) -> Optional[FrozenSet[str]]:
    if count is None or TRAIN_FILE not in raw_files:
        return None
    families = sorted(set(read_csv_strings(raw_files[TRAIN_FILE])[FAMILY_COLUMN]))
    return frozenset(families[:count])


def read_task(path: Path) -> TaskFile:
    """Parse a task file from disk."""
    return parse_task_file(Path(path).read_text(encoding="utf-8"))


@click.command("reconstruct")
@click.option("--data-dir", type=click.Path(exists=True, file_okay=False, path_type=Path),
              help="Directory holding the raw competition CSV files.")
@click.option("--synthetic", is_flag=True, help="Generate the raw files from the seed instead.")
@click.option("--stores", default=DEFAULT_STORES, show_default=True, callback=parse_stores,
              help="Store ids to keep, as a range or a comma list.")
@click.option("--families", type=click.IntRange(min=1), help="Keep only the first N product families.")
@click.option("--cutoff", help="Last public training date; defaults to the day before the hidden window.")
@click.option("--hidden", default=DEFAULT_HIDDEN, show_default=True, callback=parse_window,
              help="Inclusive hidden window as START:END.")
@click.option("--max-submissions", type=click.IntRange(min=1), help="Submission limit written into the task.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False, path_type=Path),
              help="Directory that receives the reconstruction.")
@click.option("--seed", type=int, help="Seed for --synthetic; defaults to the global seed.")
@click.pass_obj
@report_errors
def reconstruct(config: CliConfig, data_dir, synthetic, stores, families, cutoff, hidden, max_submissions, out_dir,
                seed):
    """Build a local task with a sealed hidden window."""
    hidden_start, hidden_end = hidden
    cutoff = _date(cutoff, "--cutoff") if cutoff else hidden_start - datetime.timedelta(days=1)
    if not synthetic:
        data_dir = data_dir or config.data_dir
    if synthetic and data_dir is not None:
        raise click.UsageError("give at most one of --data-dir and --synthetic")
    if data_dir is None:
        logger.info("no data directory given, generating the synthetic fixture")
        synthetic = True
    if hidden_start > hidden_end:
        raise InconsistentDates(f"hidden window {hidden_start}..{hidden_end} is empty")

    if synthetic:
        seed = config.seed if seed is None else seed
        raw_files = generate_store_sales(seed, stores=sorted(stores), family_count=families or len(FAMILIES),
                                         end=hidden_end)
        family_filter = None
    else:
        raw_files = _read_data_dir(data_dir)
        family_filter = _first_families(raw_files, families)

    spec = SliceSpec(
        store_ids=stores,
        public_train_end=cutoff,
        hidden_start=hidden_start,
        hidden_end=hidden_end,
        families=family_filter,
        auxiliary_truncation={name: cutoff for name in TRUNCATED_AUXILIARY if name in raw_files},
        auxiliary_full_span=[name for name in FULL_SPAN_AUXILIARY if name in raw_files],
    )
    result = build_reconstruction(raw_files, spec, timezone=DEFAULT_TIMEZONE)
    task = derive_task_file(result, spec, timezone=DEFAULT_TIMEZONE, max_submissions=max_submissions)
    manifest = write_reconstruction(result, task, out_dir)
    logger.info(f"reconstruction of stores {sorted(stores)} written to {out_dir}")
    click.echo(f"manifest {manifest}")
    click.echo(f"hidden_rows {len(result.hidden_truth)}")


@click.command("validate")
@click.argument("task_file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.argument("submission", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--skeleton", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Public test skeleton; defaults to public/test.csv next to the task file.")
@click.option("--history", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Public training file for the magnitude check.")
@report_errors
def validate(task_file, submission, skeleton, history):
    """Check a submission offline and print the validity report."""
    task = read_task(task_file)
    skeleton = skeleton or task_file.parent / PUBLIC_DIR / TEST_FILE
    if not skeleton.is_file():
        raise click.BadParameter(f"{skeleton} does not exist", param_hint="--skeleton")
    history_table = ingest_table(history.read_bytes(), timezone=task.scope.timezone) if history else None
    report = validate_against_skeleton(submission.read_bytes(), task, skeleton.read_bytes(), history_table)
    click.echo(report.to_text(), nl=False)
    if not report.passed:
        raise SystemExit(EXIT_FAILURE)


@click.command("score")
@click.argument("task_file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.argument("submission", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.argument("truth", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@report_errors
def score(task_file, submission, truth):
    """Score an admissible submission against a sealed truth file."""
    task = read_task(task_file)
    truth_table = read_hidden_truth(truth, task.scope.history_end)
    history = task_file.parent / PUBLIC_DIR / TRAIN_FILE
    history_table = ingest_table(history.read_bytes(), timezone=task.scope.timezone) if history.is_file() else None
    outcome = evaluate(submission.read_bytes(), task, truth_table, history_table)
    if outcome.scores is None:
        click.echo(outcome.validity.to_text(), nl=False)
        raise SystemExit(EXIT_FAILURE)
    click.echo(outcome.scores.to_text(), nl=False)
