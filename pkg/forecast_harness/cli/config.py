"""Settings shared by every command."""

import os
from pathlib import Path
from typing import Optional

import attr

RUN_DIR_ENV = "FORECAST_HARNESS_RUN_DIR"
DEFAULT_RUN_DIR = "run"


def default_run_dir() -> Path:
    """Return the run directory from the environment, else ``./run``."""
    return Path(os.environ.get(RUN_DIR_ENV) or DEFAULT_RUN_DIR)


@attr.s(frozen=True)
class CliConfig:
    """Options given before the command name."""

    run_dir = attr.ib(type=Path, factory=default_run_dir, converter=Path)
    port = attr.ib(type=int, default=0)
    seed = attr.ib(type=int, default=0)
    task_file = attr.ib(type=Optional[Path], default=None, converter=attr.converters.optional(Path))
    data_dir = attr.ib(type=Optional[Path], default=None, converter=attr.converters.optional(Path))

    def ensure_run_dir(self) -> Path:
        """Create the run directory when missing and return it."""
        self.run_dir.mkdir(parents=True, exist_ok=True)
        return self.run_dir
