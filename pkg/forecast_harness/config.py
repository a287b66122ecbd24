"""Run configuration for the governed loop."""

import dataclasses
import json
import logging
from pathlib import Path
from typing import Optional, Union

from .errors import ConfigError

logger = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True)
class HarnessConfig:
    """Budget, forecaster and client settings of one run."""

    time_budget: float = 300.0  # seconds
    max_rounds: int = 8
    ses_alpha: float = 0.3
    median_window: int = 7
    lag_steps: int = 7
    fixation_threshold: int = 3
    http_timeout: float = 15.0  # seconds
    http_retries: int = 3
    submission_label: str = "harness"
    seed: int = 0

    def __post_init__(self):
        """Check value ranges."""
        if self.time_budget <= 0:
            raise ConfigError(f"time_budget must be positive, got {self.time_budget}")
        if self.max_rounds < 1:
            raise ConfigError(f"max_rounds must be at least 1, got {self.max_rounds}")
        if not 0.0 < self.ses_alpha <= 1.0:
            raise ConfigError(f"ses_alpha must lie in (0, 1], got {self.ses_alpha}")
        for name in ("median_window", "lag_steps", "fixation_threshold", "http_retries"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1, got {getattr(self, name)}")
        if not self.submission_label:
            raise ConfigError("submission_label must not be empty")

    @classmethod
    def load(cls, path: Optional[Union[str, Path]] = None) -> "HarnessConfig":
        """Read a JSON config file, or return the defaults when ``path`` is None."""
        if path is None:
            return cls()
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, ValueError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        try:
            config = cls(**data)
        except TypeError as e:
            raise ConfigError(str(e)) from None
        logger.debug(f"loaded config from {path}")
        return config

    def to_dict(self) -> dict:
        """Return the settings as a plain dict."""
        return dataclasses.asdict(self)
