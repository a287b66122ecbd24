"""Validity report and metric score records."""

from enum import auto
from typing import Dict, Optional, Tuple

from attr import define, field
from strenum import StrEnum


class CheckId(StrEnum):
    """Named validity checks, in report order."""

    horizon_bounds = auto()
    step_count = auto()
    hidden_boundary = auto()
    required_columns = auto()
    row_count = auto()
    id_alignment = auto()
    duplicates = auto()
    missing_values = auto()
    sign = auto()
    magnitude = auto()


class MetricId(StrEnum):
    """Supported point-forecast metrics."""

    rmsle = auto()
    mae = auto()
    rmse = auto()


@define(frozen=True)
class CheckResult:
    """Outcome of one validity check."""

    PASS = "PASS"
    FAIL = "FAIL"

    check_id: CheckId = field(converter=CheckId)
    passed: bool
    detail: str = ""

    def to_line(self) -> str:
        """Render as ``id status detail``."""
        status = self.PASS if self.passed else self.FAIL
        return f"{self.check_id} {status} {self.detail or '-'}"

    @classmethod
    def from_line(cls, line: str) -> "CheckResult":
        """Parse one report line."""
        parts = line.strip().split(" ", 2)
        if len(parts) < 2 or parts[1] not in (cls.PASS, cls.FAIL):
            raise ValueError(f"malformed report line {line!r}")
        detail = parts[2] if len(parts) == 3 else ""
        return cls(
            check_id=parts[0],
            passed=parts[1] == cls.PASS,
            detail="" if detail == "-" else detail,
        )


@define(frozen=True)
class ValidityReport:
    """Ordered list of validity check results."""

    EMPTY_WARNING = "no validity checks recorded"

    checks: Tuple[CheckResult, ...] = field(converter=tuple, factory=tuple)

    def __attrs_post_init__(self):
        """Enforce unique check ids and failure details."""
        seen = set()
        for check in self.checks:
            if check.check_id in seen:
                raise ValueError(f"check {check.check_id} reported twice")
            seen.add(check.check_id)
            if not check.passed and not check.detail:
                raise ValueError(f"failed check {check.check_id} carries no detail")

    @property
    def passed(self) -> bool:
        """Whether every recorded check passed (vacuously true when empty)."""
        return all(check.passed for check in self.checks)

    @property
    def failures(self) -> Tuple[CheckResult, ...]:
        """Return the failed checks."""
        return tuple(check for check in self.checks if not check.passed)

    @property
    def warnings(self) -> Tuple[str, ...]:
        """Return report-level warnings."""
        return (self.EMPTY_WARNING,) if not self.checks else ()

    def get(self, check_id: CheckId) -> Optional[CheckResult]:
        """Return the result for ``check_id`` if present."""
        for check in self.checks:
            if check.check_id == check_id:
                return check
        return None

    def to_text(self) -> str:
        """Render the line-oriented report block."""
        lines = [check.to_line() for check in self.checks]
        lines.extend(f"# warning: {warning}" for warning in self.warnings)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ValidityReport":
        """Parse a report block produced by :meth:`to_text`."""
        checks = [
            CheckResult.from_line(line)
            for line in text.splitlines()
            if line.strip() and not line.startswith("#")
        ]
        return cls(checks=checks)

    def to_dict(self) -> list:
        """Return a JSON-ready list."""
        return [{"check_id": str(c.check_id), "passed": c.passed, "detail": c.detail} for c in self.checks]

    @classmethod
    def from_dict(cls, data: list) -> "ValidityReport":
        """Build from :meth:`to_dict` output."""
        return cls(checks=[CheckResult(**item) for item in data])


def _metric_map(values) -> Dict[MetricId, float]:
    return {MetricId(key): float(value) for key, value in dict(values).items()}


@define(frozen=True)
class MetricScores:
    """Scored metrics of an admissible candidate."""

    values: Dict[MetricId, float] = field(converter=_metric_map)
    primary: MetricId = field(converter=MetricId)
    n: int = field()

    @n.validator
    def _check_n(self, attribute, value):
        if value < 1:
            raise ValueError("scored pair count must be positive")

    def __attrs_post_init__(self):
        """Ensure the primary metric was computed."""
        if self.primary not in self.values:
            raise ValueError(f"primary metric {self.primary} not scored")

    @property
    def primary_value(self) -> float:
        """Return the ranking score."""
        return self.values[self.primary]

    def to_text(self) -> str:
        """Render one ``metric value`` line per metric, primary first."""
        order = [self.primary] + [m for m in self.values if m != self.primary]
        return "".join(f"{metric} {self.values[metric]!r}\n" for metric in order)

    def to_dict(self) -> dict:
        """Return a JSON-ready dict."""
        return {
            "values": {str(k): v for k, v in self.values.items()},
            "primary": str(self.primary),
            "n": self.n,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MetricScores":
        """Build from :meth:`to_dict` output."""
        return cls(values=data["values"], primary=data["primary"], n=data["n"])
