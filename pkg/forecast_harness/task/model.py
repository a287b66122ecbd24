#!/usr/bin/python
# -*- coding: utf-8 -*-
"""Task tuple records: task file, workspace manifest and validation outcome."""

import datetime
import logging
from enum import auto
from typing import Dict, Optional, Tuple

import attr
from strenum import StrEnum

from ..errors import InconsistentDates, InvalidTaskFile, MissingField
from ..validation.report import MetricId, MetricScores, ValidityReport

logger = logging.getLogger(__name__)


class Granularity(StrEnum):
    """Step granularity of a task."""

    daily = auto()


class OutputFormat(StrEnum):
    """Submission container format."""

    csv = auto()


class OrderingRule(StrEnum):
    """Row ordering required of a submission."""

    by_id_ascending = auto()
    by_entity_then_date = auto()
    unordered = auto()


class Direction(StrEnum):
    """Optimisation direction of a metric."""

    lower_better = auto()


class FileRole(StrEnum):
    """Role of a file exposed in the workspace."""

    train = auto()
    test_skeleton = auto()
    auxiliary = auto()
    metadata = auto()


STEP = {
    Granularity.daily: datetime.timedelta(days=1),
}


def date_range(start: datetime.date, end: datetime.date, granularity: Granularity = Granularity.daily):
    """Return every step date in ``[start, end]``."""
    step = STEP[granularity]
    dates = []
    current = start
    while current <= end:
        dates.append(current)
        current += step
    return tuple(dates)


@attr.s(frozen=True)
class AccessScope:
    """Visible history and hidden target window."""

    history_start = attr.ib(type=datetime.date)
    history_end = attr.ib(type=datetime.date)
    horizon_start = attr.ib(type=datetime.date)
    horizon_end = attr.ib(type=datetime.date)
    step_count = attr.ib(type=int)
    granularity = attr.ib(type=Granularity, default=Granularity.daily, converter=Granularity)
    timezone = attr.ib(type=str, default="UTC")

    def __attrs_post_init__(self):
        """Check the date ordering and the declared step count."""
        if self.step_count < 1:
            raise InconsistentDates(f"step_count must be at least 1, got {self.step_count}")
        if self.history_start > self.history_end:
            raise InconsistentDates(f"history starts {self.history_start} after cutoff {self.history_end}")
        if self.history_end >= self.horizon_start:
            raise InconsistentDates(f"cutoff {self.history_end} not before horizon start {self.horizon_start}")
        if self.horizon_start > self.horizon_end:
            raise InconsistentDates(f"horizon starts {self.horizon_start} after it ends {self.horizon_end}")
        steps = len(self.horizon_dates())
        if steps != self.step_count:
            raise InconsistentDates(f"horizon holds {steps} steps, step_count declares {self.step_count}")

    @property
    def cutoff(self) -> datetime.date:
        """Alias for the last visible history date."""
        return self.history_end

    def horizon_dates(self) -> Tuple[datetime.date, ...]:
        """Return the hidden window dates."""
        return date_range(self.horizon_start, self.horizon_end, self.granularity)

    def history_dates(self) -> Tuple[datetime.date, ...]:
        """Return the observation window dates."""
        return date_range(self.history_start, self.history_end, self.granularity)


@attr.s(frozen=True)
class PriorKnowledge:
    """Domain notes carried with the task; never checked."""

    domain_tag = attr.ib(type=str, default="")
    notes = attr.ib(type=Tuple[str, ...], factory=tuple, converter=tuple)
    seasonality_hints = attr.ib(type=Tuple[int, ...], factory=tuple, converter=tuple)


@attr.s(frozen=True)
class OutputForm:
    """Shape of an admissible submission."""

    required_columns = attr.ib(type=Tuple[str, ...], converter=tuple)
    id_column = attr.ib(type=str)
    value_column = attr.ib(type=str)
    required_row_count = attr.ib(type=int)
    ordering_rule = attr.ib(type=OrderingRule, default=OrderingRule.by_id_ascending, converter=OrderingRule)
    format = attr.ib(type=OutputFormat, default=OutputFormat.csv, converter=OutputFormat)

    def __attrs_post_init__(self):
        """Check column membership and the row count sign."""
        for column in (self.id_column, self.value_column):
            if column not in self.required_columns:
                raise MissingField(f"required_columns.{column}")
        if self.required_row_count < 0:
            raise InvalidTaskFile("required_row_count must be non-negative")


@attr.s(frozen=True)
class ConstraintSet:
    """Leakage boundary, submission budget and value constraints."""

    DEFAULT_MAGNITUDE_FACTOR = 100.0

    leakage_boundary = attr.ib(type=datetime.date)
    max_submissions = attr.ib(type=Optional[int], default=None)
    non_negative_values = attr.ib(type=bool, default=True)
    feature_availability_overrides = attr.ib(
        type=Dict[str, datetime.date],
        factory=dict,
        converter=lambda value: dict(sorted(dict(value).items())),
    )
    magnitude_factor = attr.ib(type=float, default=DEFAULT_MAGNITUDE_FACTOR, converter=float)

    def __attrs_post_init__(self):
        """Check the submission budget and magnitude factor."""
        if self.max_submissions is not None and self.max_submissions < 1:
            raise InvalidTaskFile("max_submissions must be positive")
        if self.magnitude_factor <= 0:
            raise InvalidTaskFile("magnitude_factor must be positive")


@attr.s(frozen=True)
class MetricSpec:
    """One evaluation metric."""

    metric_id = attr.ib(type=MetricId, converter=MetricId)
    direction = attr.ib(type=Direction, default=Direction.lower_better, converter=Direction)


@attr.s(frozen=True)
class Endpoints:
    """Wire endpoint descriptor of the competition server."""

    DEFAULT_BASE = "/api"

    base = attr.ib(type=str, default=DEFAULT_BASE)

    def __attrs_post_init__(self):
        """Require an absolute base path without a trailing slash."""
        if not self.base.startswith("/") or (len(self.base) > 1 and self.base.endswith("/")):
            raise InvalidTaskFile(f"endpoint base must look like /path, got {self.base!r}")


@attr.s(frozen=True)
class TaskFile:
    """The explicit task statement."""

    scope = attr.ib(type=AccessScope)
    prior = attr.ib(type=PriorKnowledge)
    output = attr.ib(type=OutputForm)
    constraints = attr.ib(type=ConstraintSet)
    metrics = attr.ib(type=Tuple[MetricSpec, ...], converter=tuple)
    endpoints = attr.ib(type=Endpoints, factory=Endpoints)

    def __attrs_post_init__(self):
        """Check the cross-record invariants."""
        if not self.metrics:
            raise MissingField("metrics")
        ids = [metric.metric_id for metric in self.metrics]
        if len(set(ids)) != len(ids):
            raise InvalidTaskFile(f"metric listed twice in {ids}")
        if self.constraints.leakage_boundary != self.scope.history_end:
            raise InconsistentDates(
                f"leakage boundary {self.constraints.leakage_boundary} differs from cutoff {self.scope.history_end}",
            )
        for name, last in self.constraints.feature_availability_overrides.items():
            if last > self.scope.horizon_end:
                raise InconsistentDates(f"override {name}={last} after horizon end {self.scope.horizon_end}")

    @property
    def primary_metric(self) -> MetricSpec:
        """Return the ranking metric."""
        return self.metrics[0]


def check_row_count(task: TaskFile, entity_count: int) -> bool:
    """Compare the declared row count against the full entity grid."""
    derived = entity_count * task.scope.step_count
    if derived != task.output.required_row_count:
        logger.warning(f"declared {task.output.required_row_count} rows, grid implies {derived}")
        return False
    return True


@attr.s(frozen=True)
class WorkspaceEntry:
    """One file exposed in the workspace."""

    file_name = attr.ib(type=str)
    role = attr.ib(type=FileRole, converter=FileRole)
    availability_end = attr.ib(type=Optional[datetime.date], default=None)
    byte_length = attr.ib(type=int, default=0)
    content_digest = attr.ib(type=str, default="")


@attr.s(frozen=True)
class WorkspaceManifest:
    """Exposed workspace files plus reconstruction facts."""

    entries = attr.ib(type=Tuple[WorkspaceEntry, ...], converter=tuple)
    hidden_rows = attr.ib(type=int, default=0)
    skeleton_covariates = attr.ib(type=Tuple[str, ...], factory=tuple, converter=tuple)

    def __attrs_post_init__(self):
        """Check file name uniqueness and role cardinalities."""
        names = [entry.file_name for entry in self.entries]
        if len(set(names)) != len(names):
            raise InvalidTaskFile("manifest lists a file twice")
        roles = [entry.role for entry in self.entries]
        if roles.count(FileRole.train) != 1:
            raise InvalidTaskFile("manifest needs exactly one train file")
        if roles.count(FileRole.test_skeleton) > 1:
            raise InvalidTaskFile("manifest lists more than one test skeleton")

    def get(self, file_name: str) -> Optional[WorkspaceEntry]:
        """Return the entry for ``file_name``."""
        for entry in self.entries:
            if entry.file_name == file_name:
                return entry
        return None

    def by_role(self, role: FileRole) -> Tuple[WorkspaceEntry, ...]:
        """Return the entries holding ``role``."""
        return tuple(entry for entry in self.entries if entry.role == role)

    def check_against(self, task: TaskFile) -> Tuple[str, ...]:
        """Return availability mismatches against the task overrides."""
        overrides = task.constraints.feature_availability_overrides
        problems = []
        for entry in self.entries:
            if entry.availability_end is None:
                continue
            declared = overrides.get(entry.file_name)
            if declared != entry.availability_end:
                problems.append(f"{entry.file_name} available to {entry.availability_end}, task declares {declared}")
        return tuple(problems)


@attr.s(frozen=True)
class ValidationOutcome:
    """Validity report plus scores of one candidate output."""

    validity = attr.ib(type=ValidityReport)
    scores = attr.ib(type=Optional[MetricScores], default=None)
    admissible = attr.ib(type=bool, default=None)

    def __attrs_post_init__(self):
        """Derive or check admissibility against the report."""
        if self.admissible is None:
            object.__setattr__(self, "admissible", self.validity.passed)
        if self.admissible != self.validity.passed:
            raise ValueError("admissible must equal the all-pass verdict of the report")
        if self.scores is not None and not self.admissible:
            raise ValueError("inadmissible outcomes carry no scores")

    def to_dict(self) -> dict:
        """Return a JSON-ready dict."""
        return {
            "admissible": self.admissible,
            "validity": self.validity.to_dict(),
            "scores": self.scores.to_dict() if self.scores is not None else None,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ValidationOutcome":
        """Build from :meth:`to_dict` output."""
        scores = data.get("scores")
        return cls(
            validity=ValidityReport.from_dict(data["validity"]),
            scores=MetricScores.from_dict(scores) if scores else None,
            admissible=data["admissible"],
        )


@attr.s(frozen=True)
class TemporalConstraintSurface:
    """Derived temporal constraints a solver must respect."""

    FULL_GRID = "full_grid_forecast"

    observation_window = attr.ib(type=Tuple[datetime.date, datetime.date])
    hidden_boundary = attr.ib(type=Tuple[datetime.date, datetime.date])
    hidden_dates = attr.ib(type=Tuple[datetime.date, ...])
    granularity = attr.ib(type=Granularity)
    step_count = attr.ib(type=int)
    leakage_boundary = attr.ib(type=datetime.date)
    output_mode = attr.ib(type=str, default=FULL_GRID)
    unresolved = attr.ib(type=Tuple[str, ...], factory=tuple, converter=tuple)

    def to_text(self) -> str:
        """Render as key/value lines."""
        return "".join([
            f"observation_window = {self.observation_window[0]}..{self.observation_window[1]}\n",
            f"hidden_boundary = {self.hidden_boundary[0]}..{self.hidden_boundary[1]}\n",
            f"step_count = {self.step_count}\n",
            f"granularity = {self.granularity}\n",
            f"leakage_boundary = {self.leakage_boundary}\n",
            f"output_mode = {self.output_mode}\n",
            f"unresolved = {', '.join(self.unresolved) or 'none'}\n",
        ])


def resolve_temporal_constraints(task: TaskFile) -> TemporalConstraintSurface:
    """Derive the temporal constraint surface of ``task``."""
    scope = task.scope
    unresolved = []
    if not scope.timezone:
        unresolved.append("timezone")
    if task.output.required_row_count == 0:
        unresolved.append("required_row_count")
    return TemporalConstraintSurface(
        observation_window=(scope.history_start, scope.history_end),
        hidden_boundary=(scope.horizon_start, scope.horizon_end),
        hidden_dates=scope.horizon_dates(),
        granularity=scope.granularity,
        step_count=scope.step_count,
        leakage_boundary=task.constraints.leakage_boundary,
        unresolved=unresolved,
    )


def is_classical_degenerate(task: TaskFile) -> bool:
    """Whether the task reduces to a plain fixed-horizon forecasting problem."""
    regular_steps = task.scope.granularity in STEP
    full_release = not task.constraints.feature_availability_overrides
    fixed_horizon = (
        task.output.format == OutputFormat.csv and task.output.required_row_count > 0 and task.scope.step_count >= 1
    )
    single_metric = len(task.metrics) == 1
    return regular_steps and full_release and fixed_horizon and single_metric


def admissible(outcome: ValidationOutcome) -> bool:
    """Whether every named check in the outcome's report passed."""
    for warning in outcome.validity.warnings:
        logger.warning(f"validity report: {warning}")
    return outcome.validity.passed
