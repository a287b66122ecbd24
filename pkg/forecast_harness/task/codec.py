"""Reader and writer for the sectioned key/value task file format.

A document is a sequence of ``[section]`` headers followed by
``key = value`` lines. Blank lines and lines starting with ``#`` are
ignored. Lists are comma separated (a literal comma inside an item is
written as ``\\,``), dates are ``YYYY-MM-DD`` and availability overrides are
``file_name=YYYY-MM-DD`` items.
"""

import datetime
import re
from typing import Dict, List, Optional

from ..errors import InvalidTaskFile, MissingField, UnknownMetric
from ..validation.report import MetricId
from .model import (
    AccessScope,
    ConstraintSet,
    Endpoints,
    MetricSpec,
    OutputForm,
    PriorKnowledge,
    TaskFile,
    WorkspaceEntry,
    WorkspaceManifest,
)

TASK_SECTIONS = ("scope", "prior", "output", "constraints", "metrics", "endpoints")
MANIFEST_SECTIONS = ("workspace", "reconstruction")

NO_VALUE = "none"
NO_DATE = "-"

_SECTION_RE = re.compile(r"^\[([a-z_]+)\]$")
_LIST_SPLIT_RE = re.compile(r"(?<!\\),")


def _read_sections(text: str, allowed) -> Dict[str, Dict[str, str]]:
    sections = {}
    current = None
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        match = _SECTION_RE.match(line)
        if match:
            current = match.group(1)
            if current not in allowed:
                raise InvalidTaskFile(f"line {number}: unknown section [{current}]")
            if current in sections:
                raise InvalidTaskFile(f"line {number}: section [{current}] repeated")
            sections[current] = {}
            continue
        if current is None:
            raise InvalidTaskFile(f"line {number}: value outside a section")
        key, sep, value = line.partition("=")
        if not sep:
            raise InvalidTaskFile(f"line {number}: expected key = value")
        key = key.strip()
        if key in sections[current]:
            raise InvalidTaskFile(f"line {number}: key {key} repeated")
        sections[current][key] = value.strip()
    return sections


def _required(sections, section: str, key: str) -> str:
    try:
        return sections[section][key]
    except KeyError:
        raise MissingField(f"{section}.{key}") from None


def _optional(sections, section: str, key: str) -> Optional[str]:
    return sections.get(section, {}).get(key)


def split_list(value: Optional[str]) -> List[str]:
    """Split a comma separated list, honouring ``\\,`` escapes."""
    if not value:
        return []
    return [item.strip().replace("\\,", ",") for item in _LIST_SPLIT_RE.split(value) if item.strip()]


def join_list(items) -> str:
    """Join list items, escaping embedded commas."""
    return ", ".join(str(item).replace(",", "\\,") for item in items)


def parse_date(value: str, name: str = "date") -> datetime.date:
    """Parse a ``YYYY-MM-DD`` date."""
    try:
        return datetime.date.fromisoformat(value.strip())
    except ValueError:
        raise InvalidTaskFile(f"{name}: expected YYYY-MM-DD, got {value!r}") from None


def _parse_int(value: str, name: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise InvalidTaskFile(f"{name}: expected an integer, got {value!r}") from None


def _parse_float(value: str, name: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise InvalidTaskFile(f"{name}: expected a number, got {value!r}") from None


def _parse_bool(value: str, name: str) -> bool:
    lowered = value.lower()
    if lowered not in ("true", "false"):
        raise InvalidTaskFile(f"{name}: expected true or false, got {value!r}")
    return lowered == "true"


def _parse_overrides(value: Optional[str]) -> Dict[str, datetime.date]:
    overrides = {}
    for item in split_list(value):
        name, sep, last = item.partition("=")
        if not sep:
            raise InvalidTaskFile(f"override {item!r}: expected file_name=YYYY-MM-DD")
        overrides[name.strip()] = parse_date(last, f"override {name.strip()}")
    return overrides


def _parse_metrics(sections) -> List[MetricSpec]:
    direction = _optional(sections, "metrics", "direction") or "lower_better"
    metrics = []
    for metric_id in split_list(_required(sections, "metrics", "metrics")):
        if metric_id not in MetricId.__members__:
            raise UnknownMetric(metric_id)
        try:
            metrics.append(MetricSpec(metric_id=metric_id, direction=direction))
        except ValueError:
            raise InvalidTaskFile(f"unknown metric direction {direction!r}") from None
    return metrics


def parse_task_file(text: str) -> TaskFile:
    """Parse a task file document into a validated :class:`TaskFile`."""
    sections = _read_sections(text, TASK_SECTIONS)

    try:
        scope = AccessScope(
            history_start=parse_date(_required(sections, "scope", "history_start"), "history_start"),
            history_end=parse_date(_required(sections, "scope", "history_end"), "history_end"),
            horizon_start=parse_date(_required(sections, "scope", "horizon_start"), "horizon_start"),
            horizon_end=parse_date(_required(sections, "scope", "horizon_end"), "horizon_end"),
            step_count=_parse_int(_required(sections, "scope", "step_count"), "step_count"),
            granularity=_optional(sections, "scope", "granularity") or "daily",
            timezone=_optional(sections, "scope", "timezone") or "UTC",
        )
        seasonality = _optional(sections, "prior", "seasonality_hints")
        prior = PriorKnowledge(
            domain_tag=_optional(sections, "prior", "domain_tag") or "",
            notes=split_list(_optional(sections, "prior", "notes")),
            seasonality_hints=[_parse_int(item, "seasonality_hints") for item in split_list(seasonality)],
        )
        output = OutputForm(
            format=_optional(sections, "output", "format") or "csv",
            required_columns=split_list(_required(sections, "output", "required_columns")),
            id_column=_required(sections, "output", "id_column"),
            value_column=_required(sections, "output", "value_column"),
            required_row_count=_parse_int(_required(sections, "output", "required_row_count"), "required_row_count"),
            ordering_rule=_optional(sections, "output", "ordering_rule") or "by_id_ascending",
        )
    except ValueError as e:
        # enumeration converters
        raise InvalidTaskFile(str(e)) from None

    boundary = _optional(sections, "constraints", "leakage_boundary")
    max_submissions = _optional(sections, "constraints", "max_submissions")
    non_negative = _optional(sections, "constraints", "non_negative_values")
    magnitude = _optional(sections, "constraints", "magnitude_factor")
    constraints = ConstraintSet(
        leakage_boundary=parse_date(boundary, "leakage_boundary") if boundary else scope.history_end,
        max_submissions=(
            None if max_submissions in (None, "", NO_VALUE) else _parse_int(max_submissions, "max_submissions")
        ),
        non_negative_values=_parse_bool(non_negative, "non_negative_values") if non_negative else True,
        feature_availability_overrides=_parse_overrides(
            _optional(sections, "constraints", "feature_availability_overrides"),
        ),
        magnitude_factor=(
            _parse_float(magnitude, "magnitude_factor") if magnitude else ConstraintSet.DEFAULT_MAGNITUDE_FACTOR
        ),
    )

    return TaskFile(
        scope=scope,
        prior=prior,
        output=output,
        constraints=constraints,
        metrics=_parse_metrics(sections),
        endpoints=Endpoints(base=_optional(sections, "endpoints", "base") or Endpoints.DEFAULT_BASE),
    )


def serialize_task_file(task: TaskFile) -> str:
    """Render ``task`` in the task file format."""
    scope, prior, output, constraints = task.scope, task.prior, task.output, task.constraints
    overrides = join_list(f"{name}={last}" for name, last in constraints.feature_availability_overrides.items())
    lines = [
        "[scope]",
        f"history_start = {scope.history_start}",
        f"history_end = {scope.history_end}",
        f"horizon_start = {scope.horizon_start}",
        f"horizon_end = {scope.horizon_end}",
        f"step_count = {scope.step_count}",
        f"granularity = {scope.granularity}",
        f"timezone = {scope.timezone}",
        "",
        "[prior]",
        f"domain_tag = {prior.domain_tag}",
        f"notes = {join_list(prior.notes)}",
        f"seasonality_hints = {join_list(prior.seasonality_hints)}",
        "",
        "[output]",
        f"format = {output.format}",
        f"required_columns = {join_list(output.required_columns)}",
        f"id_column = {output.id_column}",
        f"value_column = {output.value_column}",
        f"required_row_count = {output.required_row_count}",
        f"ordering_rule = {output.ordering_rule}",
        "",
        "[constraints]",
        f"leakage_boundary = {constraints.leakage_boundary}",
        f"max_submissions = {constraints.max_submissions if constraints.max_submissions else NO_VALUE}",
        f"non_negative_values = {'true' if constraints.non_negative_values else 'false'}",
        f"feature_availability_overrides = {overrides}",
        f"magnitude_factor = {constraints.magnitude_factor!r}",
        "",
        "[metrics]",
        f"metrics = {join_list(metric.metric_id for metric in task.metrics)}",
        f"direction = {task.primary_metric.direction}",
        "",
        "[endpoints]",
        f"base = {task.endpoints.base}",
    ]
    return "\n".join(lines) + "\n"


def parse_manifest(text: str) -> WorkspaceManifest:
    """Parse the ``[workspace]`` companion document."""
    sections = _read_sections(text, MANIFEST_SECTIONS)
    if "workspace" not in sections:
        raise MissingField("workspace")
    entries = []
    for file_name, value in sections["workspace"].items():
        parts = [part.strip() for part in value.split(",")]
        if len(parts) != 4:
            raise InvalidTaskFile(f"workspace entry {file_name}: expected role, availability, bytes, digest")
        role, availability, byte_length, digest = parts
        try:
            entries.append(
                WorkspaceEntry(
                    file_name=file_name,
                    role=role,
                    availability_end=None if availability == NO_DATE else parse_date(availability, file_name),
                    byte_length=_parse_int(byte_length, f"{file_name} bytes"),
                    content_digest=digest,
                ),
            )
        except ValueError:
            raise InvalidTaskFile(f"workspace entry {file_name}: unknown role {role!r}") from None
    hidden_rows = _optional(sections, "reconstruction", "hidden_rows")
    return WorkspaceManifest(
        entries=entries,
        hidden_rows=_parse_int(hidden_rows, "hidden_rows") if hidden_rows else 0,
        skeleton_covariates=split_list(_optional(sections, "reconstruction", "skeleton_covariates")),
    )


def serialize_manifest(manifest: WorkspaceManifest) -> str:
    """Render ``manifest`` as a ``[workspace]`` companion document."""
    lines = ["[workspace]"]
    for entry in manifest.entries:
        availability = entry.availability_end.isoformat() if entry.availability_end else NO_DATE
        lines.append(
            f"{entry.file_name} = {entry.role}, {availability}, {entry.byte_length}, {entry.content_digest}",
        )
    lines += [
        "",
        "[reconstruction]",
        f"hidden_rows = {manifest.hidden_rows}",
        f"skeleton_covariates = {join_list(manifest.skeleton_covariates)}",
    ]
    return "\n".join(lines) + "\n"
