"""Error types raised across the harness.

Every error carries a stable ``code`` (the class name) so the command line
can print one machine-parseable line per failure.
"""


class HarnessError(Exception):
    """Base class for all harness errors."""

    @property
    def code(self) -> str:
        """Return the stable error code."""
        return type(self).__name__


class ConfigError(HarnessError):
    """Configuration file could not be applied."""


# task model


class InvalidTaskFile(HarnessError):
    """Task file line or section outside the grammar."""


class MissingField(HarnessError):
    """A required task file field is absent."""

    def __init__(self, name: str):
        """Record the missing field name."""
        super().__init__(f"missing field {name}")
        self.name = name


class InconsistentDates(HarnessError):
    """Dates in a scope or slice contradict each other."""


class UnknownMetric(HarnessError):
    """Metric identifier outside the supported set."""

    def __init__(self, metric_id: str):
        """Record the unknown metric."""
        super().__init__(f"unknown metric {metric_id!r}")
        self.metric_id = metric_id


# data interface


class UnparseableTimestamp(HarnessError):
    """A date cell could not be parsed."""

    def __init__(self, row: int):
        """Record the offending data row (1-based, header excluded)."""
        super().__init__(f"unparseable timestamp in row {row}")
        self.row = row


class DuplicateKey(HarnessError):
    """Two rows share one (entity, date) key."""

    def __init__(self, entity, date):
        """Record the duplicated key."""
        super().__init__(f"duplicate key {entity} at {date}")
        self.entity = entity
        self.date = date


class MissingRequiredColumn(HarnessError):
    """A column required by the schema is absent."""

    def __init__(self, name: str):
        """Record the missing column."""
        super().__init__(f"missing required column {name}")
        self.name = name


class NegativeTarget(HarnessError):
    """A target value below zero."""

    def __init__(self, row: int):
        """Record the offending data row."""
        super().__init__(f"negative target in row {row}")
        self.row = row


class InvalidTarget(HarnessError):
    """A target cell is empty or not numeric."""

    def __init__(self, row: int):
        """Record the offending data row."""
        super().__init__(f"non-numeric target in row {row}")
        self.row = row


class InvalidEntity(HarnessError):
    """An entity key cell is empty or malformed."""

    def __init__(self, row: int):
        """Record the offending data row."""
        super().__init__(f"malformed entity key in row {row}")
        self.row = row


class MissingRawFile(HarnessError):
    """A raw file named by the slice is not available."""

    def __init__(self, name: str):
        """Record the missing file name."""
        super().__init__(f"missing raw file {name}")
        self.name = name


class EmptyHiddenWindow(HarnessError):
    """The hidden window selects no rows."""


class SpecDateOutsideData(HarnessError):
    """A slice date falls outside the dates present in the data."""


class ConservationViolation(HarnessError):
    """Row counts of the reconstruction do not add up."""

    def __init__(self, what: str, expected: int, actual: int):
        """Record the count that broke."""
        super().__init__(f"{what}: expected {expected} rows, got {actual}")
        self.what = what
        self.expected = expected
        self.actual = actual


class EmptyTable(HarnessError):
    """An operation needs at least one row."""


class UnwritableDirectory(HarnessError):
    """Output directory cannot be created or written."""


# validation gate


class UnreadablePayload(HarnessError):
    """Submission payload is not CSV at all."""


class EmptyInput(HarnessError):
    """No pairs to score."""


class NonFiniteValue(HarnessError):
    """A scored value is NaN or infinite."""

    def __init__(self, index: int):
        """Record the offending pair index."""
        super().__init__(f"non-finite value at index {index}")
        self.index = index


class NegativeValue(HarnessError):
    """A scored value is below zero."""

    def __init__(self, index: int):
        """Record the offending pair index."""
        super().__init__(f"negative value at index {index}")
        self.index = index


class KeyMismatch(HarnessError):
    """Prediction and truth tables disagree on their key sets."""

    def __init__(self, missing: int, extra: int):
        """Record the key set differences."""
        super().__init__(f"{missing} keys missing from predictions, {extra} extra")
        self.missing = missing
        self.extra = extra


class EmptyIntersection(HarnessError):
    """Prediction and truth tables share no key."""


# task server


class PortUnavailable(HarnessError):
    """The server could not bind its port."""


class CorruptState(HarnessError):
    """The persisted submission log cannot be restored."""


class SubmissionLimitReached(HarnessError):
    """The task's submission budget is exhausted."""


class ServerUnreachable(HarnessError):
    """The competition endpoint did not answer after retries."""


# protocol engine


class IllegalTransition(HarnessError):
    """Lifecycle transition outside the legal table."""

    def __init__(self, current, to):
        """Record both ends of the rejected transition."""
        super().__init__(f"illegal transition {current} -> {to}")
        self.current = current
        self.to = to


class UnknownIssue(HarnessError):
    """Rebuttal issue id is unknown or already closed."""


class RecheckBeforeResponse(HarnessError):
    """Recheck requested for an issue without a response asking for it."""


class NonMonotoneTimestamp(HarnessError):
    """Event timestamp earlier than the last appended one."""


class CorruptRecord(HarnessError):
    """An event log line cannot be decoded."""

    def __init__(self, line: int, detail: str = ""):
        """Record the 1-based line number."""
        super().__init__(f"corrupt record at line {line}" + (f": {detail}" if detail else ""))
        self.line = line


class StaleDigest(HarnessError):
    """A proposal was made against an outdated memory record."""


class MalformedProposal(HarnessError):
    """Memory proposal lacks content, reason or a valid confidence."""


# memory store


class AnchorAlreadyExists(HarnessError):
    """The prompt anchor is created only once."""


class MutationOfFrozenField(HarnessError):
    """Attempt to rewrite a frozen anchor field."""

    def __init__(self, name: str):
        """Record the frozen field name."""
        super().__init__(f"field {name} is frozen")
        self.name = name


class MissingSource(HarnessError):
    """A snapshot source record is unavailable."""

    def __init__(self, name: str):
        """Record the missing source."""
        super().__init__(f"missing snapshot source {name}")
        self.name = name


class IncompleteRecord(HarnessError):
    """Completion gate record lacks a field."""

    def __init__(self, missing_field: str):
        """Record the missing field."""
        super().__init__(f"completion gate record missing {missing_field}")
        self.missing_field = missing_field


# orchestration


class EmptyHistory(HarnessError):
    """An entity has no observations before the cutoff."""

    def __init__(self, entity):
        """Record the entity."""
        super().__init__(f"no history for {entity}")
        self.entity = entity


class AlphaOutOfRange(HarnessError):
    """Smoothing factor outside (0, 1]."""


class MissingRole(HarnessError):
    """A mandatory role policy is not supplied."""

    def __init__(self, name: str):
        """Record the missing role."""
        super().__init__(f"missing role {name}")
        self.name = name


class BudgetExceeded(HarnessError):
    """The run exhausted its configured budget."""


class ScopeViolation(HarnessError):
    """A role wrote outside its permitted action scope."""


class BranchBlocked(HarnessError):
    """A leakage-invalid branch cannot lead."""
