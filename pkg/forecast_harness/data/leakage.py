"""Leakage boundary checks for lagged features."""

import datetime
from enum import auto
from typing import FrozenSet, Tuple

import attr
from strenum import StrEnum

from ..task.model import AccessScope


class LeakageVerdict(StrEnum):
    """How much of the hidden window a feature may legally cover."""

    fully_valid = auto()
    partially_valid = auto()
    invalid = auto()


@attr.s(frozen=True)
class LeakageReport:
    """Per-date validity of a lagged feature over the hidden window."""

    feature_name = attr.ib(type=str)
    lag_steps = attr.ib(type=int)
    valid_dates = attr.ib(type=FrozenSet[datetime.date], converter=frozenset)
    invalid_dates = attr.ib(type=FrozenSet[datetime.date], converter=frozenset)

    def __attrs_post_init__(self):
        """Partitions must not overlap."""
        if self.valid_dates & self.invalid_dates:
            raise ValueError("a date cannot be both valid and invalid")

    @property
    def verdict(self) -> LeakageVerdict:
        """Derive the verdict from the date partition."""
        if not self.invalid_dates:
            return LeakageVerdict.fully_valid
        if not self.valid_dates:
            return LeakageVerdict.invalid
        return LeakageVerdict.partially_valid

    def summary(self) -> str:
        """One-line description for reports and issues."""
        valid = sorted(self.valid_dates)
        invalid = sorted(self.invalid_dates)
        parts = [f"{self.feature_name} lag {self.lag_steps}: {self.verdict}"]
        if valid:
            parts.append(f"valid {valid[0]}..{valid[-1]} ({len(valid)} dates)")
        if invalid:
            parts.append(f"invalid {invalid[0]}..{invalid[-1]} ({len(invalid)} dates)")
        return ", ".join(parts)


def check_boundary(feature: Tuple[str, int], scope: AccessScope) -> LeakageReport:
    """Split the hidden window by whether ``d - lag`` is still visible history."""
    name, lag_steps = feature
    if lag_steps < 0:
        raise ValueError("lag_steps must be non-negative")
    lag = datetime.timedelta(days=lag_steps)
    valid, invalid = [], []
    for date in scope.horizon_dates():
        (valid if date - lag <= scope.history_end else invalid).append(date)
    return LeakageReport(feature_name=name, lag_steps=lag_steps, valid_dates=valid, invalid_dates=invalid)


def strategy_verdict(report: LeakageReport, has_fallback: bool) -> LeakageVerdict:
    """Verdict of a whole strategy built on a lagged feature.

    A fallback covers the dates the lag cannot reach, so only a strategy
    without one inherits a partial report as invalid.
    """
    if report.verdict == LeakageVerdict.fully_valid:
        return LeakageVerdict.fully_valid
    if has_fallback:
        return LeakageVerdict.fully_valid
    return LeakageVerdict.invalid
