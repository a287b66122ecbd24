"""Local backtest one horizon before the real cutoff."""

import asyncio
import datetime
import functools
import logging
from typing import Dict, Mapping, Optional

import attr

from ..data.table import UnifiedSeriesTable
from ..errors import HarnessError
from ..task.model import AccessScope, MetricSpec
from ..validation.metrics import score
from ..validation.report import MetricId
from .forecasters import Forecaster

logger = logging.getLogger(__name__)

BACKTEST_METRICS = (MetricSpec(MetricId.rmsle),)


@attr.s(frozen=True)
class BacktestResult:
    """Local RMSLE of one candidate, or why it has none."""

    candidate = attr.ib(type=str)
    scope = attr.ib(type=AccessScope)
    score = attr.ib(type=Optional[float], default=None)
    failure = attr.ib(type=str, default="")

    @property
    def scored(self) -> bool:
        """Whether the candidate produced a full, scorable forecast."""
        return self.score is not None


def pseudo_scope(scope: AccessScope) -> AccessScope:
    """Shift the scope back by one horizon so its window is visible history."""
    shift = datetime.timedelta(days=scope.step_count)
    return attr.evolve(
        scope,
        history_end=scope.history_end - shift,
        horizon_start=scope.horizon_start - shift,
        horizon_end=scope.horizon_end - shift,
    )


def backtest(name: str, forecaster: Forecaster, table: UnifiedSeriesTable, scope: AccessScope) -> BacktestResult:
    """Score ``forecaster`` on the pseudo window using public history only."""
    local = pseudo_scope(scope)
    visible = table.history(scope.cutoff)
    truth = visible.window(local.horizon_start, local.horizon_end)
    try:
        predictions = forecaster(visible.history(local.cutoff), local)
        value = score(predictions, truth, BACKTEST_METRICS).primary_value
    except HarnessError as e:
        logger.warning(f"backtest of {name} failed: {e.code}: {e}")
        return BacktestResult(candidate=name, scope=local, failure=f"{e.code}: {e}")
    logger.debug(f"backtest {name}: rmsle {value:.6f}")
    return BacktestResult(candidate=name, scope=local, score=value)


async def run_backtests(candidates: Mapping[str, Forecaster], table: UnifiedSeriesTable,
                        scope: AccessScope) -> Dict[str, BacktestResult]:
    """Backtest every candidate concurrently in the default executor."""
    loop = asyncio.get_running_loop()
    names = list(candidates)
    results = await asyncio.gather(*[
        loop.run_in_executor(None, functools.partial(backtest, name, candidates[name], table, scope))
        for name in names
    ])
    return dict(zip(names, results))
