import asyncio
import threading
import time

import pytest

from forecast_harness.errors import BudgetExceeded
from forecast_harness.watchdog import BudgetWatchdog


def test_watchdog_basic_reset_and_stop():
    wd = BudgetWatchdog(timeout=2)
    wd.start()
    wd.reset_sync()
    time.sleep(0.2)
    wd.check("grounding")
    assert 0 < wd.remaining() <= 2
    wd.stop()
    assert not wd._thread.is_alive()
    assert not wd.expired


def test_watchdog_marks_expiry():
    with BudgetWatchdog(timeout=0.2) as wd:
        time.sleep(0.5)
        assert wd.expired
        with pytest.raises(BudgetExceeded, match="during review"):
            wd.check("review")
    assert wd.remaining() == 0.0


def test_check_without_thread():
    wd = BudgetWatchdog(timeout=0.05)
    time.sleep(0.1)
    with pytest.raises(BudgetExceeded):
        wd.check()
    assert wd.expired


def test_watchdog_async_reset():
    wd = BudgetWatchdog(timeout=1)
    wd.start()
    time.sleep(0.5)

    async def do_reset():
        await wd.reset()

    asyncio.run(do_reset())
    assert wd.remaining() > 0.6
    wd.stop()
    assert not wd._thread.is_alive()


def test_watchdog_multithreaded_resets():
    wd = BudgetWatchdog(timeout=2)
    wd.start()
    threads = []

    def reset_worker():
        for _ in range(5):
            wd.reset_sync()
            time.sleep(0.01)

    for _ in range(10):
        t = threading.Thread(target=reset_worker)
        threads.append(t)
        t.start()
    for t in threads:
        t.join()
    wd.stop()
    assert not wd._thread.is_alive()
    assert not wd.expired
