"""Run budget watchdog."""

import asyncio
import threading
import time

from .errors import BudgetExceeded

# Polling interval for the watchdog thread (seconds)
WATCHDOG_CHECK_INTERVAL = 0.05


class BudgetWatchdog:
    """A timer thread that marks the run budget as expired.

    Unlike an interrupting watchdog it never touches the main thread; the
    loop calls :meth:`check` between phases.
    """

    def __init__(self, timeout: float):
        """Initialize the watchdog with a budget in seconds."""
        self.timeout = timeout
        self._deadline = time.monotonic() + self.timeout
        self._lock = threading.Lock()
        self._stop_event = threading.Event()
        self._expired = threading.Event()
        self._thread = threading.Thread(target=self._watchdog_thread, daemon=True)

    def start(self):
        """Start the watchdog thread."""
        self._thread.start()

    def stop(self):
        """Stop the watchdog thread."""
        self._stop_event.set()
        if self._thread.is_alive():
            self._thread.join()

    def __enter__(self):
        """Start on entry."""
        self.start()
        return self

    def __exit__(self, *exc_info):
        """Stop on exit."""
        self.stop()

    async def reset(self):
        """Reset the budget asynchronously."""
        loop = asyncio.get_running_loop()
        await loop.run_in_executor(None, self.reset_sync)

    def reset_sync(self, offset: float = 0):
        """Reset the budget synchronously."""
        with self._lock:
            self._deadline = time.monotonic() + self.timeout + offset
        self._expired.clear()

    @property
    def expired(self) -> bool:
        """Whether the budget ran out."""
        return self._expired.is_set()

    def remaining(self) -> float:
        """Return the seconds left, never below zero."""
        with self._lock:
            return max(0.0, self._deadline - time.monotonic())

    def check(self, phase: str = ""):
        """Raise :class:`BudgetExceeded` once the budget ran out."""
        if self.expired or self.remaining() <= 0:
            self._expired.set()
            where = f" during {phase}" if phase else ""
            raise BudgetExceeded(f"run budget of {self.timeout}s exhausted{where}")

    def _watchdog_thread(self):
        """Thread that checks the deadline."""
        while not self._stop_event.is_set():
            with self._lock:
                due = self._deadline - time.monotonic() <= 0
            if due:
                self._expired.set()
                break
            time.sleep(WATCHDOG_CHECK_INTERVAL)
