"""Injectable time sources: wall clock and a test-controlled simulated clock.

All node timekeeping is in DTN milliseconds (ms since 2000-01-01T00:00:00
UTC, leap seconds ignored).
"""

import threading
import time

from .bundle import DTN_EPOCH_UNIX


def unix_to_dtn_ms(unix_seconds: float) -> int:
    return int((unix_seconds - DTN_EPOCH_UNIX) * 1000)


class WallClock:
    def now_ms(self) -> int:
        return unix_to_dtn_ms(time.time())

    def sleep_ms(self, ms: float) -> None:
        time.sleep(ms / 1000.0)


class SimulatedClock:
    """A clock that only moves when the harness advances it.

    sleep_ms blocks the calling thread until simulated time reaches the
    target (or the clock is shut down), so timed behavior becomes a pure
    function of the scripted advances.
    """

    def __init__(self, start_ms: int = 0):
        self._now = start_ms
        self._cond = threading.Condition()
        self._stopped = False

    def now_ms(self) -> int:
        with self._cond:
            return self._now

    def advance_to(self, t_ms: int) -> None:
        with self._cond:
            if t_ms < self._now:
                raise ValueError("simulated clock cannot move backwards")
            self._now = t_ms
            self._cond.notify_all()

    def advance_by(self, delta_ms: int) -> None:
        with self._cond:
            self._now += delta_ms
            self._cond.notify_all()

    def stop(self) -> None:
        with self._cond:
            self._stopped = True
            self._cond.notify_all()

    def sleep_ms(self, ms: float) -> None:
        with self._cond:
            deadline = self._now + ms
            while self._now < deadline and not self._stopped:
                self._cond.wait(timeout=1.0)
