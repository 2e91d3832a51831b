# utils/clock.py
"""
Clocks
- SystemClock for deployments
- ManualClock for deterministic TTL / block-expiry tests
"""

import threading
import time


class SystemClock:
    def now(self) -> float:
        return time.time()

    def monotonic(self) -> float:
        return time.monotonic()


class ManualClock:
    """Clock that only moves when told to."""

    def __init__(self, start: float = 1_700_000_000.0):
        self._now = float(start)
        self._lock = threading.Lock()

    def now(self) -> float:
        with self._lock:
            return self._now

    def monotonic(self) -> float:
        return self.now()

    def advance(self, seconds: float) -> float:
        with self._lock:
            self._now += seconds
            return self._now


def sleep_ms(milliseconds: float) -> None:
    if milliseconds and milliseconds > 0:
        time.sleep(milliseconds / 1000.0)
