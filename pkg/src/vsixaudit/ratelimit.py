from __future__ import annotations

import math
import threading
import time
from collections import deque
from typing import Callable


class RateLimiter:
    """Sliding-window limiter: at most ``max_calls`` acquisitions in any ``period`` seconds.

    ``clock`` and ``sleep`` are injectable so tests can drive a simulated clock.
    """

    def __init__(
        self,
        max_calls: int,
        period: float = 1.0,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if max_calls < 1 or period <= 0:
            raise ValueError("rate limit needs max_calls >= 1 and period > 0")
        self.max_calls = max_calls
        self.period = period
        self.clock = clock
        self.sleep = sleep
        self._stamps: deque[float] = deque()
        self._lock = threading.Lock()

    @classmethod
    def per_second(cls, rate: float, **kw) -> RateLimiter:
        # Fractional rates become one call per 1/rate seconds.
        if rate >= 1:
            return cls(int(rate), 1.0, **kw)
        return cls(1, 1.0 / rate, **kw)

    def acquire(self) -> float:
        """Block until a call is allowed; return the timestamp recorded for it."""
        with self._lock:
            while True:
                now = self.clock()
                while self._stamps and now - self._stamps[0] >= self.period:
                    self._stamps.popleft()
                if len(self._stamps) < self.max_calls:
                    self._stamps.append(now)
                    return now
                # At least one ulp, so rounding can never leave the clock stuck short of the window edge.
                self.sleep(max(self._stamps[0] + self.period - now, math.ulp(now)))
