"""Injectable time sources.

All timestamps in the system are integer milliseconds since epoch (or since
t=0 for virtual runs) and come from one of these clocks; domain logic never
reads ambient system time.
"""

from __future__ import annotations

import time
from typing import Protocol


class Clock(Protocol):
    def now_ms(self) -> int: ...


class WallClock:
    def now_ms(self) -> int:
        return int(time.time() * 1000)


class VirtualClock:
    """Monotone clock that only moves when explicitly advanced."""

    def __init__(self, start_ms: int = 0):
        self._now = start_ms

    def now_ms(self) -> int:
        return self._now

    def advance_to(self, t_ms: int) -> None:
        if t_ms < self._now:
            raise ValueError(f"clock cannot move backwards ({self._now} -> {t_ms})")
        self._now = t_ms

    def advance(self, delta_ms: int) -> None:
        self.advance_to(self._now + delta_ms)
