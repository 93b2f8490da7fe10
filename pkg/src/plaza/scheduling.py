"""Deterministic per-instance timing: scripted items and the timer queue.

The timer queue fires actions in (due_time, tier, registration order); ties
on due time are broken by registration sequence so replays are stable.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Any, Iterator, Optional

from .models import ContentKind, Engagement


@dataclass
class ScriptedItem:
    """Pre-authored content released at a fixed offset after session start."""

    id: str
    template_id: str
    offset_s: float
    author_user_id: str
    content_kind: ContentKind
    body: str
    parent_script_id: Optional[str] = None
    media: list[str] = field(default_factory=list)
    initial_engagement: Engagement = field(default_factory=Engagement)
    flair: Optional[str] = None


def validate_script(items: list[ScriptedItem]) -> list[str]:
    """Template-save-time checks: parents exist, same template, and release
    strictly before their children."""
    by_id = {s.id: s for s in items}
    errs = []
    for s in items:
        if s.offset_s < 0:
            errs.append(f"scripted[{s.id}].offset_s: must be non-negative")
        if s.parent_script_id is None:
            continue
        parent = by_id.get(s.parent_script_id)
        if parent is None:
            errs.append(f"scripted[{s.id}].parent_script_id: unresolved {s.parent_script_id}")
        elif parent.template_id != s.template_id:
            errs.append(f"scripted[{s.id}].parent_script_id: different template")
        elif parent.offset_s >= s.offset_s:
            errs.append(
                f"scripted[{s.id}].offset_s: must be strictly greater than parent's"
            )
    return errs


def release_order(items: list[ScriptedItem]) -> list[ScriptedItem]:
    return sorted(items, key=lambda s: (s.offset_s, s.id))


# Tier separates "normal" work from session-end processing so that actions
# due exactly at ends_at still fire inside the session.
TIER_NORMAL = 0
TIER_SESSION_END = 1


class TimerQueue:
    """Min-heap of one-shot actions keyed by (due_ms, tier, registration seq)."""

    def __init__(self) -> None:
        self._heap: list[tuple[int, int, int, Any]] = []
        self._reg = 0

    def push(self, due_ms: int, action: Any, tier: int = TIER_NORMAL) -> int:
        self._reg += 1
        heapq.heappush(self._heap, (due_ms, tier, self._reg, action))
        return self._reg

    def peek_due(self) -> Optional[int]:
        return self._heap[0][0] if self._heap else None

    def pop_due(self, now_ms: int) -> Iterator[tuple[int, Any]]:
        """Yield (due_ms, action) for everything due at or before now_ms."""
        while self._heap and self._heap[0][0] <= now_ms:
            due, _tier, _reg, action = heapq.heappop(self._heap)
            yield due, action

    def drain(self) -> Iterator[tuple[int, Any]]:
        while self._heap:
            due, _tier, _reg, action = heapq.heappop(self._heap)
            yield due, action

    def __len__(self) -> int:
        return len(self._heap)
