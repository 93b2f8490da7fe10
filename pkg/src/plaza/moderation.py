"""Moderation rules: detection (keyword / regex / AI), actions, and the
per-rule violation ledger that drives automatic banning."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Union

from .errors import ProviderError
from .models import ContentItem, DelayModel, SourceRole
from .providers import Provider, ProviderMessage, ProviderRequest

logger = logging.getLogger(__name__)

# Python's re engine is backtracking; rejecting backreferences at save time
# keeps hostile patterns from going super-linear in practice.
_BACKREF_RE = re.compile(r"\\[1-9]|\(\?P=")


class ActionKind(str, Enum):
    FLAG = "flag"
    DELETE = "delete"
    POPUP = "popup"


@dataclass
class KeywordDetection:
    words: list[str]


@dataclass
class RegexDetection:
    pattern: str


@dataclass
class AiDetection:
    prompt: str
    model_config_id: str


Detection = Union[KeywordDetection, RegexDetection, AiDetection]


@dataclass
class RuleAction:
    kind: ActionKind
    label: str = ""  # flag label text
    message: str = ""  # popup message text
    ack_required: bool = False


@dataclass
class ModerationRule:
    id: str
    detection: Detection
    action: RuleAction
    target_sources: set[SourceRole] = field(default_factory=set)
    ban_threshold: Optional[int] = None
    delay: DelayModel = field(default_factory=DelayModel)
    enabled: bool = True
    fail_closed: bool = False  # AI provider failure counts as a match

    def validate(self) -> list[str]:
        errs = []
        det = self.detection
        if isinstance(det, KeywordDetection):
            if not det.words:
                errs.append(f"rule[{self.id}].detection.words: must be non-empty")
        elif isinstance(det, RegexDetection):
            if _BACKREF_RE.search(det.pattern):
                errs.append(f"rule[{self.id}].detection.pattern: backreferences not allowed")
            else:
                try:
                    re.compile(det.pattern)
                except re.error as exc:
                    errs.append(f"rule[{self.id}].detection.pattern: does not compile ({exc})")
        elif isinstance(det, AiDetection):
            if not det.prompt:
                errs.append(f"rule[{self.id}].detection.prompt: must be non-empty")
        if self.ban_threshold is not None and self.ban_threshold <= 0:
            errs.append(f"rule[{self.id}].ban_threshold: must be positive")
        errs.extend(f"rule[{self.id}].delay: {e}" for e in self.delay.validate())
        return errs

    def targets(self, role: SourceRole) -> bool:
        """Source targeting; moderator/system output is never moderated."""
        if role in (SourceRole.MODERATOR, SourceRole.SYSTEM):
            return False
        if not self.target_sources:
            return True
        return role in self.target_sources


@dataclass
class Verdict:
    matched: bool
    evidence: str = ""
    undecided: bool = False


def _keyword_regex(word: str) -> re.Pattern:
    # Whole-word, case-insensitive, Unicode-aware boundaries.
    return re.compile(rf"(?<!\w){re.escape(word)}(?!\w)", re.IGNORECASE | re.UNICODE)


def detect(rule: ModerationRule, item: ContentItem, provider: Optional[Provider] = None) -> Verdict:
    """Evaluate one rule against one item.

    AI detection asks the provider for a constrained YES/NO verdict; provider
    failure or an unparseable answer yields an undecided verdict (fail-open
    unless the rule opts into fail-closed).
    """
    det = rule.detection
    if isinstance(det, KeywordDetection):
        for word in det.words:
            m = _keyword_regex(word).search(item.body)
            if m:
                return Verdict(matched=True, evidence=m.group(0))
        return Verdict(matched=False)
    if isinstance(det, RegexDetection):
        m = re.search(det.pattern, item.body)
        if m:
            return Verdict(matched=True, evidence=m.group(0))
        return Verdict(matched=False)
    # AI detection
    if provider is None:
        logger.warning("rule %s: no provider available for AI detection", rule.id)
        return Verdict(matched=rule.fail_closed, undecided=True)
    request = ProviderRequest(
        model_name="",
        system_text=(
            det.prompt
            + "\n\nAnswer with a single token, YES or NO, as the first word of your reply."
        ),
        messages=[ProviderMessage(role_tag="user", text=item.body)],
        params={"response_format": "verdict"},
    )
    try:
        response = provider.generate(request)
    except ProviderError as exc:
        logger.warning("rule %s: AI detection failed (%s); verdict undecided", rule.id, exc)
        return Verdict(matched=rule.fail_closed, undecided=True)
    first_word = re.match(r"\W*(\w+)", response.text)
    first = first_word.group(1).upper() if first_word else ""
    if first == "YES":
        return Verdict(matched=True, evidence=response.text.strip())
    if first == "NO":
        return Verdict(matched=False, evidence=response.text.strip())
    logger.warning("rule %s: unparseable AI verdict %r", rule.id, response.text[:50])
    return Verdict(matched=rule.fail_closed, undecided=True)


class ViolationLedger:
    """Per (instance, user, rule) violation counts; monotone within a session."""

    def __init__(self) -> None:
        self.counts: dict[tuple[str, str, str], int] = {}

    def record(self, instance_id: str, user_id: str, rule_id: str) -> int:
        key = (instance_id, user_id, rule_id)
        self.counts[key] = self.counts.get(key, 0) + 1
        return self.counts[key]

    def count(self, instance_id: str, user_id: str, rule_id: str) -> int:
        return self.counts.get((instance_id, user_id, rule_id), 0)

    def should_ban(self, rule: ModerationRule, count: int) -> bool:
        return rule.ban_threshold is not None and count >= rule.ban_threshold
