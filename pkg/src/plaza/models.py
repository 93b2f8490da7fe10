"""Shared domain types, invariants, and pure validation logic.

Everything in this module is plain data: no I/O, no clocks, no randomness
except where a generator is passed in explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from random import Random
from typing import Optional

from .errors import StructuralIntegrityError


class ExperimentKind(str, Enum):
    FEED = "feed"
    CHAT = "chat"


class Layout(str, Enum):
    INSTAGRAM = "instagram"
    FACEBOOK = "facebook"
    REDDIT = "reddit"
    WHATSAPP = "whatsapp"
    MESSENGER = "messenger"


FEED_LAYOUTS = frozenset({Layout.INSTAGRAM, Layout.FACEBOOK, Layout.REDDIT})
CHAT_LAYOUTS = frozenset({Layout.WHATSAPP, Layout.MESSENGER})


def layout_kind(layout: Layout) -> ExperimentKind:
    return ExperimentKind.FEED if layout in FEED_LAYOUTS else ExperimentKind.CHAT


class InstanceState(str, Enum):
    FORMING = "forming"
    RUNNING = "running"
    COMPLETED = "completed"
    CANCELLED = "cancelled"


class AccountRole(str, Enum):
    PARTICIPANT = "participant"
    RESEARCHER = "researcher"
    AGENT_IDENTITY = "agent_identity"


class Badge(str, Enum):
    NONE = "none"
    VERIFIED = "verified"
    BOT = "bot"
    MODERATOR_A = "moderator_a"
    MODERATOR_B = "moderator_b"
    ANONYMOUS = "anonymous"


class GenderTag(str, Enum):
    FEMALE = "female"
    MALE = "male"
    NEUTRAL = "neutral"


class SourceRole(str, Enum):
    USER = "user"
    BOT = "bot"
    MODERATOR = "moderator"
    SCRIPT = "script"
    SYSTEM = "system"


class ContentKind(str, Enum):
    POST = "post"
    COMMENT = "comment"
    MESSAGE = "message"


class EventKind(str, Enum):
    PARTICIPANT_JOINED = "participant_joined"
    SESSION_STARTED = "session_started"
    CONTENT_CREATED = "content_created"
    REACTION_CHANGED = "reaction_changed"
    MODERATION_FLAGGED = "moderation_flagged"
    MODERATION_DELETED = "moderation_deleted"
    MODERATION_POPUP = "moderation_popup"
    USER_BANNED = "user_banned"
    AGENT_RESPONSE_SCHEDULED = "agent_response_scheduled"
    AGENT_RESPONSE_EMITTED = "agent_response_emitted"
    SCRIPT_RELEASED = "script_released"
    MANUAL_TRIGGER = "manual_trigger"
    SESSION_ENDED = "session_ended"
    # Not in the original event taxonomy: records scheduled work that could
    # not fire before session end, so exports stay complete.
    ACTION_DROPPED = "action_dropped"


# Built-in (non-emoji) reaction names; anything else is an emoji symbol.
REACTION_LIKE = "like"
REACTION_UPVOTE = "upvote"
REACTION_DOWNVOTE = "downvote"
REACTION_SHARE = "share"
BUILTIN_REACTIONS = frozenset(
    {REACTION_LIKE, REACTION_UPVOTE, REACTION_DOWNVOTE, REACTION_SHARE}
)


def reaction_allowed(
    layout: Layout, reaction: str, emoji_set: Optional[list[str]] = None
) -> bool:
    """Layout gating for reactions.

    Likes: instagram/facebook.  Up/downvotes: reddit.  Shares: facebook.
    Emoji reactions: chat layouts and facebook, restricted to the template's
    emoji set when one is configured.
    """
    if reaction == REACTION_LIKE:
        return layout in (Layout.INSTAGRAM, Layout.FACEBOOK)
    if reaction in (REACTION_UPVOTE, REACTION_DOWNVOTE):
        return layout is Layout.REDDIT
    if reaction == REACTION_SHARE:
        return layout is Layout.FACEBOOK
    if layout in CHAT_LAYOUTS or layout is Layout.FACEBOOK:
        return emoji_set is None or reaction in emoji_set
    return False


@dataclass
class DelayModel:
    """Response-delay configuration: fixed base or uniform jitter."""

    base_delay_s: float = 0.0
    randomize: bool = False
    jitter_min_s: float = 0.0
    jitter_max_s: float = 0.0

    def validate(self) -> list[str]:
        errs = []
        if self.base_delay_s < 0:
            errs.append("base_delay_s must be non-negative")
        if self.jitter_min_s < 0 or self.jitter_max_s < 0:
            errs.append("jitter bounds must be non-negative")
        if self.randomize and self.jitter_min_s > self.jitter_max_s:
            errs.append("jitter_min_s exceeds jitter_max_s")
        return errs

    def sample_s(self, rng: Random) -> float:
        if self.randomize:
            return rng.uniform(self.jitter_min_s, self.jitter_max_s)
        return self.base_delay_s

    def sample_ms(self, rng: Random) -> int:
        return int(round(self.sample_s(rng) * 1000))


@dataclass
class Visual:
    emoji_set: Optional[list[str]] = None
    chat_background: Optional[str] = None


@dataclass
class Experiment:
    id: str
    name: str
    kind: ExperimentKind
    session_duration_s: int
    waiting_min_participants: int
    waiting_max_wait_s: int
    max_participants_per_instance: int
    max_concurrent_instances: int
    details_visible: bool = False
    template_ids: list[str] = field(default_factory=list)
    start_below_min: bool = True
    individual_assignment: bool = False


@dataclass
class Template:
    id: str
    experiment_id: str
    layout: Layout
    agent_config_ids: list[str] = field(default_factory=list)
    moderation_rule_ids: list[str] = field(default_factory=list)
    scripted_item_ids: list[str] = field(default_factory=list)
    visual: Visual = field(default_factory=Visual)


@dataclass
class Instance:
    id: str
    template_id: str
    experiment_id: str
    state: InstanceState = InstanceState.FORMING
    started_at: Optional[int] = None
    ends_at: Optional[int] = None
    participant_ids: list[str] = field(default_factory=list)
    rng_seed: int = 0
    next_seq: int = 0
    interrupted: bool = False


@dataclass
class UserAccount:
    id: str
    email: str
    credential: str  # salted hash reference, never exported
    display_name: str
    account_role: AccountRole
    external_id: Optional[str] = None
    redirect_url: Optional[str] = None
    avatar_id: Optional[str] = None
    badge: Badge = Badge.NONE
    banned_in: set[str] = field(default_factory=set)


@dataclass
class Avatar:
    id: str
    image_ref: str
    gender_tag: GenderTag


@dataclass
class Engagement:
    likes: int = 0
    upvotes: int = 0
    downvotes: int = 0
    shares: int = 0
    reactions: dict[str, int] = field(default_factory=dict)

    def copy(self) -> "Engagement":
        return Engagement(
            likes=self.likes,
            upvotes=self.upvotes,
            downvotes=self.downvotes,
            shares=self.shares,
            reactions=dict(self.reactions),
        )

    def bump(self, reaction: str, delta: int) -> None:
        if reaction == REACTION_LIKE:
            self.likes += delta
        elif reaction == REACTION_UPVOTE:
            self.upvotes += delta
        elif reaction == REACTION_DOWNVOTE:
            self.downvotes += delta
        elif reaction == REACTION_SHARE:
            self.shares += delta
        else:
            self.reactions[reaction] = self.reactions.get(reaction, 0) + delta
            if self.reactions[reaction] == 0:
                del self.reactions[reaction]


@dataclass
class FlagRecord:
    rule_id: str
    label_text: str
    at: int


@dataclass
class ContentItem:
    id: str
    instance_id: str
    content_kind: ContentKind
    author_user_id: str
    source_role: SourceRole
    body: str
    created_at: int
    parent_id: Optional[str] = None
    media: list[str] = field(default_factory=list)
    deleted_at: Optional[int] = None
    flags: list[FlagRecord] = field(default_factory=list)
    engagement: Engagement = field(default_factory=Engagement)
    flair: Optional[str] = None

    def __post_init__(self) -> None:
        if not isinstance(self.source_role, SourceRole):
            self.source_role = SourceRole(self.source_role)


@dataclass
class SessionEvent:
    seq: int
    instance_id: str
    at: int
    kind: EventKind
    payload: dict


def validate_experiment(
    experiment: Experiment, templates: dict[str, Template]
) -> list[str]:
    """Check every experiment/template invariant; returns violation strings
    (empty list means ok)."""
    violations: list[str] = []
    if experiment.session_duration_s <= 0:
        violations.append("session_duration_s: must be positive")
    if experiment.waiting_min_participants <= 0:
        violations.append("waiting_min_participants: must be positive")
    if experiment.waiting_max_wait_s < 0:
        violations.append("waiting_max_wait_s: must be non-negative")
    if experiment.max_participants_per_instance <= 0:
        violations.append("max_participants_per_instance: must be positive")
    if experiment.max_concurrent_instances <= 0:
        violations.append("max_concurrent_instances: must be positive")
    if experiment.waiting_min_participants > experiment.max_participants_per_instance:
        violations.append("waiting_min_participants: min exceeds max")
    if not experiment.template_ids:
        violations.append("template_ids: must be non-empty")
    for tid in experiment.template_ids:
        template = templates.get(tid)
        if template is None:
            violations.append(f"template_ids: unresolved template reference {tid}")
            continue
        if layout_kind(template.layout) != experiment.kind:
            violations.append(
                f"templates[{tid}].layout: layout/kind mismatch "
                f"({template.layout.value} vs {experiment.kind.value})"
            )
        if (
            experiment.kind == ExperimentKind.FEED
            and template.visual.chat_background is not None
        ):
            violations.append(
                f"templates[{tid}].visual.chat_background: only meaningful for chat"
            )
    return violations


def thread_of(item: ContentItem, items: dict[str, ContentItem]) -> list[ContentItem]:
    """Ancestor chain from the root post/message down to ``item``."""
    chain = [item]
    seen = {item.id}
    cursor = item
    while cursor.parent_id is not None:
        parent = items.get(cursor.parent_id)
        if parent is None:
            raise StructuralIntegrityError(
                f"dangling parent reference {cursor.parent_id} on {cursor.id}"
            )
        if parent.id in seen:
            raise StructuralIntegrityError(f"parent cycle through {parent.id}")
        chain.append(parent)
        seen.add(parent.id)
        cursor = parent
    chain.reverse()
    return chain
