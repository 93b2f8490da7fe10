"""Per-instance session runtime.

One engine owns one instance: its event log, timer queue, seeded generator,
scripted-content release, moderation pipeline, and agent responses. All
mutations are serialized through the engine's lock, and every timestamp
comes from the injected clock, so a run with a virtual clock, a fixed seed,
and the stub provider replays to an identical event log.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field
from random import Random
from typing import Callable, Optional
from urllib.parse import quote

from .agents import AgentConfig, compose_prompt, match_trigger, trigger_for_event
from .errors import (
    AuthorizationError,
    BannedError,
    InvalidParentError,
    KindMismatchError,
    LifecycleError,
    NotFoundError,
    ProviderError,
    ReactionNotAllowedError,
    SessionClosedError,
)
from .models import (
    AccountRole,
    CHAT_LAYOUTS,
    ContentItem,
    ContentKind,
    Engagement,
    EventKind,
    Experiment,
    Instance,
    InstanceState,
    REACTION_DOWNVOTE,
    REACTION_UPVOTE,
    SessionEvent,
    SourceRole,
    Template,
    UserAccount,
    reaction_allowed,
)
from .moderation import ActionKind, AiDetection, ModerationRule, Verdict, detect
from .providers import Provider, generate_with_retry
from .scheduling import (
    ScriptedItem,
    TIER_SESSION_END,
    TimerQueue,
    release_order,
)
from .store import Store

logger = logging.getLogger(__name__)

DEFAULT_CHAIN_DEPTH_LIMIT = 3


@dataclass
class ReleaseScript:
    script: ScriptedItem


@dataclass
class AgentEmit:
    pending_id: int


@dataclass
class ModerationEffect:
    rule_id: str
    item_id: str
    evidence: str


@dataclass
class EndSession:
    reason: str = "elapsed"


@dataclass
class PendingResponse:
    id: int
    agent_id: str
    due_ms: int
    trigger_seq: int
    trigger_item_id: Optional[str]
    chain_depth: int
    manual_instruction: Optional[str] = None
    manual: bool = False


class SessionEngine:
    def __init__(
        self,
        store: Store,
        experiment: Experiment,
        template: Template,
        instance: Instance,
        providers: dict[str, Provider],
        chain_depth_limit: int = DEFAULT_CHAIN_DEPTH_LIMIT,
        provider_retries: int = 3,
        retry_sleep: Callable[[float], None] = lambda _s: None,
    ):
        self.store = store
        self.experiment = experiment
        self.template = template
        self.instance = instance
        self.providers = providers
        self.chain_depth_limit = chain_depth_limit
        self.provider_retries = provider_retries
        self.retry_sleep = retry_sleep
        self.lock = threading.Lock()
        self.rng = Random(instance.rng_seed)
        self.timers = TimerQueue()
        self.agents: list[AgentConfig] = [
            store.agent_configs[a] for a in template.agent_config_ids
        ]
        self.rules: list[ModerationRule] = [
            store.rules[r] for r in template.moderation_rule_ids
        ]
        self.scripts: list[ScriptedItem] = [
            store.scripted_items[s] for s in template.scripted_item_ids
        ]
        self._script_concrete: dict[str, str] = {}  # script id -> released item id
        self._chain_depth: dict[str, int] = {}  # item id -> bot chain depth
        self._pending: dict[int, PendingResponse] = {}
        self._auto_pending: dict[str, int] = {}  # agent id -> pending id
        self._pending_counter = 0
        self._reaction_state: dict[tuple[str, str, str], bool] = {}
        self._agent_by_identity = {a.identity_user_id: a for a in self.agents}

    # --- lifecycle -----------------------------------------------------

    def start(self, now: int) -> None:
        with self.lock:
            if self.instance.state != InstanceState.FORMING:
                raise LifecycleError(f"instance {self.instance.id} already started")
            self.instance.state = InstanceState.RUNNING
            self.instance.started_at = now
            self.instance.ends_at = now + self.experiment.session_duration_s * 1000
            for user_id in self.instance.participant_ids:
                self._append(EventKind.PARTICIPANT_JOINED, {"user_id": user_id}, now)
            self._append(
                EventKind.SESSION_STARTED,
                {
                    "template_id": self.template.id,
                    "layout": self.template.layout.value,
                    "participant_ids": list(self.instance.participant_ids),
                    "ends_at": self.instance.ends_at,
                },
                now,
            )
            for script in release_order(self.scripts):
                self.timers.push(now + int(round(script.offset_s * 1000)), ReleaseScript(script))
            self.timers.push(self.instance.ends_at, EndSession(), tier=TIER_SESSION_END)

    def force_stop(self, now: int) -> None:
        with self.lock:
            if self.instance.state != InstanceState.RUNNING:
                raise LifecycleError("instance is not running")
            self._end(now, reason="force")

    # --- timers --------------------------------------------------------

    def next_due(self) -> Optional[int]:
        with self.lock:
            return self.timers.peek_due()

    def concrete_item_for_script(self, script_id: str) -> Optional[str]:
        with self.lock:
            return self._script_concrete.get(script_id)

    def tick(self, now: int) -> None:
        """Fire every due action in (due_time, registration) order at its
        logical due time; late ticks release everything due."""
        with self.lock:
            if self.instance.state != InstanceState.RUNNING:
                return
            for due, action in self.timers.pop_due(now):
                self._execute(action, due)
                if self.instance.state != InstanceState.RUNNING:
                    break

    def _execute(self, action, at: int) -> None:
        if isinstance(action, ReleaseScript):
            self._release_script(action.script, at)
        elif isinstance(action, AgentEmit):
            self._emit_agent_response(action.pending_id, at)
        elif isinstance(action, ModerationEffect):
            self._apply_moderation_effect(action, at)
        elif isinstance(action, EndSession):
            self._end(at, reason=action.reason)

    # --- event log -----------------------------------------------------

    def _append(self, kind: EventKind, payload: dict, at: int) -> SessionEvent:
        event = SessionEvent(
            seq=self.instance.next_seq,
            instance_id=self.instance.id,
            at=at,
            kind=kind,
            payload=payload,
        )
        self.store.append_event(self.instance, event)
        self._scan_agent_triggers(event)
        return event

    # --- content -------------------------------------------------------

    def _check_open(self, now: int) -> None:
        if self.instance.state != InstanceState.RUNNING:
            raise SessionClosedError(f"instance {self.instance.id} is not running")
        if self.instance.ends_at is not None and now > self.instance.ends_at:
            raise SessionClosedError(f"session ended at {self.instance.ends_at}")

    def _validate_kind(self, kind: ContentKind, parent_id: Optional[str]) -> None:
        is_chat = self.template.layout in CHAT_LAYOUTS
        if is_chat and kind != ContentKind.MESSAGE:
            raise KindMismatchError(f"{kind.value} not allowed in a chat layout")
        if not is_chat and kind == ContentKind.MESSAGE:
            raise KindMismatchError("messages only allowed in chat layouts")
        if kind == ContentKind.COMMENT and parent_id is None:
            raise InvalidParentError("comments require a parent")
        if kind == ContentKind.POST and parent_id is not None:
            raise InvalidParentError("posts cannot have a parent")
        if parent_id is not None and parent_id not in self.store.content_of(self.instance.id):
            raise InvalidParentError(f"parent {parent_id} not in instance")

    def submit_content(
        self,
        author: UserAccount,
        kind: ContentKind,
        body: str,
        now: int,
        media: Optional[list[str]] = None,
        parent_id: Optional[str] = None,
        flair: Optional[str] = None,
    ) -> ContentItem:
        with self.lock:
            self._check_open(now)
            if self.instance.id in author.banned_in:
                raise BannedError(f"{author.id} is banned from this instance")
            if author.id not in self.instance.participant_ids:
                raise AuthorizationError(f"{author.id} does not participate in {self.instance.id}")
            self._validate_kind(kind, parent_id)
            return self._create_item(
                author_id=author.id,
                source_role=SourceRole.USER,
                kind=kind,
                body=body,
                at=now,
                media=media or [],
                parent_id=parent_id,
                flair=flair,
                chain_depth=0,
            )

    def _create_item(
        self,
        author_id: str,
        source_role: SourceRole,
        kind: ContentKind,
        body: str,
        at: int,
        media: list[str],
        parent_id: Optional[str],
        flair: Optional[str],
        chain_depth: int,
        cause_seq: Optional[int] = None,
        engagement: Optional[Engagement] = None,
        item_id: Optional[str] = None,
    ) -> ContentItem:
        item = ContentItem(
            id=item_id or self.store.new_id("c"),
            instance_id=self.instance.id,
            content_kind=kind,
            author_user_id=author_id,
            source_role=source_role,
            body=body,
            created_at=at,
            parent_id=parent_id,
            media=list(media),
            flair=flair,
            engagement=engagement.copy() if engagement else Engagement(),
        )
        self.store.add_content(item)
        self._chain_depth[item.id] = chain_depth
        payload = {
            "item_id": item.id,
            "author_user_id": author_id,
            "source_role": source_role.value,
            "content_kind": kind.value,
            "parent_id": parent_id,
            "body": body,
            "media": list(media),
            "flair": flair,
            "chain_depth": chain_depth,
        }
        if cause_seq is not None:
            payload["cause_seq"] = cause_seq
        self._append(EventKind.CONTENT_CREATED, payload, at)
        self._run_moderation(item, at)
        return item

    # --- scripted content ----------------------------------------------

    def _release_script(self, script: ScriptedItem, at: int) -> None:
        parent_id = None
        if script.parent_script_id is not None:
            parent_id = self._script_concrete.get(script.parent_script_id)
        item = ContentItem(
            id=self.store.new_id("c"),
            instance_id=self.instance.id,
            content_kind=script.content_kind,
            author_user_id=script.author_user_id,
            source_role=SourceRole.SCRIPT,
            body=script.body,
            created_at=at,
            parent_id=parent_id,
            media=list(script.media),
            flair=script.flair,
            engagement=script.initial_engagement.copy(),
        )
        self.store.add_content(item)
        self._script_concrete[script.id] = item.id
        self._chain_depth[item.id] = 0
        self._append(
            EventKind.SCRIPT_RELEASED,
            {
                "script_id": script.id,
                "item_id": item.id,
                "author_user_id": script.author_user_id,
                "source_role": SourceRole.SCRIPT.value,
                "content_kind": script.content_kind.value,
                "parent_id": parent_id,
                "body": script.body,
                "media": list(script.media),
                "flair": script.flair,
                "initial_engagement": {
                    "likes": script.initial_engagement.likes,
                    "upvotes": script.initial_engagement.upvotes,
                    "downvotes": script.initial_engagement.downvotes,
                    "shares": script.initial_engagement.shares,
                    "reactions": dict(script.initial_engagement.reactions),
                },
            },
            at,
        )
        self._run_moderation(item, at)

    # --- reactions -----------------------------------------------------

    def react(self, user: UserAccount, item_id: str, reaction: str, now: int) -> Engagement:
        with self.lock:
            self._check_open(now)
            if self.instance.id in user.banned_in:
                raise BannedError(f"{user.id} is banned from this instance")
            if user.id not in self.instance.participant_ids:
                raise AuthorizationError(f"{user.id} does not participate in {self.instance.id}")
            item = self.store.content_of(self.instance.id).get(item_id)
            if item is None:
                raise NotFoundError(f"item {item_id}")
            if item.deleted_at is not None:
                raise NotFoundError(f"item {item_id} has been removed")
            emoji_set = self.template.visual.emoji_set
            if not reaction_allowed(self.template.layout, reaction, emoji_set):
                raise ReactionNotAllowedError(
                    f"reaction {reaction!r} not allowed on layout {self.template.layout.value}"
                )
            # Up/downvotes are mutually exclusive; everything else toggles
            # independently.
            if reaction in (REACTION_UPVOTE, REACTION_DOWNVOTE):
                other = REACTION_DOWNVOTE if reaction == REACTION_UPVOTE else REACTION_UPVOTE
                if self._reaction_state.get((item_id, user.id, other)):
                    self._set_reaction(item, user.id, other, False, now)
            active = not self._reaction_state.get((item_id, user.id, reaction))
            self._set_reaction(item, user.id, reaction, active, now)
            return item.engagement.copy()

    def _set_reaction(self, item: ContentItem, user_id: str, reaction: str, active: bool, at: int) -> None:
        self._reaction_state[(item.id, user_id, reaction)] = active
        item.engagement.bump(reaction, 1 if active else -1)
        self._append(
            EventKind.REACTION_CHANGED,
            {"item_id": item.id, "user_id": user_id, "reaction": reaction, "active": active},
            at,
        )

    # --- moderation ----------------------------------------------------

    def _run_moderation(self, item: ContentItem, at: int) -> None:
        for rule in self.rules:
            if not rule.enabled or not rule.targets(item.source_role):
                continue
            provider = None
            if isinstance(rule.detection, AiDetection):
                provider = self.providers.get(rule.detection.model_config_id)
            verdict = detect(rule, item, provider)
            if not verdict.matched:
                continue
            delay_ms = rule.delay.sample_ms(self.rng)
            due = at + delay_ms
            effect = ModerationEffect(rule_id=rule.id, item_id=item.id, evidence=verdict.evidence)
            if self.instance.ends_at is not None and due > self.instance.ends_at:
                self._append(
                    EventKind.ACTION_DROPPED,
                    {
                        "action_kind": "moderation_effect",
                        "rule_id": rule.id,
                        "item_id": item.id,
                        "due_at": due,
                        "detail": "due after session end",
                    },
                    at,
                )
                continue
            self.timers.push(due, effect)

    def _apply_moderation_effect(self, effect: ModerationEffect, at: int) -> None:
        rule = self.store.rules[effect.rule_id]
        item = self.store.content_of(self.instance.id).get(effect.item_id)
        if item is None:
            return
        action = rule.action
        if action.kind == ActionKind.FLAG:
            from .models import FlagRecord

            item.flags.append(FlagRecord(rule.id, action.label, at))
            self._append(
                EventKind.MODERATION_FLAGGED,
                {
                    "rule_id": rule.id,
                    "item_id": item.id,
                    "label": action.label,
                    "author_user_id": item.author_user_id,
                    "source_role": SourceRole.MODERATOR.value,
                },
                at,
            )
        elif action.kind == ActionKind.DELETE:
            if item.deleted_at is None:
                item.deleted_at = at
                self._append(
                    EventKind.MODERATION_DELETED,
                    {
                        "rule_id": rule.id,
                        "item_id": item.id,
                        "author_user_id": item.author_user_id,
                        "source_role": SourceRole.MODERATOR.value,
                    },
                    at,
                )
        elif action.kind == ActionKind.POPUP:
            self._append(
                EventKind.MODERATION_POPUP,
                {
                    "rule_id": rule.id,
                    "item_id": item.id,
                    "target_user_id": item.author_user_id,
                    "message": action.message,
                    "ack_required": action.ack_required,
                    "source_role": SourceRole.MODERATOR.value,
                },
                at,
            )
        count = self.store.violations.record(self.instance.id, item.author_user_id, rule.id)
        if self.store.violations.should_ban(rule, count):
            self.ban_user_locked(item.author_user_id, rule.id, at)

    def ban_user(self, user_id: str, rule_id: str, now: int) -> None:
        with self.lock:
            self.ban_user_locked(user_id, rule_id, now)

    def ban_user_locked(self, user_id: str, rule_id: str, at: int) -> None:
        user = self.store.users.get(user_id)
        if user is None:
            return
        if self.instance.id in user.banned_in:
            return  # idempotent
        user.banned_in.add(self.instance.id)
        self._append(
            EventKind.USER_BANNED,
            {"user_id": user_id, "rule_id": rule_id},
            at,
        )

    # --- agents --------------------------------------------------------

    def _scan_agent_triggers(self, event: SessionEvent) -> None:
        if self.instance.state != InstanceState.RUNNING:
            return
        if event.kind in (
            EventKind.AGENT_RESPONSE_SCHEDULED,
            EventKind.AGENT_RESPONSE_EMITTED,
            EventKind.ACTION_DROPPED,
            EventKind.PARTICIPANT_JOINED,
            EventKind.REACTION_CHANGED,
            EventKind.USER_BANNED,
            EventKind.SESSION_ENDED,
        ):
            return
        for agent in self.agents:
            if not match_trigger(agent, event):
                continue
            self._schedule_agent(agent, event)

    def _trigger_depth(self, event: SessionEvent) -> int:
        if event.kind == EventKind.CONTENT_CREATED:
            return event.payload.get("chain_depth", 0)
        return 0

    def _trigger_item_id(self, event: SessionEvent) -> Optional[str]:
        if event.kind in (EventKind.CONTENT_CREATED, EventKind.SCRIPT_RELEASED):
            return event.payload.get("item_id")
        return None

    def _schedule_agent(self, agent: AgentConfig, event: SessionEvent) -> None:
        depth = self._trigger_depth(event) + 1
        if depth > self.chain_depth_limit:
            return
        manual = event.kind == EventKind.MANUAL_TRIGGER
        trigger_item = self._trigger_item_id(event)
        if not manual:
            pending_id = self._auto_pending.get(agent.id)
            if pending_id is not None and pending_id in self._pending:
                # One in-flight automatic response per agent: coalesce the
                # newer trigger into the already scheduled slot.
                pending = self._pending[pending_id]
                pending.trigger_seq = event.seq
                pending.trigger_item_id = trigger_item
                pending.chain_depth = depth
                return
        delay_ms = agent.delay.sample_ms(self.rng)
        due = event.at + delay_ms
        self._pending_counter += 1
        pending = PendingResponse(
            id=self._pending_counter,
            agent_id=agent.id,
            due_ms=due,
            trigger_seq=event.seq,
            trigger_item_id=trigger_item,
            chain_depth=depth,
            manual_instruction=event.payload.get("prompt_text") if manual else None,
            manual=manual,
        )
        self._append(
            EventKind.AGENT_RESPONSE_SCHEDULED,
            {
                "agent_id": agent.id,
                "trigger_seq": event.seq,
                "delay_ms": delay_ms,
                "due_at": due,
            },
            event.at,
        )
        if self.instance.ends_at is not None and due > self.instance.ends_at:
            self._append(
                EventKind.ACTION_DROPPED,
                {
                    "action_kind": "agent_response",
                    "agent_id": agent.id,
                    "due_at": due,
                    "detail": "due after session end",
                },
                event.at,
            )
            return
        self._pending[pending.id] = pending
        if not manual:
            self._auto_pending[agent.id] = pending.id
        self.timers.push(due, AgentEmit(pending.id))

    def _emit_agent_response(self, pending_id: int, at: int) -> None:
        pending = self._pending.pop(pending_id, None)
        if pending is None:
            return
        agent = next(a for a in self.agents if a.id == pending.agent_id)
        if not pending.manual and self._auto_pending.get(agent.id) == pending_id:
            del self._auto_pending[agent.id]
        identity = self.store.users.get(agent.identity_user_id)
        if identity is not None and self.instance.id in identity.banned_in:
            self._append(
                EventKind.ACTION_DROPPED,
                {"action_kind": "agent_response", "agent_id": agent.id, "due_at": at, "detail": "agent banned"},
                at,
            )
            return
        model_config = self.store.model_configs[agent.model_config_id]
        provider = self.providers[agent.model_config_id]
        context = self._context_window(pending.trigger_item_id)
        display_names = {u.id: u.display_name for u in self.store.users.values()}
        request = compose_prompt(agent, model_config, context, display_names, pending.manual_instruction)
        try:
            response = generate_with_retry(
                provider, request, retries=self.provider_retries, sleep=self.retry_sleep
            )
        except ProviderError as exc:
            logger.warning("agent %s provider failure, staying silent: %s", agent.id, exc)
            self._append(
                EventKind.ACTION_DROPPED,
                {
                    "action_kind": "agent_response",
                    "agent_id": agent.id,
                    "due_at": at,
                    "detail": "provider failure",
                },
                at,
            )
            return
        parent_id = None
        kind = ContentKind.MESSAGE if self.template.layout in CHAT_LAYOUTS else ContentKind.POST
        if pending.trigger_item_id is not None:
            trigger_item = self.store.content_of(self.instance.id).get(pending.trigger_item_id)
            if trigger_item is not None:
                if self.template.layout in CHAT_LAYOUTS:
                    parent_id = trigger_item.id
                elif trigger_item.content_kind == ContentKind.POST:
                    parent_id = trigger_item.id
                    kind = ContentKind.COMMENT
                else:
                    parent_id = trigger_item.id
                    kind = ContentKind.COMMENT
        item_id = self.store.new_id("c")
        self._append(
            EventKind.AGENT_RESPONSE_EMITTED,
            {
                "agent_id": agent.id,
                "item_id": item_id,
                "trigger_seq": pending.trigger_seq,
                "chain_depth": pending.chain_depth,
            },
            at,
        )
        self._create_item(
            item_id=item_id,
            author_id=agent.identity_user_id,
            source_role=SourceRole.BOT,
            kind=kind,
            body=response.text,
            at=at,
            media=[],
            parent_id=parent_id,
            flair=None,
            chain_depth=pending.chain_depth,
            cause_seq=pending.trigger_seq,
        )

    def _context_window(self, trigger_item_id: Optional[str]) -> list[ContentItem]:
        """Content up to (and including) the triggering item, creation order."""
        items = list(self.store.content_of(self.instance.id).values())
        if trigger_item_id is not None:
            for idx, item in enumerate(items):
                if item.id == trigger_item_id:
                    items = items[: idx + 1]
                    break
        return items

    def manual_trigger(self, researcher: UserAccount, agent_id: str, prompt_text: str, now: int) -> None:
        with self.lock:
            if researcher.account_role != AccountRole.RESEARCHER:
                raise AuthorizationError("manual triggering requires the researcher role")
            self._check_open(now)
            if not any(a.id == agent_id for a in self.agents):
                raise NotFoundError(f"agent {agent_id} not in this instance")
            self._append(
                EventKind.MANUAL_TRIGGER,
                {
                    "agent_id": agent_id,
                    "researcher_id": researcher.id,
                    "prompt_text": prompt_text,
                },
                now,
            )

    # --- session end ---------------------------------------------------

    def _end(self, at: int, reason: str) -> None:
        # Anything still queued is by construction due after the end; record
        # the drops so exports stay complete, then close the log.
        for due, action in self.timers.drain():
            if isinstance(action, EndSession):
                continue
            self._append(
                EventKind.ACTION_DROPPED,
                {
                    "action_kind": type(action).__name__,
                    "due_at": due,
                    "detail": "session ended",
                },
                at,
            )
        self._pending.clear()
        self._auto_pending.clear()
        outcomes = {}
        for user_id in self.instance.participant_ids:
            user = self.store.users.get(user_id)
            redirect = ""
            if user is not None and user.redirect_url:
                redirect = user.redirect_url.replace(
                    "{EXTERNAL_ID}", quote(user.external_id or "", safe="")
                )
            outcomes[user_id] = redirect
        self.instance.state = InstanceState.COMPLETED
        self._append(
            EventKind.SESSION_ENDED,
            {"reason": reason, "outcomes": outcomes},
            at,
        )
