"""Storage for all collections and the per-instance append-only event logs.

Single-node, in-memory collections with optional durability to a data
directory: config collections snapshot to JSON, event logs append to JSONL
files flushed on every write so a crash never loses an acknowledged event.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict
from enum import Enum
from pathlib import Path
from typing import Optional

from .agents import AgentConfig, AgentMode, Trigger
from .errors import AuthorizationError, NotFoundError, SerializationViolation
from .models import (
    AccountRole,
    Avatar,
    Badge,
    ContentItem,
    ContentKind,
    DelayModel,
    Engagement,
    EventKind,
    Experiment,
    ExperimentKind,
    FlagRecord,
    GenderTag,
    Instance,
    InstanceState,
    Layout,
    SessionEvent,
    SourceRole,
    Template,
    UserAccount,
    Visual,
)
from .moderation import (
    ActionKind,
    AiDetection,
    KeywordDetection,
    ModerationRule,
    RegexDetection,
    RuleAction,
    ViolationLedger,
)
from .providers import ModelConfig
from .scheduling import ScriptedItem


class Store:
    def __init__(self, data_dir: Optional[str] = None):
        self.experiments: dict[str, Experiment] = {}
        self.templates: dict[str, Template] = {}
        self.users: dict[str, UserAccount] = {}
        self.avatars: dict[str, Avatar] = {}
        self.agent_configs: dict[str, AgentConfig] = {}
        self.model_configs: dict[str, ModelConfig] = {}
        self.rules: dict[str, ModerationRule] = {}
        self.scripted_items: dict[str, ScriptedItem] = {}
        self.instances: dict[str, Instance] = {}
        self.events: dict[str, list[SessionEvent]] = {}
        self.content: dict[str, dict[str, ContentItem]] = {}
        self.violations = ViolationLedger()
        self._id_counter = 0
        self.data_dir = Path(data_dir) if data_dir else None
        self._event_files: dict[str, object] = {}
        if self.data_dir:
            self.data_dir.mkdir(parents=True, exist_ok=True)
            (self.data_dir / "events").mkdir(exist_ok=True)
            self._load()

    # --- identifiers ---------------------------------------------------

    def new_id(self, prefix: str) -> str:
        """Opaque, creation-ordered, sortable identifier."""
        self._id_counter += 1
        return f"{prefix}{self._id_counter:08d}"

    # --- users ---------------------------------------------------------

    def user_by_email(self, email: str) -> Optional[UserAccount]:
        for user in self.users.values():
            if user.email == email:
                return user
        return None

    # --- event log -----------------------------------------------------

    def append_event(self, instance: Instance, event: SessionEvent) -> int:
        if event.seq != instance.next_seq:
            raise SerializationViolation(
                f"event seq {event.seq} != expected {instance.next_seq} "
                f"for instance {instance.id}"
            )
        self.events.setdefault(instance.id, []).append(event)
        instance.next_seq += 1
        if self.data_dir:
            fh = self._event_files.get(instance.id)
            if fh is None:
                path = self.data_dir / "events" / f"{instance.id}.jsonl"
                fh = open(path, "a", encoding="utf-8")
                self._event_files[instance.id] = fh
            fh.write(json.dumps(event_to_dict(event), sort_keys=True) + "\n")
            fh.flush()
            os.fsync(fh.fileno())
        return event.seq

    def events_of(self, instance_id: str) -> list[SessionEvent]:
        return self.events.get(instance_id, [])

    # --- content -------------------------------------------------------

    def add_content(self, item: ContentItem) -> None:
        self.content.setdefault(item.instance_id, {})[item.id] = item

    def content_of(self, instance_id: str) -> dict[str, ContentItem]:
        return self.content.get(instance_id, {})

    def query_visible(self, instance_id: str, viewer: UserAccount) -> list[ContentItem]:
        """Chronological content for a viewer: participants and agent
        identities see non-deleted items only; researchers see everything."""
        instance = self.instances.get(instance_id)
        if instance is None:
            raise NotFoundError(f"instance {instance_id}")
        is_researcher = viewer.account_role == AccountRole.RESEARCHER
        is_member = viewer.id in instance.participant_ids
        is_agent = viewer.account_role == AccountRole.AGENT_IDENTITY
        if not (is_researcher or is_member or is_agent):
            raise AuthorizationError(f"{viewer.id} is not a member of {instance_id}")
        items = sorted(self.content_of(instance_id).values(), key=lambda i: (i.created_at, i.id))
        if is_researcher:
            return items
        return [i for i in items if i.deleted_at is None]

    # --- durability ----------------------------------------------------

    _COLLECTIONS = (
        "experiments",
        "templates",
        "users",
        "avatars",
        "agent_configs",
        "model_configs",
        "rules",
        "scripted_items",
        "instances",
    )

    def flush(self) -> None:
        if not self.data_dir:
            return
        snapshot = {
            name: {k: _to_jsonable(v) for k, v in getattr(self, name).items()}
            for name in self._COLLECTIONS
        }
        snapshot["_id_counter"] = self._id_counter
        snapshot["violations"] = {
            "|".join(k): v for k, v in self.violations.counts.items()
        }
        tmp = self.data_dir / "collections.json.tmp"
        tmp.write_text(json.dumps(snapshot, sort_keys=True, indent=2), encoding="utf-8")
        tmp.replace(self.data_dir / "collections.json")
        for fh in self._event_files.values():
            fh.flush()

    def close(self) -> None:
        self.flush()
        for fh in self._event_files.values():
            fh.close()
        self._event_files.clear()

    def _load(self) -> None:
        path = self.data_dir / "collections.json"
        if path.exists():
            snapshot = json.loads(path.read_text(encoding="utf-8"))
            self._id_counter = snapshot.get("_id_counter", 0)
            for key, count in snapshot.get("violations", {}).items():
                self.violations.counts[tuple(key.split("|"))] = count
            loaders = {
                "experiments": experiment_from_dict,
                "templates": template_from_dict,
                "users": user_from_dict,
                "avatars": avatar_from_dict,
                "agent_configs": agent_from_dict,
                "model_configs": model_config_from_dict,
                "rules": rule_from_dict,
                "scripted_items": scripted_from_dict,
                "instances": instance_from_dict,
            }
            for name, loader in loaders.items():
                target = getattr(self, name)
                for key, raw in snapshot.get(name, {}).items():
                    target[key] = loader(raw)
        events_dir = self.data_dir / "events"
        for file in sorted(events_dir.glob("*.jsonl")):
            instance_id = file.stem
            log: list[SessionEvent] = []
            for line in file.read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                try:
                    log.append(event_from_dict(json.loads(line)))
                except json.JSONDecodeError:
                    break  # torn tail write from a crash; keep the prefix
            self.events[instance_id] = log
            instance = self.instances.get(instance_id)
            if instance is not None:
                instance.next_seq = len(log)
                # A log that survived a crash mid-session is closed out as
                # completed-with-interruption; it can only be exported.
                if instance.state == InstanceState.RUNNING:
                    instance.state = InstanceState.COMPLETED
                    instance.interrupted = True
        self._rebuild_content()

    def _rebuild_content(self) -> None:
        """Replay content projections from the event logs."""
        for instance_id, log in self.events.items():
            items: dict[str, ContentItem] = {}
            for event in log:
                p = event.payload
                if event.kind in (EventKind.CONTENT_CREATED, EventKind.SCRIPT_RELEASED):
                    item = ContentItem(
                        id=p["item_id"],
                        instance_id=instance_id,
                        content_kind=ContentKind(p["content_kind"]),
                        author_user_id=p["author_user_id"],
                        source_role=SourceRole(p["source_role"]),
                        body=p.get("body", ""),
                        created_at=event.at,
                        parent_id=p.get("parent_id"),
                        media=list(p.get("media", [])),
                        flair=p.get("flair"),
                        engagement=engagement_from_dict(p.get("initial_engagement", {})),
                    )
                    items[item.id] = item
                elif event.kind == EventKind.REACTION_CHANGED:
                    item = items.get(p["item_id"])
                    if item:
                        item.engagement.bump(p["reaction"], 1 if p["active"] else -1)
                elif event.kind == EventKind.MODERATION_FLAGGED:
                    item = items.get(p["item_id"])
                    if item:
                        item.flags.append(FlagRecord(p["rule_id"], p["label"], event.at))
                elif event.kind == EventKind.MODERATION_DELETED:
                    item = items.get(p["item_id"])
                    if item and item.deleted_at is None:
                        item.deleted_at = event.at
            if items:
                self.content[instance_id] = items


# --- serialization helpers ---------------------------------------------


def _to_jsonable(obj) -> dict:
    d = asdict(obj)
    return _plain(d)


def _plain(value):
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, set):
        return sorted(_plain(v) for v in value)
    return value


def event_to_dict(event: SessionEvent) -> dict:
    return {
        "seq": event.seq,
        "instance_id": event.instance_id,
        "at": event.at,
        "kind": event.kind.value,
        "payload": event.payload,
    }


def event_from_dict(raw: dict) -> SessionEvent:
    return SessionEvent(
        seq=raw["seq"],
        instance_id=raw["instance_id"],
        at=raw["at"],
        kind=EventKind(raw["kind"]),
        payload=raw.get("payload", {}),
    )


def engagement_from_dict(raw: dict) -> Engagement:
    return Engagement(
        likes=raw.get("likes", 0),
        upvotes=raw.get("upvotes", 0),
        downvotes=raw.get("downvotes", 0),
        shares=raw.get("shares", 0),
        reactions=dict(raw.get("reactions", {})),
    )


def delay_from_dict(raw: dict) -> DelayModel:
    return DelayModel(
        base_delay_s=raw.get("base_delay_s", 0.0),
        randomize=raw.get("randomize", False),
        jitter_min_s=raw.get("jitter_min_s", 0.0),
        jitter_max_s=raw.get("jitter_max_s", 0.0),
    )


def experiment_from_dict(raw: dict) -> Experiment:
    return Experiment(
        id=raw["id"],
        name=raw["name"],
        kind=ExperimentKind(raw["kind"]),
        session_duration_s=raw["session_duration_s"],
        waiting_min_participants=raw["waiting_min_participants"],
        waiting_max_wait_s=raw["waiting_max_wait_s"],
        max_participants_per_instance=raw["max_participants_per_instance"],
        max_concurrent_instances=raw["max_concurrent_instances"],
        details_visible=raw.get("details_visible", False),
        template_ids=list(raw.get("template_ids", [])),
        start_below_min=raw.get("start_below_min", True),
        individual_assignment=raw.get("individual_assignment", False),
    )


def template_from_dict(raw: dict) -> Template:
    visual = raw.get("visual") or {}
    return Template(
        id=raw["id"],
        experiment_id=raw["experiment_id"],
        layout=Layout(raw["layout"]),
        agent_config_ids=list(raw.get("agent_config_ids", [])),
        moderation_rule_ids=list(raw.get("moderation_rule_ids", [])),
        scripted_item_ids=list(raw.get("scripted_item_ids", [])),
        visual=Visual(
            emoji_set=visual.get("emoji_set"),
            chat_background=visual.get("chat_background"),
        ),
    )


def user_from_dict(raw: dict) -> UserAccount:
    return UserAccount(
        id=raw["id"],
        email=raw.get("email", ""),
        credential=raw.get("credential", ""),
        display_name=raw["display_name"],
        account_role=AccountRole(raw["account_role"]),
        external_id=raw.get("external_id"),
        redirect_url=raw.get("redirect_url"),
        avatar_id=raw.get("avatar_id"),
        badge=Badge(raw.get("badge", "none")),
        banned_in=set(raw.get("banned_in", [])),
    )


def avatar_from_dict(raw: dict) -> Avatar:
    return Avatar(id=raw["id"], image_ref=raw["image_ref"], gender_tag=GenderTag(raw["gender_tag"]))


def agent_from_dict(raw: dict) -> AgentConfig:
    return AgentConfig(
        id=raw["id"],
        identity_user_id=raw["identity_user_id"],
        model_config_id=raw["model_config_id"],
        mode=AgentMode(raw.get("mode", "human")),
        custom_prompt=raw.get("custom_prompt", ""),
        delay=delay_from_dict(raw.get("delay", {})),
        triggers={Trigger(t) for t in raw.get("triggers", [])},
        context_window_items=raw.get("context_window_items", 10),
    )


def model_config_from_dict(raw: dict) -> ModelConfig:
    return ModelConfig(
        id=raw["id"],
        endpoint_url=raw["endpoint_url"],
        model_name=raw["model_name"],
        credential=raw.get("credential"),
        params=dict(raw.get("params", {})),
    )


def rule_from_dict(raw: dict) -> ModerationRule:
    det = raw["detection"]
    det_type = det.get("type") or ("words" in det and "keyword") or ("pattern" in det and "regex") or "ai"
    if det_type == "keyword":
        detection = KeywordDetection(words=list(det["words"]))
    elif det_type == "regex":
        detection = RegexDetection(pattern=det["pattern"])
    else:
        detection = AiDetection(prompt=det["prompt"], model_config_id=det.get("model_config_id", ""))
    act = raw["action"]
    action = RuleAction(
        kind=ActionKind(act["kind"] if "kind" in act else act["type"]),
        label=act.get("label", ""),
        message=act.get("message", ""),
        ack_required=act.get("ack_required", False),
    )
    return ModerationRule(
        id=raw["id"],
        detection=detection,
        action=action,
        target_sources={SourceRole(s) for s in raw.get("target_sources", [])},
        ban_threshold=raw.get("ban_threshold"),
        delay=delay_from_dict(raw.get("delay", {})),
        enabled=raw.get("enabled", True),
        fail_closed=raw.get("fail_closed", False),
    )


def scripted_from_dict(raw: dict) -> ScriptedItem:
    return ScriptedItem(
        id=raw["id"],
        template_id=raw["template_id"],
        offset_s=raw["offset_s"],
        author_user_id=raw["author_user_id"],
        content_kind=ContentKind(raw["content_kind"]),
        body=raw.get("body", ""),
        parent_script_id=raw.get("parent_script_id"),
        media=list(raw.get("media", [])),
        initial_engagement=engagement_from_dict(raw.get("initial_engagement", {})),
        flair=raw.get("flair"),
    )


def instance_from_dict(raw: dict) -> Instance:
    return Instance(
        id=raw["id"],
        template_id=raw["template_id"],
        experiment_id=raw["experiment_id"],
        state=InstanceState(raw["state"]),
        started_at=raw.get("started_at"),
        ends_at=raw.get("ends_at"),
        participant_ids=list(raw.get("participant_ids", [])),
        rng_seed=raw.get("rng_seed", 0),
        next_seq=raw.get("next_seq", 0),
        interrupted=raw.get("interrupted", False),
    )
