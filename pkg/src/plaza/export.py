"""Instance export and re-import.

The JSON export is a single canonical document (sorted keys, stable
ordering) so that export -> import -> export is byte-identical. Provider
credentials, emails, and password material are never written. The CSV
bundle uses the frozen column orders documented in docs/export_schema.md.
"""

from __future__ import annotations

import csv
import io
import json
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from .errors import NotFoundError
from .models import (
    AccountRole,
    Badge,
    EventKind,
    UserAccount,
)
from .store import (
    Store,
    _to_jsonable,
    agent_from_dict,
    event_from_dict,
    experiment_from_dict,
    instance_from_dict,
    rule_from_dict,
    scripted_from_dict,
    template_from_dict,
    user_from_dict,
)
from .providers import ModelConfig

EXPORT_VERSION = 1

PARTICIPANT_COLUMNS = [
    "user_id",
    "display_name",
    "external_id",
    "redirect_url",
    "badge",
    "avatar_id",
    "banned",
]
EVENT_COLUMNS = ["seq", "at", "at_iso", "kind", "payload_json"]
CONTENT_COLUMNS = [
    "id",
    "content_kind",
    "parent_id",
    "author_user_id",
    "source_role",
    "body",
    "flair",
    "media_json",
    "created_at",
    "created_at_iso",
    "deleted_at",
    "deleted_at_iso",
    "flags_json",
    "likes",
    "upvotes",
    "downvotes",
    "shares",
    "reactions_json",
]
MODERATION_COLUMNS = ["seq", "at", "at_iso", "kind", "rule_id", "item_id", "user_id", "detail"]

MODERATION_EVENT_KINDS = (
    EventKind.MODERATION_FLAGGED,
    EventKind.MODERATION_DELETED,
    EventKind.MODERATION_POPUP,
    EventKind.USER_BANNED,
)


def iso(ms: Optional[int]) -> Optional[str]:
    if ms is None:
        return None
    return datetime.fromtimestamp(ms / 1000, tz=timezone.utc).isoformat(timespec="milliseconds")


def dump_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _participant_row(user: UserAccount, instance_id: str) -> dict:
    return {
        "user_id": user.id,
        "display_name": user.display_name,
        "external_id": user.external_id,
        "redirect_url": user.redirect_url,
        "badge": user.badge.value,
        "avatar_id": user.avatar_id,
        "banned": instance_id in user.banned_in,
    }


def export_instance_doc(store: Store, instance_id: str) -> dict:
    instance = store.instances.get(instance_id)
    if instance is None:
        raise NotFoundError(f"instance {instance_id}")
    experiment = store.experiments[instance.experiment_id]
    template = store.templates[instance.template_id]
    events = store.events_of(instance_id)
    items = sorted(store.content_of(instance_id).values(), key=lambda i: (i.created_at, i.id))

    participants = [
        _participant_row(store.users[uid], instance_id)
        for uid in instance.participant_ids
        if uid in store.users
    ]
    # Non-participant authors (agent identities, script personas) so the
    # export resolves every foreign reference.
    author_ids = {i.author_user_id for i in items} - set(instance.participant_ids)
    authors = [
        {
            "user_id": uid,
            "display_name": store.users[uid].display_name,
            "account_role": store.users[uid].account_role.value,
            "badge": store.users[uid].badge.value,
            "avatar_id": store.users[uid].avatar_id,
        }
        for uid in sorted(author_ids)
        if uid in store.users
    ]

    agents = []
    for agent_id in template.agent_config_ids:
        agent = store.agent_configs[agent_id]
        model = store.model_configs.get(agent.model_config_id)
        raw = _to_jsonable(agent)
        raw["model_name"] = model.model_name if model else ""
        agents.append(raw)

    rules = []
    for rule_id in template.moderation_rule_ids:
        raw = _to_jsonable(store.rules[rule_id])
        det = raw["detection"]
        if "words" in det:
            det["type"] = "keyword"
        elif "pattern" in det:
            det["type"] = "regex"
        else:
            det["type"] = "ai"
        rules.append(raw)

    scripted = [_to_jsonable(store.scripted_items[sid]) for sid in template.scripted_item_ids]

    violations = [
        {"user_id": user_id, "rule_id": rule_id, "count": count}
        for (iid, user_id, rule_id), count in sorted(store.violations.counts.items())
        if iid == instance_id
    ]
    records = [
        {
            "seq": e.seq,
            "at": e.at,
            "at_iso": iso(e.at),
            "kind": e.kind.value,
            "rule_id": e.payload.get("rule_id"),
            "item_id": e.payload.get("item_id"),
            "user_id": e.payload.get("author_user_id") or e.payload.get("user_id"),
            "detail": e.payload.get("label") or e.payload.get("message") or "",
        }
        for e in events
        if e.kind in MODERATION_EVENT_KINDS
    ]

    return {
        "v": EXPORT_VERSION,
        "meta": {
            "instance": _to_jsonable(instance),
            "experiment": _to_jsonable(experiment),
            "template": _to_jsonable(template),
        },
        "participants": participants,
        "authors": authors,
        "content": [
            {
                **_to_jsonable(item),
                "created_at_iso": iso(item.created_at),
                "deleted_at_iso": iso(item.deleted_at),
            }
            for item in items
        ],
        "events": [
            {
                "seq": e.seq,
                "instance_id": e.instance_id,
                "at": e.at,
                "at_iso": iso(e.at),
                "kind": e.kind.value,
                "payload": e.payload,
            }
            for e in events
        ],
        "moderation": {"rules": rules, "violations": violations, "records": records},
        "agents": agents,
        "scripted_items": scripted,
    }


def import_instance_doc(store: Store, doc: dict) -> str:
    """Load an exported document into a store; inverse of export_instance_doc
    up to the redactions (emails and credentials are gone for good)."""
    meta = doc["meta"]
    experiment = experiment_from_dict(meta["experiment"])
    template = template_from_dict(meta["template"])
    instance = instance_from_dict(meta["instance"])
    store.experiments[experiment.id] = experiment
    store.templates[template.id] = template
    store.instances[instance.id] = instance

    for row in doc["participants"]:
        user = UserAccount(
            id=row["user_id"],
            email="",
            credential="",
            display_name=row["display_name"],
            account_role=AccountRole.PARTICIPANT,
            external_id=row.get("external_id"),
            redirect_url=row.get("redirect_url"),
            avatar_id=row.get("avatar_id"),
            badge=Badge(row.get("badge", "none")),
        )
        if row.get("banned"):
            user.banned_in.add(instance.id)
        store.users[user.id] = user
    for row in doc.get("authors", []):
        store.users[row["user_id"]] = user_from_dict(
            {
                "id": row["user_id"],
                "display_name": row["display_name"],
                "account_role": row.get("account_role", "agent_identity"),
                "badge": row.get("badge", "none"),
                "avatar_id": row.get("avatar_id"),
            }
        )

    for raw in doc.get("agents", []):
        agent = agent_from_dict(raw)
        store.agent_configs[agent.id] = agent
        if agent.model_config_id not in store.model_configs:
            store.model_configs[agent.model_config_id] = ModelConfig(
                id=agent.model_config_id,
                endpoint_url="stub:",
                model_name=raw.get("model_name", ""),
            )
    for raw in doc["moderation"]["rules"]:
        rule = rule_from_dict(raw)
        store.rules[rule.id] = rule
    for row in doc["moderation"]["violations"]:
        store.violations.counts[(instance.id, row["user_id"], row["rule_id"])] = row["count"]
    for raw in doc.get("scripted_items", []):
        item = scripted_from_dict(raw)
        store.scripted_items[item.id] = item

    log = [
        event_from_dict({k: v for k, v in raw.items() if k != "at_iso"})
        for raw in doc["events"]
    ]
    store.events[instance.id] = log
    instance.next_seq = len(log)
    store._rebuild_content()
    return instance.id


def _csv_text(columns: list[str], rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({c: _cell(row.get(c)) for c in columns})
    return buf.getvalue()


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    return value


def write_bundle(store: Store, instance_id: str, out_dir: str, fmt: str = "json") -> Path:
    """Write the on-disk export layout:
    instance_<id>/meta.json | events.json(.csv) | content.json(.csv) |
    participants.csv | moderation.csv | agents.json
    """
    doc = export_instance_doc(store, instance_id)
    root = Path(out_dir) / f"instance_{instance_id}"
    root.mkdir(parents=True, exist_ok=True)
    (root / "meta.json").write_text(dump_json(doc["meta"]), encoding="utf-8")
    (root / "agents.json").write_text(dump_json(doc["agents"]), encoding="utf-8")

    if fmt == "json":
        (root / "events.json").write_text(dump_json(doc["events"]), encoding="utf-8")
        (root / "content.json").write_text(dump_json(doc["content"]), encoding="utf-8")
    else:
        event_rows = [
            {
                "seq": e["seq"],
                "at": e["at"],
                "at_iso": e["at_iso"],
                "kind": e["kind"],
                "payload_json": json.dumps(e["payload"], sort_keys=True, ensure_ascii=False),
            }
            for e in doc["events"]
        ]
        (root / "events.csv").write_text(_csv_text(EVENT_COLUMNS, event_rows), encoding="utf-8")
        content_rows = [
            {
                "id": c["id"],
                "content_kind": c["content_kind"],
                "parent_id": c["parent_id"],
                "author_user_id": c["author_user_id"],
                "source_role": c["source_role"],
                "body": c["body"],
                "flair": c["flair"],
                "media_json": json.dumps(c["media"], ensure_ascii=False),
                "created_at": c["created_at"],
                "created_at_iso": c["created_at_iso"],
                "deleted_at": c["deleted_at"],
                "deleted_at_iso": c["deleted_at_iso"],
                "flags_json": json.dumps(c["flags"], sort_keys=True, ensure_ascii=False),
                "likes": c["engagement"]["likes"],
                "upvotes": c["engagement"]["upvotes"],
                "downvotes": c["engagement"]["downvotes"],
                "shares": c["engagement"]["shares"],
                "reactions_json": json.dumps(c["engagement"]["reactions"], sort_keys=True, ensure_ascii=False),
            }
            for c in doc["content"]
        ]
        (root / "content.csv").write_text(_csv_text(CONTENT_COLUMNS, content_rows), encoding="utf-8")

    (root / "participants.csv").write_text(
        _csv_text(PARTICIPANT_COLUMNS, doc["participants"]), encoding="utf-8"
    )
    (root / "moderation.csv").write_text(
        _csv_text(MODERATION_COLUMNS, doc["moderation"]["records"]), encoding="utf-8"
    )
    if fmt == "json":
        # The complete single-document export rides along for round-tripping.
        (root / "export.json").write_text(dump_json(doc), encoding="utf-8")
    return root
