"""Self-contained experiment bundles.

A bundle is one human-editable YAML (or JSON) document defining an
experiment, its templates, agents, model configs (credentials via env-var
references), moderation rules, scripted items, and optional synthetic
participants for headless runs. Loading validates everything and populates
a store.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from .agents import AgentConfig, AgentMode, Trigger
from .errors import ValidationFailure
from .models import (
    AccountRole,
    Badge,
    ContentKind,
    Experiment,
    ExperimentKind,
    Layout,
    SourceRole,
    UserAccount,
    Visual,
    validate_experiment,
)
from .moderation import (
    ActionKind,
    AiDetection,
    KeywordDetection,
    ModerationRule,
    RegexDetection,
    RuleAction,
)
from .providers import ModelConfig
from .scheduling import ScriptedItem, validate_script
from .store import Store, delay_from_dict, engagement_from_dict


@dataclass
class SyntheticAction:
    offset_s: float
    type: str  # post | comment | message | reaction
    body: str = ""
    parent: Optional[str] = None  # scripted ref or "latest"
    reaction: Optional[str] = None
    target: Optional[str] = None  # scripted ref or "latest"


@dataclass
class SyntheticParticipant:
    name: str
    join_offset_s: float = 0.0
    external_id: Optional[str] = None
    redirect_url: Optional[str] = None
    actions: list[SyntheticAction] = field(default_factory=list)


@dataclass
class LoadedBundle:
    experiment_id: str
    participants: list[SyntheticParticipant]
    script_refs: dict[str, str] = field(default_factory=dict)  # bundle ref -> scripted item id


def read_bundle(path: str) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    data = yaml.safe_load(text)
    if not isinstance(data, dict):
        raise ValidationFailure(["bundle: document must be a mapping"])
    return data


def instantiate_bundle(store: Store, data: dict, env: Optional[dict] = None) -> LoadedBundle:
    """Create all bundle objects in the store; raises ValidationFailure with
    every violation found."""
    env = env if env is not None else dict(os.environ)
    violations: list[str] = []

    exp_raw = data.get("experiment")
    if not isinstance(exp_raw, dict):
        raise ValidationFailure(["experiment: section missing"])

    model_ids: dict[str, str] = {}
    for raw in data.get("model_configs", []):
        ref = raw.get("ref", raw.get("id", "model"))
        credential = None
        credential_env = raw.get("credential_env")
        if credential_env:
            credential = env.get(credential_env)
            if credential is None:
                violations.append(f"model_configs[{ref}].credential_env: {credential_env} not set")
        config = ModelConfig(
            id=store.new_id("m"),
            endpoint_url=raw.get("endpoint_url", "stub:"),
            model_name=raw.get("model_name", "stub-model"),
            credential=credential,
            params=dict(raw.get("params", {})),
        )
        store.model_configs[config.id] = config
        model_ids[ref] = config.id

    agent_ids: dict[str, str] = {}
    for raw in data.get("agents", []):
        ref = raw.get("ref") or raw.get("display_name", "agent")
        model_ref = raw.get("model")
        if model_ref not in model_ids:
            violations.append(f"agents[{ref}].model: unresolved model config {model_ref!r}")
            continue
        identity = UserAccount(
            id=store.new_id("u"),
            email="",
            credential="",
            display_name=raw.get("display_name", ref),
            account_role=AccountRole.AGENT_IDENTITY,
            badge=Badge(raw.get("badge", "none")),
            avatar_id=raw.get("avatar"),
        )
        store.users[identity.id] = identity
        try:
            triggers = {Trigger(t) for t in raw.get("triggers", [])}
        except ValueError as exc:
            violations.append(f"agents[{ref}].triggers: {exc}")
            triggers = set()
        agent = AgentConfig(
            id=store.new_id("a"),
            identity_user_id=identity.id,
            model_config_id=model_ids[model_ref],
            mode=AgentMode(raw.get("mode", "human")),
            custom_prompt=raw.get("custom_prompt", ""),
            delay=delay_from_dict(raw.get("delay", {})),
            triggers=triggers,
            context_window_items=raw.get("context_window_items", 10),
        )
        violations.extend(agent.validate())
        store.agent_configs[agent.id] = agent
        agent_ids[ref] = agent.id

    rule_ids: dict[str, str] = {}
    for raw in data.get("rules", []):
        ref = raw.get("ref", "rule")
        det_raw = raw.get("detection", {})
        det_type = det_raw.get("type")
        if det_type == "keyword":
            detection = KeywordDetection(words=list(det_raw.get("words", [])))
        elif det_type == "regex":
            detection = RegexDetection(pattern=det_raw.get("pattern", ""))
        elif det_type == "ai":
            model_ref = det_raw.get("model")
            if model_ref not in model_ids:
                violations.append(f"rules[{ref}].detection.model: unresolved model config {model_ref!r}")
                continue
            detection = AiDetection(prompt=det_raw.get("prompt", ""), model_config_id=model_ids[model_ref])
        else:
            violations.append(f"rules[{ref}].detection.type: unknown type {det_type!r}")
            continue
        act_raw = raw.get("action", {})
        try:
            action = RuleAction(
                kind=ActionKind(act_raw.get("type", "flag")),
                label=act_raw.get("label", ""),
                message=act_raw.get("message", ""),
                ack_required=act_raw.get("ack_required", False),
            )
        except ValueError as exc:
            violations.append(f"rules[{ref}].action: {exc}")
            continue
        rule = ModerationRule(
            id=store.new_id("r"),
            detection=detection,
            action=action,
            target_sources={SourceRole(s) for s in raw.get("target_sources", [])},
            ban_threshold=raw.get("ban_threshold"),
            delay=delay_from_dict(raw.get("delay", {})),
            enabled=raw.get("enabled", True),
            fail_closed=raw.get("fail_closed", False),
        )
        violations.extend(rule.validate())
        store.rules[rule.id] = rule
        rule_ids[ref] = rule.id

    persona_accounts: dict[str, str] = {}

    def persona(name: str) -> str:
        if name not in persona_accounts:
            account = UserAccount(
                id=store.new_id("u"),
                email="",
                credential="",
                display_name=name,
                account_role=AccountRole.AGENT_IDENTITY,
            )
            store.users[account.id] = account
            persona_accounts[name] = account.id
        return persona_accounts[name]

    experiment = Experiment(
        id=store.new_id("e"),
        name=exp_raw.get("name", "experiment"),
        kind=ExperimentKind(exp_raw.get("kind", "feed")),
        session_duration_s=exp_raw.get("session_duration_s", 600),
        waiting_min_participants=exp_raw.get("waiting_min_participants", 1),
        waiting_max_wait_s=exp_raw.get("waiting_max_wait_s", 0),
        max_participants_per_instance=exp_raw.get("max_participants_per_instance", 10),
        max_concurrent_instances=exp_raw.get("max_concurrent_instances", 10),
        details_visible=exp_raw.get("details_visible", False),
        start_below_min=exp_raw.get("start_below_min", True),
        individual_assignment=exp_raw.get("individual_assignment", False),
    )

    all_script_refs: dict[str, str] = {}
    for t_raw in data.get("templates", []):
        try:
            layout = Layout(t_raw.get("layout", ""))
        except ValueError:
            violations.append(f"templates: unknown layout {t_raw.get('layout')!r}")
            continue
        template_id = store.new_id("t")
        script_refs: dict[str, str] = {}
        scripts: list[ScriptedItem] = []
        for s_raw in t_raw.get("scripted", []):
            ref = s_raw.get("ref", f"s{len(scripts)}")
            parent_ref = s_raw.get("parent")
            item = ScriptedItem(
                id=store.new_id("s"),
                template_id=template_id,
                offset_s=s_raw.get("offset_s", 0),
                author_user_id=persona(s_raw.get("author", "Narrator")),
                content_kind=ContentKind(s_raw.get("kind", "post")),
                body=s_raw.get("body", ""),
                parent_script_id=script_refs.get(parent_ref) if parent_ref else None,
                media=list(s_raw.get("media", [])),
                initial_engagement=engagement_from_dict(s_raw.get("engagement", {})),
                flair=s_raw.get("flair"),
            )
            if parent_ref and parent_ref not in script_refs:
                violations.append(f"scripted[{ref}].parent: unresolved reference {parent_ref!r}")
            scripts.append(item)
            script_refs[ref] = item.id
            store.scripted_items[item.id] = item
        violations.extend(validate_script(scripts))

        missing_agents = [a for a in t_raw.get("agents", []) if a not in agent_ids]
        missing_rules = [r for r in t_raw.get("rules", []) if r not in rule_ids]
        violations.extend(f"templates.agents: unresolved agent {a!r}" for a in missing_agents)
        violations.extend(f"templates.rules: unresolved rule {r!r}" for r in missing_rules)
        visual_raw = t_raw.get("visual", {}) or {}
        from .models import Template

        template = Template(
            id=template_id,
            experiment_id=experiment.id,
            layout=layout,
            agent_config_ids=[agent_ids[a] for a in t_raw.get("agents", []) if a in agent_ids],
            moderation_rule_ids=[rule_ids[r] for r in t_raw.get("rules", []) if r in rule_ids],
            scripted_item_ids=[s.id for s in scripts],
            visual=Visual(
                emoji_set=visual_raw.get("emoji_set"),
                chat_background=visual_raw.get("chat_background"),
            ),
        )
        store.templates[template.id] = template
        experiment.template_ids.append(template.id)
        all_script_refs.update(script_refs)

    violations.extend(validate_experiment(experiment, store.templates))
    if violations:
        raise ValidationFailure(violations)
    store.experiments[experiment.id] = experiment

    participants = []
    for idx, p_raw in enumerate(data.get("synthetic_participants", [])):
        actions = [
            SyntheticAction(
                offset_s=a.get("offset_s", 0),
                type=a.get("type", "post"),
                body=a.get("body", ""),
                parent=a.get("parent"),
                reaction=a.get("reaction"),
                target=a.get("target"),
            )
            for a in p_raw.get("actions", [])
        ]
        participants.append(
            SyntheticParticipant(
                name=p_raw.get("name", f"Participant {idx + 1}"),
                join_offset_s=p_raw.get("join_offset_s", 0),
                external_id=p_raw.get("external_id"),
                redirect_url=p_raw.get("redirect_url"),
                actions=actions,
            )
        )
    return LoadedBundle(
        experiment_id=experiment.id,
        participants=participants,
        script_refs=all_script_refs,
    )
