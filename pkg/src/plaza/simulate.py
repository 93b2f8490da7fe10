"""Headless session runner.

Runs a complete experiment under the virtual clock with scripted content,
agents, moderation, and synthetic participants, then writes export bundles
and a summary. With the stub provider the whole run is a pure function of
(bundle, seed, participant spec).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .auth import hash_password
from .bundle import LoadedBundle, SyntheticAction, SyntheticParticipant, instantiate_bundle
from .clock import VirtualClock
from .engine import SessionEngine
from .errors import PlazaError, ProviderError
from .export import dump_json, write_bundle
from .models import AccountRole, ContentKind, InstanceState, Layout, CHAT_LAYOUTS, UserAccount
from .orchestrator import Orchestrator
from .providers import ModelConfig, Provider, ProviderMessage, ProviderRequest, StubProvider, provider_for
from .store import Store

logger = logging.getLogger(__name__)


def stub_factory(_config: ModelConfig) -> Provider:
    return StubProvider()


def probe_providers(store: Store) -> None:
    """Live-mode preflight: every non-stub endpoint must answer before the
    session starts."""
    for config in store.model_configs.values():
        if config.endpoint_url.startswith("stub:"):
            continue
        provider = provider_for(config)
        request = ProviderRequest(
            model_name=config.model_name,
            system_text="Connectivity check. Reply with OK.",
            messages=[ProviderMessage(role_tag="user", text="OK?")],
            params={"max_tokens": 4},
        )
        provider.generate(request)  # raises ProviderError on failure


@dataclass
class SimulationResult:
    summary: dict
    instance_ids: list[str] = field(default_factory=list)
    export_dirs: list[str] = field(default_factory=list)


def run_simulation(
    bundle_data: dict,
    seed: int,
    out_dir: Optional[str] = None,
    provider: str = "stub",
    duration_override_s: Optional[int] = None,
    export_format: str = "json",
    store: Optional[Store] = None,
    participants_override: Optional[list[SyntheticParticipant]] = None,
) -> SimulationResult:
    store = store or Store()
    loaded: LoadedBundle = instantiate_bundle(store, bundle_data)
    experiment = store.experiments[loaded.experiment_id]
    if duration_override_s:
        experiment.session_duration_s = duration_override_s
    if provider == "stub":
        factory = stub_factory
    else:
        probe_providers(store)
        factory = provider_for
    orch = Orchestrator(store, master_seed=seed, provider_factory=factory)
    clock = VirtualClock(0)

    participants = participants_override if participants_override is not None else loaded.participants
    sim_users: list[tuple[int, UserAccount, SyntheticParticipant]] = []
    for idx, spec in enumerate(participants):
        user = UserAccount(
            id=store.new_id("u"),
            email=f"sim{idx + 1}@example.invalid",
            credential=hash_password(f"sim-password-{idx + 1}", salt="0" * 16),
            display_name=spec.name,
            account_role=AccountRole.PARTICIPANT,
            external_id=spec.external_id or f"SIM{idx + 1:03d}",
            redirect_url=spec.redirect_url,
        )
        store.users[user.id] = user
        sim_users.append((int(round(spec.join_offset_s * 1000)), user, spec))
    sim_users.sort(key=lambda t: (t[0], t[1].id))

    pending_joins = list(sim_users)
    # (due_ms, order, user, action); populated once the user's instance starts
    pending_actions: list[tuple[int, int, UserAccount, SyntheticAction]] = []
    scheduled_for: set[str] = set()
    action_order = 0
    action_errors = 0

    def schedule_actions_for_started(now: int) -> None:
        nonlocal action_order
        for instance in store.instances.values():
            if instance.state != InstanceState.RUNNING or instance.started_at is None:
                continue
            for _join_ms, user, spec in sim_users:
                if user.id in scheduled_for or user.id not in instance.participant_ids:
                    continue
                scheduled_for.add(user.id)
                for action in spec.actions:
                    due = instance.started_at + int(round(action.offset_s * 1000))
                    action_order += 1
                    pending_actions.append((due, action_order, user, action))
        pending_actions.sort(key=lambda t: (t[0], t[1]))

    def engine_of(user: UserAccount) -> Optional[SessionEngine]:
        for instance in store.instances.values():
            if user.id in instance.participant_ids:
                return orch.engines.get(instance.id)
        return None

    def resolve_item(engine: SessionEngine, ref: Optional[str]) -> Optional[str]:
        if ref is None or ref == "latest":
            items = [
                i
                for i in store.content_of(engine.instance.id).values()
                if i.deleted_at is None
            ]
            return items[-1].id if items else None
        script_id = loaded.script_refs.get(ref)
        if script_id:
            return engine.concrete_item_for_script(script_id)
        return ref  # already a concrete item id

    def run_action(user: UserAccount, action: SyntheticAction, now: int) -> None:
        nonlocal action_errors
        engine = engine_of(user)
        if engine is None:
            action_errors += 1
            return
        try:
            if action.type in ("post", "comment", "message"):
                kind = ContentKind(action.type)
                parent = (
                    resolve_item(engine, action.parent)
                    if (action.parent or kind == ContentKind.COMMENT)
                    else None
                )
                engine.submit_content(user, kind, action.body, now, parent_id=parent)
            elif action.type == "reaction":
                target = resolve_item(engine, action.target)
                if target is None:
                    action_errors += 1
                    return
                engine.react(user, target, action.reaction or "like", now)
            else:
                action_errors += 1
        except PlazaError as exc:
            logger.debug("synthetic action failed: %s", exc)
            action_errors += 1

    if not participants:
        orch.start_empty_instance(experiment.id, clock.now_ms())

    def instance_running(user: UserAccount) -> bool:
        for instance in store.instances.values():
            if user.id in instance.participant_ids:
                return instance.state == InstanceState.RUNNING
        return False

    max_iterations = 1_000_000
    for _ in range(max_iterations):
        # Actions whose session already ended would only stretch the virtual
        # clock; they can never be delivered.
        pending_actions = [
            entry for entry in pending_actions if instance_running(entry[2])
        ]
        candidates = []
        if pending_joins:
            candidates.append(pending_joins[0][0])
        if pending_actions:
            candidates.append(pending_actions[0][0])
        due = orch.next_due()
        if due is not None:
            candidates.append(due)
        if not candidates:
            break
        t = min(candidates)
        if t > clock.now_ms():
            clock.advance_to(t)
        now = clock.now_ms()
        orch.tick(now)
        while pending_joins and pending_joins[0][0] <= now:
            _, user, _spec = pending_joins.pop(0)
            orch.join_waiting_room(user, experiment.id, now)
        schedule_actions_for_started(now)
        while pending_actions and pending_actions[0][0] <= now:
            _, _, user, action = pending_actions.pop(0)
            run_action(user, action, now)
        orch.tick(now)
        schedule_actions_for_started(now)
    else:
        raise RuntimeError("simulation did not converge")

    instance_ids = sorted(store.instances.keys())
    events_by_kind: dict[str, int] = {}
    flags = bans = 0
    for iid in instance_ids:
        for event in store.events_of(iid):
            events_by_kind[event.kind.value] = events_by_kind.get(event.kind.value, 0) + 1
    flags = events_by_kind.get("moderation_flagged", 0)
    bans = events_by_kind.get("user_banned", 0)
    summary = {
        "seed": seed,
        "instances": instance_ids,
        "events_by_kind": dict(sorted(events_by_kind.items())),
        "flags": flags,
        "bans": bans,
        "deletions": events_by_kind.get("moderation_deleted", 0),
        "action_errors": action_errors,
        "virtual_end_ms": clock.now_ms(),
    }

    export_dirs = []
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for iid in instance_ids:
            export_dirs.append(str(write_bundle(store, iid, str(out), fmt=export_format)))
        (out / "summary.json").write_text(dump_json(summary), encoding="utf-8")
    return SimulationResult(summary=summary, instance_ids=instance_ids, export_dirs=export_dirs)
