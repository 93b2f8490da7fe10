"""Experiment lifecycle: waiting rooms, group formation, random template
assignment, session start/stop, and participant redirects.

One logical actor per experiment (the waiting room) and one per instance
(the engine). The orchestrator lock serializes room mutations; engines have
their own locks.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field
from random import Random
from typing import Callable, Optional

from .engine import DEFAULT_CHAIN_DEPTH_LIMIT, SessionEngine
from .errors import CapacityError, NotFoundError
from .models import (
    AccountRole,
    Experiment,
    Instance,
    InstanceState,
    UserAccount,
)
from .providers import ModelConfig, Provider, provider_for
from .store import Store

logger = logging.getLogger(__name__)


@dataclass
class WaitingRoomState:
    experiment_id: str
    entrants: list[tuple[str, int]] = field(default_factory=list)  # (user_id, entered_at)
    deadline: Optional[int] = None

    def has(self, user_id: str) -> bool:
        return any(uid == user_id for uid, _ in self.entrants)


@dataclass
class JoinResult:
    status: str  # waiting | started | rejected
    position: Optional[int] = None
    instance_id: Optional[str] = None
    reason: Optional[str] = None


class Orchestrator:
    def __init__(
        self,
        store: Store,
        master_seed: int = 0,
        provider_factory: Callable[[ModelConfig], Provider] = provider_for,
        chain_depth_limit: int = DEFAULT_CHAIN_DEPTH_LIMIT,
    ):
        self.store = store
        self.provider_factory = provider_factory
        self.chain_depth_limit = chain_depth_limit
        self.rooms: dict[str, WaitingRoomState] = {}
        self.engines: dict[str, SessionEngine] = {}
        self.lock = threading.Lock()
        self._rng = Random(master_seed)

    # --- waiting room ---------------------------------------------------

    def join_waiting_room(self, user: UserAccount, experiment_id: str, now: int) -> JoinResult:
        with self.lock:
            experiment = self.store.experiments.get(experiment_id)
            if experiment is None:
                raise NotFoundError(f"experiment {experiment_id}")
            if user.account_role != AccountRole.PARTICIPANT:
                return JoinResult(status="rejected", reason="role")
            room = self.rooms.setdefault(experiment_id, WaitingRoomState(experiment_id))
            if room.has(user.id):
                return JoinResult(status="rejected", reason="already waiting")
            if not room.entrants:
                room.deadline = now + experiment.waiting_max_wait_s * 1000
            room.entrants.append((user.id, now))

            if experiment.individual_assignment:
                formed = self._try_form(experiment, room, now, below_min_ok=True)
            elif len(room.entrants) >= experiment.waiting_min_participants:
                formed = self._try_form(experiment, room, now, below_min_ok=False)
            else:
                formed = {}
            if user.id in formed:
                return JoinResult(status="started", instance_id=formed[user.id])
            position = next(
                i + 1 for i, (uid, _) in enumerate(room.entrants) if uid == user.id
            )
            return JoinResult(status="waiting", position=position)

    def on_waiting_deadline(self, experiment_id: str, now: int) -> list[str]:
        """Fire the room deadline if due; returns ids of instances formed.
        Idempotent: an empty or already-emptied room is a no-op."""
        with self.lock:
            experiment = self.store.experiments[experiment_id]
            room = self.rooms.get(experiment_id)
            if room is None or room.deadline is None or now < room.deadline:
                return []
            if not room.entrants:
                room.deadline = None
                return []
            if not experiment.start_below_min and len(room.entrants) < experiment.waiting_min_participants:
                # Cancel-and-redirect policy: clear the room without a session.
                logger.info(
                    "room %s deadline with %d entrants below min; cancelled",
                    experiment_id,
                    len(room.entrants),
                )
                room.entrants.clear()
                room.deadline = None
                return []
            formed = self._try_form(experiment, room, now, below_min_ok=True)
            return sorted(set(formed.values()))

    # --- formation ------------------------------------------------------

    def running_count(self, experiment_id: str) -> int:
        return sum(
            1
            for inst in self.store.instances.values()
            if inst.experiment_id == experiment_id and inst.state == InstanceState.RUNNING
        )

    def assign_template(self, experiment: Experiment) -> str:
        """Uniform random template choice; capacity must be open."""
        if self.running_count(experiment.id) >= experiment.max_concurrent_instances:
            raise CapacityError(f"experiment {experiment.id} at max concurrent instances")
        return self._rng.choice(experiment.template_ids)

    def _try_form(
        self,
        experiment: Experiment,
        room: "WaitingRoomState",
        now: int,
        below_min_ok: bool,
    ) -> dict[str, str]:
        """Form as many instances as capacity allows from the current room,
        in arrival order. Returns user_id -> instance_id for assigned users."""
        assigned: dict[str, str] = {}
        try:
            template_id = self.assign_template(experiment)
        except CapacityError:
            return assigned  # room keeps waiting
        group_size = 1 if experiment.individual_assignment else experiment.max_participants_per_instance
        capacity = experiment.max_concurrent_instances - self.running_count(experiment.id)
        while room.entrants and capacity > 0:
            chunk = room.entrants[:group_size]
            if not below_min_ok and not experiment.individual_assignment:
                if len(chunk) < min(
                    experiment.waiting_min_participants, group_size
                ) and len(room.entrants) < experiment.waiting_min_participants:
                    break  # leftover below min waits for more entrants
            room.entrants = room.entrants[len(chunk) :]
            instance_id = self._start_instance(experiment, template_id, [uid for uid, _ in chunk], now)
            for uid, _ in chunk:
                assigned[uid] = instance_id
            capacity -= 1
        if not room.entrants:
            room.deadline = None
        return assigned

    def _start_instance(
        self, experiment: Experiment, template_id: str, participant_ids: list[str], now: int
    ) -> str:
        template = self.store.templates[template_id]
        instance = Instance(
            id=self.store.new_id("i"),
            template_id=template_id,
            experiment_id=experiment.id,
            participant_ids=list(participant_ids),
            rng_seed=self._rng.getrandbits(64),
        )
        self.store.instances[instance.id] = instance
        providers = {}
        for agent_id in template.agent_config_ids:
            agent = self.store.agent_configs[agent_id]
            config = self.store.model_configs[agent.model_config_id]
            providers[config.id] = self.provider_factory(config)
        for rule_id in template.moderation_rule_ids:
            rule = self.store.rules[rule_id]
            detection = getattr(rule, "detection", None)
            model_id = getattr(detection, "model_config_id", None)
            if model_id and model_id not in providers:
                providers[model_id] = self.provider_factory(self.store.model_configs[model_id])
        engine = SessionEngine(
            self.store,
            experiment,
            template,
            instance,
            providers,
            chain_depth_limit=self.chain_depth_limit,
        )
        self.engines[instance.id] = engine
        engine.start(now)
        return instance.id

    def start_empty_instance(self, experiment_id: str, now: int) -> str:
        """Start an instance with no human participants (scripted/agent-only
        headless runs)."""
        with self.lock:
            experiment = self.store.experiments[experiment_id]
            template_id = self.assign_template(experiment)
            return self._start_instance(experiment, template_id, [], now)

    # --- driving --------------------------------------------------------

    def next_due(self) -> Optional[int]:
        dues = []
        with self.lock:
            for room in self.rooms.values():
                if room.deadline is not None and room.entrants:
                    dues.append(room.deadline)
        for engine in list(self.engines.values()):
            due = engine.next_due()
            if due is not None and engine.instance.state == InstanceState.RUNNING:
                dues.append(due)
        return min(dues) if dues else None

    def tick(self, now: int) -> None:
        for experiment_id in list(self.rooms.keys()):
            self.on_waiting_deadline(experiment_id, now)
        for engine in list(self.engines.values()):
            engine.tick(now)
        # Rooms already at minimum may have been blocked on capacity; retry
        # now that completed instances may have freed it.
        with self.lock:
            for room in self.rooms.values():
                experiment = self.store.experiments[room.experiment_id]
                if room.entrants and len(room.entrants) >= experiment.waiting_min_participants:
                    self._try_form(experiment, room, now, below_min_ok=False)

    def all_completed(self) -> bool:
        return all(
            inst.state in (InstanceState.COMPLETED, InstanceState.CANCELLED)
            for inst in self.store.instances.values()
        )

    def force_stop(self, instance_id: str, now: int) -> None:
        engine = self.engines.get(instance_id)
        if engine is None:
            raise NotFoundError(f"instance {instance_id}")
        engine.force_stop(now)
