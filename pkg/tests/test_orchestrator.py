"""Waiting rooms, group formation, template assignment, capacity."""

import random

import pytest

from conftest import make_experiment, make_user
from plaza.errors import CapacityError, NotFoundError
from plaza.models import AccountRole, InstanceState
from plaza.orchestrator import Orchestrator
from plaza.store import Store


def _orch(store, seed=0):
    return Orchestrator(store, master_seed=seed)


class TestJoin:
    def test_waiting_until_min(self, store):
        exp = make_experiment(store, waiting_min_participants=3)
        orch = _orch(store)
        u1, u2 = make_user(store, "A"), make_user(store, "B")
        r1 = orch.join_waiting_room(u1, exp.id, 0)
        r2 = orch.join_waiting_room(u2, exp.id, 1_000)
        assert (r1.status, r1.position) == ("waiting", 1)
        assert (r2.status, r2.position) == ("waiting", 2)

    def test_min_reached_starts_immediately(self, store):
        exp = make_experiment(store, waiting_min_participants=2)
        orch = _orch(store)
        orch.join_waiting_room(make_user(store, "A"), exp.id, 0)
        result = orch.join_waiting_room(make_user(store, "B"), exp.id, 5_000)
        assert result.status == "started"
        inst = store.instances[result.instance_id]
        assert inst.state == InstanceState.RUNNING
        assert inst.started_at == 5_000

    def test_non_participant_rejected(self, store):
        exp = make_experiment(store)
        orch = _orch(store)
        researcher = make_user(store, "Dr", role=AccountRole.RESEARCHER)
        assert orch.join_waiting_room(researcher, exp.id, 0).status == "rejected"

    def test_duplicate_join_rejected(self, store):
        exp = make_experiment(store, waiting_min_participants=3)
        orch = _orch(store)
        user = make_user(store, "A")
        orch.join_waiting_room(user, exp.id, 0)
        result = orch.join_waiting_room(user, exp.id, 1)
        assert result.status == "rejected" and result.reason == "already waiting"

    def test_unknown_experiment(self, store):
        with pytest.raises(NotFoundError):
            _orch(store).join_waiting_room(make_user(store, "A"), "ghost", 0)


class TestDeadline:
    def test_below_min_start_on_deadline(self, store):
        exp = make_experiment(store, waiting_min_participants=5, waiting_max_wait_s=60)
        orch = _orch(store)
        user = make_user(store, "A")
        orch.join_waiting_room(user, exp.id, 10_000)
        assert orch.on_waiting_deadline(exp.id, 69_999) == []
        formed = orch.on_waiting_deadline(exp.id, 70_000)
        assert len(formed) == 1
        inst = store.instances[formed[0]]
        assert inst.participant_ids == [user.id]
        assert inst.started_at == 70_000

    def test_deadline_anchored_to_first_entrant(self, store):
        exp = make_experiment(store, waiting_min_participants=5, waiting_max_wait_s=60)
        orch = _orch(store)
        orch.join_waiting_room(make_user(store, "A"), exp.id, 0)
        orch.join_waiting_room(make_user(store, "B"), exp.id, 59_000)
        # Later join does not reset the clock.
        assert len(orch.on_waiting_deadline(exp.id, 60_000)) == 1

    def test_cancel_policy_below_min(self, store):
        exp = make_experiment(
            store, waiting_min_participants=5, waiting_max_wait_s=60, start_below_min=False
        )
        orch = _orch(store)
        orch.join_waiting_room(make_user(store, "A"), exp.id, 0)
        assert orch.on_waiting_deadline(exp.id, 60_000) == []
        assert store.instances == {}
        assert orch.rooms[exp.id].entrants == []

    def test_idempotent_deadline(self, store):
        exp = make_experiment(store, waiting_min_participants=5, waiting_max_wait_s=60)
        orch = _orch(store)
        orch.join_waiting_room(make_user(store, "A"), exp.id, 0)
        orch.on_waiting_deadline(exp.id, 60_000)
        assert orch.on_waiting_deadline(exp.id, 60_001) == []
        assert len(store.instances) == 1

    def test_exact_deadline_race_single_instance(self, store):
        # A join landing exactly at the deadline ms plus the deadline firing
        # must still produce exactly one assignment per user.
        exp = make_experiment(store, waiting_min_participants=2, waiting_max_wait_s=60)
        orch = _orch(store)
        orch.join_waiting_room(make_user(store, "A"), exp.id, 0)
        result = orch.join_waiting_room(make_user(store, "B"), exp.id, 60_000)
        assert result.status == "started"
        orch.on_waiting_deadline(exp.id, 60_000)
        assert len(store.instances) == 1


class TestFormation:
    def test_room_splits_same_template(self, store):
        exp = make_experiment(
            store,
            waiting_min_participants=2,
            max_participants_per_instance=2,
            n_templates=4,
        )
        orch = _orch(store)
        users = [make_user(store, f"U{k}") for k in range(6)]
        results = [orch.join_waiting_room(u, exp.id, k) for k, u in enumerate(users)]
        started = [r for r in results if r.status == "started"]
        assert len(store.instances) == 3
        templates = {inst.template_id for inst in store.instances.values()}
        assert len(templates) == 1  # same randomly drawn template
        # Arrival order fill.
        first = sorted(store.instances.values(), key=lambda i: i.id)[0]
        assert first.participant_ids == [users[0].id, users[1].id]
        assert started  # at least the chunk-closing joins started

    def test_individual_assignment(self, store):
        exp = make_experiment(store, individual_assignment=True, waiting_min_participants=2)
        orch = _orch(store)
        r1 = orch.join_waiting_room(make_user(store, "A"), exp.id, 0)
        r2 = orch.join_waiting_room(make_user(store, "B"), exp.id, 1)
        assert r1.status == r2.status == "started"
        assert r1.instance_id != r2.instance_id
        assert all(len(i.participant_ids) == 1 for i in store.instances.values())

    def test_capacity_bound_and_retry(self, store):
        exp = make_experiment(
            store,
            waiting_min_participants=1,
            max_participants_per_instance=1,
            max_concurrent_instances=2,
            session_duration_s=10,
        )
        orch = _orch(store)
        users = [make_user(store, f"U{k}") for k in range(3)]
        orch.join_waiting_room(users[0], exp.id, 0)
        orch.join_waiting_room(users[1], exp.id, 0)
        result = orch.join_waiting_room(users[2], exp.id, 0)
        assert result.status == "waiting"  # at capacity
        assert orch.running_count(exp.id) == 2
        orch.tick(10_000)  # first two sessions end, freeing capacity
        assert any(
            users[2].id in i.participant_ids and i.state == InstanceState.RUNNING
            for i in store.instances.values()
        )

    def test_assign_template_raises_at_capacity(self, store):
        exp = make_experiment(store, max_concurrent_instances=1, waiting_min_participants=1)
        orch = _orch(store)
        orch.join_waiting_room(make_user(store, "A"), exp.id, 0)
        with pytest.raises(CapacityError):
            orch.assign_template(exp)

    def test_exactly_once_formation(self, store):
        rng = random.Random(5)
        exp = make_experiment(
            store,
            waiting_min_participants=3,
            max_participants_per_instance=4,
            max_concurrent_instances=100,
            waiting_max_wait_s=120,
        )
        orch = _orch(store)
        users = [make_user(store, f"U{k}") for k in range(40)]
        now = 0
        for user in users:
            now += rng.randint(0, 30_000)
            orch.tick(now)
            orch.join_waiting_room(user, exp.id, now)
        orch.tick(now + 200_000)
        seen = {}
        for inst in store.instances.values():
            assert len(inst.participant_ids) <= exp.max_participants_per_instance
            for uid in inst.participant_ids:
                assert uid not in seen, "user assigned twice"
                seen[uid] = inst.id
        assert len(seen) == len(users)


class TestWaitingRoomLaw:
    def _oracle_start(self, joins, min_n, max_wait_ms):
        """Discrete-event oracle: start = min(t_min_reached, first + max_wait)
        if any entrant arrived by then."""
        t_min = joins[min_n - 1] if len(joins) >= min_n else None
        deadline = joins[0] + max_wait_ms
        if t_min is not None and t_min <= deadline:
            return t_min
        return deadline

    def test_start_time_law_sampled(self, store):
        rng = random.Random(99)
        for case in range(50):
            local = Store()
            min_n = rng.randint(1, 5)
            max_wait_s = rng.randint(10, 300)
            exp = make_experiment(
                local,
                waiting_min_participants=min_n,
                max_participants_per_instance=max(min_n, 5),
                waiting_max_wait_s=max_wait_s,
                max_concurrent_instances=100,
            )
            orch = _orch(local)
            n = rng.randint(1, 8)
            joins = sorted(rng.randint(0, max_wait_s * 1500) for _ in range(n))
            users = [make_user(local, f"U{k}") for k in range(n)]
            expected = self._oracle_start(joins, min_n, max_wait_s * 1000)
            for t, user in zip(joins, users):
                if t > expected:
                    break
                orch.tick(t)
                orch.join_waiting_room(user, exp.id, t)
            orch.tick(expected)
            starts = [i.started_at for i in local.instances.values()]
            assert starts, f"case {case}: no instance formed"
            assert min(starts) == expected, f"case {case}"
