"""Domain types: validation, threading, delay sampling, reaction gating."""

import random

import pytest
from hypothesis import given, strategies as st

from plaza.errors import StructuralIntegrityError
from plaza.models import (
    ContentItem,
    ContentKind,
    DelayModel,
    Experiment,
    ExperimentKind,
    Layout,
    SourceRole,
    Template,
    Visual,
    reaction_allowed,
    thread_of,
    validate_experiment,
)


def _item(item_id, parent_id=None):
    return ContentItem(
        id=item_id,
        instance_id="i1",
        content_kind=ContentKind.POST if parent_id is None else ContentKind.COMMENT,
        author_user_id="u1",
        source_role=SourceRole.USER,
        body="x",
        created_at=0,
        parent_id=parent_id,
    )


class TestThreadOf:
    def test_single_root(self):
        items = {"a": _item("a")}
        assert [i.id for i in thread_of(items["a"], items)] == ["a"]

    def test_chain_root_first(self):
        items = {"a": _item("a"), "b": _item("b", "a"), "c": _item("c", "b")}
        assert [i.id for i in thread_of(items["c"], items)] == ["a", "b", "c"]

    def test_dangling_parent_raises(self):
        items = {"b": _item("b", "missing")}
        with pytest.raises(StructuralIntegrityError):
            thread_of(items["b"], items)

    def test_cycle_raises(self):
        items = {"a": _item("a", "b"), "b": _item("b", "a")}
        with pytest.raises(StructuralIntegrityError):
            thread_of(items["a"], items)

    @given(st.integers(min_value=1, max_value=60), st.integers())
    def test_random_tree_matches_walk_oracle(self, n, seed):
        # Build a random forest; oracle: naive repeated parent lookups.
        rng = random.Random(seed)
        items = {}
        ids = []
        for k in range(n):
            parent = rng.choice(ids) if ids and rng.random() < 0.7 else None
            item_id = f"c{k:03d}"
            items[item_id] = _item(item_id, parent)
            ids.append(item_id)
        target = items[rng.choice(ids)]
        oracle = []
        cursor = target
        while cursor is not None:
            oracle.append(cursor.id)
            cursor = items.get(cursor.parent_id) if cursor.parent_id else None
        oracle.reverse()
        assert [i.id for i in thread_of(target, items)] == oracle


def _experiment(**kw):
    defaults = dict(
        id="e1",
        name="x",
        kind=ExperimentKind.FEED,
        session_duration_s=600,
        waiting_min_participants=2,
        waiting_max_wait_s=60,
        max_participants_per_instance=5,
        max_concurrent_instances=3,
        template_ids=["t1"],
    )
    defaults.update(kw)
    return Experiment(**defaults)


class TestValidateExperiment:
    def _templates(self, layout=Layout.REDDIT, **kw):
        return {"t1": Template(id="t1", experiment_id="e1", layout=layout, **kw)}

    def test_valid(self):
        assert validate_experiment(_experiment(), self._templates()) == []

    def test_min_exceeds_max(self):
        errs = validate_experiment(
            _experiment(waiting_min_participants=6), self._templates()
        )
        assert any("min exceeds max" in e for e in errs)

    def test_layout_kind_mismatch(self):
        errs = validate_experiment(
            _experiment(), self._templates(layout=Layout.WHATSAPP)
        )
        assert any("layout/kind mismatch" in e for e in errs)

    def test_chat_background_on_feed(self):
        errs = validate_experiment(
            _experiment(),
            self._templates(visual=Visual(chat_background="beach.png")),
        )
        assert any("chat_background" in e for e in errs)

    def test_unresolved_template(self):
        errs = validate_experiment(_experiment(template_ids=["nope"]), {})
        assert any("unresolved template" in e for e in errs)

    def test_nonpositive_numbers(self):
        errs = validate_experiment(
            _experiment(session_duration_s=0, max_concurrent_instances=0),
            self._templates(),
        )
        assert any("session_duration_s" in e for e in errs)
        assert any("max_concurrent_instances" in e for e in errs)


class TestDelayModel:
    def test_fixed(self):
        model = DelayModel(base_delay_s=5)
        assert model.sample_ms(random.Random(1)) == 5000

    def test_validate_bounds(self):
        assert DelayModel(base_delay_s=-1).validate()
        assert DelayModel(randomize=True, jitter_min_s=8, jitter_max_s=2).validate()
        assert DelayModel(randomize=True, jitter_min_s=2, jitter_max_s=8).validate() == []

    @given(st.integers())
    def test_jitter_within_bounds(self, seed):
        model = DelayModel(randomize=True, jitter_min_s=2, jitter_max_s=8)
        rng = random.Random(seed)
        for _ in range(100):
            assert 2000 <= model.sample_ms(rng) <= 8000

    def test_seeded_replay_identical(self):
        model = DelayModel(randomize=True, jitter_min_s=0.5, jitter_max_s=30)
        a = [model.sample_ms(random.Random(42)) for _ in range(1)]
        b = [model.sample_ms(random.Random(42)) for _ in range(1)]
        assert a == b


class TestReactionGating:
    CASES = [
        (Layout.INSTAGRAM, "like", True),
        (Layout.FACEBOOK, "like", True),
        (Layout.REDDIT, "like", False),
        (Layout.REDDIT, "upvote", True),
        (Layout.REDDIT, "downvote", True),
        (Layout.FACEBOOK, "upvote", False),
        (Layout.FACEBOOK, "share", True),
        (Layout.INSTAGRAM, "share", False),
        (Layout.WHATSAPP, "\U0001f44d", True),
        (Layout.MESSENGER, "❤", True),
        (Layout.FACEBOOK, "\U0001f602", True),
        (Layout.REDDIT, "\U0001f602", False),
        (Layout.INSTAGRAM, "\U0001f602", False),
    ]

    @pytest.mark.parametrize("layout,reaction,expected", CASES)
    def test_table(self, layout, reaction, expected):
        assert reaction_allowed(layout, reaction) is expected

    def test_emoji_set_restriction(self):
        assert reaction_allowed(Layout.WHATSAPP, "\U0001f44d", ["\U0001f44d"])
        assert not reaction_allowed(Layout.WHATSAPP, "\U0001f602", ["\U0001f44d"])
