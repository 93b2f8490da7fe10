import pytest

from plaza.agents import AgentConfig, AgentMode, Trigger
from plaza.auth import hash_password
from plaza.engine import SessionEngine
from plaza.models import (
    AccountRole,
    ContentKind,
    DelayModel,
    Experiment,
    ExperimentKind,
    Instance,
    Layout,
    Template,
    UserAccount,
)
from plaza.moderation import KeywordDetection, ActionKind, ModerationRule, RuleAction
from plaza.providers import ModelConfig, StubProvider
from plaza.store import Store


def make_user(store, name, role=AccountRole.PARTICIPANT, **kw):
    user = UserAccount(
        id=store.new_id("u"),
        email=kw.pop("email", f"{name.lower()}@example.invalid"),
        credential=kw.pop("credential", hash_password("pw", salt="00")),
        display_name=name,
        account_role=role,
        **kw,
    )
    store.users[user.id] = user
    return user


def make_experiment(store, kind=ExperimentKind.FEED, layout=Layout.REDDIT, n_templates=1, **kw):
    experiment = Experiment(
        id=store.new_id("e"),
        name=kw.pop("name", "exp"),
        kind=kind,
        session_duration_s=kw.pop("session_duration_s", 600),
        waiting_min_participants=kw.pop("waiting_min_participants", 1),
        waiting_max_wait_s=kw.pop("waiting_max_wait_s", 60),
        max_participants_per_instance=kw.pop("max_participants_per_instance", 10),
        max_concurrent_instances=kw.pop("max_concurrent_instances", 10),
        **kw,
    )
    for _ in range(n_templates):
        template = Template(id=store.new_id("t"), experiment_id=experiment.id, layout=layout)
        store.templates[template.id] = template
        experiment.template_ids.append(template.id)
    store.experiments[experiment.id] = experiment
    return experiment


def make_agent(store, name="Agent", triggers=None, mode=AgentMode.HUMAN, **kw):
    identity = make_user(store, name, role=AccountRole.AGENT_IDENTITY)
    model = ModelConfig(id=store.new_id("m"), endpoint_url="stub:", model_name="stub-model")
    store.model_configs[model.id] = model
    agent = AgentConfig(
        id=store.new_id("a"),
        identity_user_id=identity.id,
        model_config_id=model.id,
        mode=mode,
        triggers=set(triggers or {Trigger.ON_USER_POST}),
        **kw,
    )
    store.agent_configs[agent.id] = agent
    return agent


def make_keyword_rule(store, words, action_kind=ActionKind.FLAG, **kw):
    rule = ModerationRule(
        id=store.new_id("r"),
        detection=KeywordDetection(words=list(words)),
        action=RuleAction(kind=action_kind, label=kw.pop("label", "flagged"),
                          message=kw.pop("message", "watch it")),
        **kw,
    )
    store.rules[rule.id] = rule
    return rule


def make_engine(store, experiment, participants, template_id=None, providers=None, **kw):
    template = store.templates[template_id or experiment.template_ids[0]]
    instance = Instance(
        id=store.new_id("i"),
        template_id=template.id,
        experiment_id=experiment.id,
        participant_ids=[u.id for u in participants],
        rng_seed=kw.pop("rng_seed", 1234),
    )
    store.instances[instance.id] = instance
    if providers is None:
        providers = {mid: StubProvider() for mid in store.model_configs}
    return SessionEngine(store, experiment, template, instance, providers, **kw)


@pytest.fixture
def store():
    return Store()
