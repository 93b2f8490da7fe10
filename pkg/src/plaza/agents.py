"""Agent configuration, trigger matching, and prompt assembly.

An agent is an LLM-backed synthetic participant: a persona prompt layered on
a human/bot base prompt, a delay model, and a set of event triggers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from typing import Optional

from .models import ContentItem, DelayModel, EventKind, SessionEvent, SourceRole
from .providers import ModelConfig, ProviderMessage, ProviderRequest


class AgentMode(str, Enum):
    HUMAN = "human"
    BOT = "bot"


class Trigger(str, Enum):
    ON_USER_POST = "on_user_post"
    ON_BOT_POST = "on_bot_post"
    ON_MODERATION_ACTION = "on_moderation_action"
    ON_SCRIPTED_CONTENT = "on_scripted_content"
    ON_SYSTEM_EVENT = "on_system_event"
    MANUAL = "manual"


@dataclass
class AgentConfig:
    id: str
    identity_user_id: str
    model_config_id: str
    mode: AgentMode = AgentMode.HUMAN
    custom_prompt: str = ""
    delay: DelayModel = field(default_factory=DelayModel)
    triggers: set[Trigger] = field(default_factory=set)
    context_window_items: int = 10

    def validate(self) -> list[str]:
        errs = []
        if not self.triggers:
            errs.append(f"agent[{self.id}].triggers: must be non-empty")
        if self.context_window_items <= 0:
            errs.append(f"agent[{self.id}].context_window_items: must be positive")
        errs.extend(
            f"agent[{self.id}].delay: {e}" for e in self.delay.validate()
        )
        return errs


def base_prompt(mode: AgentMode) -> str:
    name = "human.txt" if mode == AgentMode.HUMAN else "bot.txt"
    return resources.files("plaza.prompts").joinpath(name).read_text(encoding="utf-8").strip()


def trigger_for_event(event: SessionEvent) -> Optional[Trigger]:
    """Map an event to the trigger class it can activate, if any."""
    kind = event.kind
    if kind == EventKind.CONTENT_CREATED:
        role = SourceRole(event.payload.get("source_role"))
        if role == SourceRole.USER:
            return Trigger.ON_USER_POST
        if role == SourceRole.BOT:
            return Trigger.ON_BOT_POST
        return None
    if kind in (
        EventKind.MODERATION_FLAGGED,
        EventKind.MODERATION_DELETED,
        EventKind.MODERATION_POPUP,
    ):
        return Trigger.ON_MODERATION_ACTION
    if kind == EventKind.SCRIPT_RELEASED:
        return Trigger.ON_SCRIPTED_CONTENT
    if kind in (EventKind.SESSION_STARTED, EventKind.SESSION_ENDED):
        return Trigger.ON_SYSTEM_EVENT
    if kind == EventKind.MANUAL_TRIGGER:
        return Trigger.MANUAL
    return None


def match_trigger(agent: AgentConfig, event: SessionEvent) -> bool:
    """True iff the event activates one of the agent's triggers.

    An agent never triggers on its own emissions, and a manual trigger only
    activates the agent it names.
    """
    trigger = trigger_for_event(event)
    if trigger is None or trigger not in agent.triggers:
        return False
    if trigger == Trigger.MANUAL:
        return event.payload.get("agent_id") == agent.id
    if event.payload.get("author_user_id") == agent.identity_user_id:
        return False
    return True


def compose_prompt(
    agent: AgentConfig,
    model_config: ModelConfig,
    context_items: list[ContentItem],
    display_names: dict[str, str],
    manual_instruction: Optional[str] = None,
) -> ProviderRequest:
    """Assemble the provider request: base prompt + custom persona as the
    system text, and the last non-deleted content items (oldest first) as
    the conversation window."""
    system_text = base_prompt(agent.mode)
    if agent.custom_prompt:
        system_text += "\n\n" + agent.custom_prompt
    if manual_instruction:
        system_text += "\n\nInstruction from the session operator: " + manual_instruction

    window = [i for i in context_items if i.deleted_at is None]
    window = window[-agent.context_window_items :]
    messages = [
        ProviderMessage(
            role_tag="user",
            text=f"{display_names.get(i.author_user_id, i.author_user_id)}: {i.body}",
        )
        for i in window
    ]
    if not messages:
        messages = [ProviderMessage(role_tag="user", text="(the session has just started; open the conversation)")]
    return ProviderRequest(
        model_name=model_config.model_name,
        system_text=system_text,
        messages=messages,
        params=dict(model_config.params),
    )
