"""Controlled real-time social-media simulation server: feed and chat
sessions with human participants, LLM agent personas, scripted stimuli, a
configurable moderation pipeline, and deterministic replay/export."""

__version__ = "0.1.0"
