"""Cleanup toolkit for multi-party spoken-conversation transcripts."""

from .model import (
    Category,
    Conversation,
    LabelSet,
    PipelineConfig,
    StatsReport,
    Token,
    Turn,
    build_conversation,
    dataset_stats,
)

__all__ = [
    "Category",
    "Conversation",
    "LabelSet",
    "PipelineConfig",
    "StatsReport",
    "Token",
    "Turn",
    "build_conversation",
    "dataset_stats",
]

__version__ = "0.1.0"
