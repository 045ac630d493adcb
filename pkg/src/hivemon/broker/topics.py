"""Topic names, topic filters and MQTT wildcard matching."""

from __future__ import annotations


class InvalidFilter(ValueError):
    pass


def validate_filter(topic_filter: str) -> None:
    if not topic_filter:
        raise InvalidFilter("empty topic filter")
    levels = topic_filter.split("/")
    for i, level in enumerate(levels):
        if "#" in level and (level != "#" or i != len(levels) - 1):
            raise InvalidFilter(f"'#' must be the whole, final level: {topic_filter!r}")
        if "+" in level and level != "+":
            raise InvalidFilter(f"'+' must occupy a whole level: {topic_filter!r}")


def validate_topic(topic: str) -> None:
    if not topic:
        raise ValueError("empty topic name")
    if "+" in topic or "#" in topic:
        raise ValueError(f"wildcards are not allowed in topic names: {topic!r}")


def match_topic(topic_filter: str, topic: str) -> bool:
    validate_filter(topic_filter)
    f_levels = topic_filter.split("/")
    t_levels = topic.split("/")
    # wildcards in the first level never match $-topics
    if topic.startswith("$") and f_levels[0] in ("+", "#"):
        return False
    for i, f in enumerate(f_levels):
        if f == "#":
            return True
        if i >= len(t_levels):
            return False
        if f != "+" and f != t_levels[i]:
            return False
    return len(f_levels) == len(t_levels)
