"""Shared error types for configuration loading."""

from __future__ import annotations


class ConfigError(Exception):
    """A configuration file failed to parse or validate.

    The message always names the offending file and, where possible, the
    element path and field (e.g. ``topo.json: links[2].latency_ms: must be > 0``).
    """

    def __init__(self, source: str, detail: str):
        self.source = source
        self.detail = detail
        super().__init__(f"{source}: {detail}")
