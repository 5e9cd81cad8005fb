"""Reward-gated test-time compute routing with query-state caching."""

__version__ = "0.1.0"
