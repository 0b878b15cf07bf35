"""Input validation helpers used by estimators, operations, and the CLI."""

from __future__ import annotations

import os

import numpy as np

from .errors import ConfigError, XmtcError


def check_in_range(
    name: str,
    value: float,
    low: float | None = None,
    high: float | None = None,
    low_inclusive: bool = True,
    high_inclusive: bool = True,
) -> float:
    """Validate a numeric value against an interval; raises :class:`ConfigError`."""
    if not np.isfinite(value):
        raise ConfigError(name, f"must be finite, got {value!r}")
    if low is not None:
        ok = value >= low if low_inclusive else value > low
        if not ok:
            op = ">=" if low_inclusive else ">"
            raise ConfigError(name, f"must be {op} {low}, got {value!r}")
    if high is not None:
        ok = value <= high if high_inclusive else value < high
        if not ok:
            op = "<=" if high_inclusive else "<"
            raise ConfigError(name, f"must be {op} {high}, got {value!r}")
    return value


def check_positive_int(name: str, value: int, minimum: int = 1) -> int:
    if int(value) != value or value < minimum:
        raise ConfigError(name, f"must be an integer >= {minimum}, got {value!r}")
    return int(value)


def check_dataset(ds) -> None:
    """Structural invariants of a :class:`~xmtc.corpus.Dataset`."""
    n, d = ds.features.shape
    if d != ds.num_features:
        raise XmtcError("feature matrix width disagrees with num_features")
    if len(ds.labels) != n:
        raise XmtcError("label list length disagrees with feature matrix")
    if ds.features.nnz and not np.all(np.isfinite(ds.features.data)):
        raise XmtcError("feature values must be finite")
    for labels in ds.labels:
        for l in labels:
            if not 0 <= l < ds.num_labels:
                raise XmtcError(f"label id {l} out of range [0, {ds.num_labels})")


def check_nonempty_dataset(ds, context: str = "dataset") -> None:
    if ds.n == 0:
        raise XmtcError(f"{context} is empty")


def worker_count(limit: int | None = None) -> int:
    """Worker cap for parallel sections; honours the XMTC_THREADS env var."""
    env = os.environ.get("XMTC_THREADS")
    count = os.cpu_count() or 1
    if env is not None:
        try:
            count = max(1, int(env))
        except ValueError:
            raise ConfigError("XMTC_THREADS", f"must be an integer, got {env!r}")
    if limit is not None:
        count = min(count, limit)
    return count
