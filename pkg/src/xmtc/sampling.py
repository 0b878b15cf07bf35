"""Uniform and inverse-frequency ("reversed") instance samplers.

The conventional branch consumes each training instance exactly once per epoch
in a seed-deterministic random order.  The re-balance branch draws a label with
probability inversely proportional to its instance count, then a uniform
instance carrying that label, with replacement; pairing the two streams yields
the mini-batches for bilateral training.
"""

from __future__ import annotations

import numpy as np

from .corpus import Dataset, label_frequencies
from .errors import XmtcError
from .validation import check_nonempty_dataset, check_positive_int


def uniform_epoch(ds: Dataset, seed: int) -> np.ndarray:
    """A seed-deterministic permutation of all instance indices."""
    check_nonempty_dataset(ds)
    return np.random.default_rng(seed).permutation(ds.n)


class ReversedSampler:
    """Samples (label ~ inverse frequency, then uniform instance of that label).

    Label weights are w = n_max / n for labels with n > 0; labels absent from
    training get probability zero.  Probabilities are computed once, since the
    counts are fixed for a given training split.
    """

    def __init__(self, ds: Dataset, seed: int):
        check_nonempty_dataset(ds)
        counts = label_frequencies(ds)
        if not np.any(counts > 0):
            raise XmtcError("no label has a positive instance count")
        weights = np.zeros(len(counts), dtype=np.float64)
        positive = counts > 0
        weights[positive] = counts[positive].max() / counts[positive]
        self.label_counts = counts
        self.probabilities = weights / weights.sum()
        self._cdf = np.cumsum(self.probabilities)
        self._cdf[-1] = 1.0
        self._instances_of: list[np.ndarray] = [
            np.empty(0, dtype=np.intp) for _ in range(len(counts))
        ]
        per_label: list[list[int]] = [[] for _ in range(len(counts))]
        for i, labels in enumerate(ds.labels):
            for l in labels:
                per_label[l].append(i)
        for l, members in enumerate(per_label):
            self._instances_of[l] = np.array(members, dtype=np.intp)
        self.rng = np.random.default_rng(seed)

    def draw_label(self) -> int:
        return int(np.searchsorted(self._cdf, self.rng.random(), side="right"))

    def draw(self) -> int:
        """One instance index, drawn with replacement."""
        label = self.draw_label()
        members = self._instances_of[label]
        return int(members[self.rng.integers(members.size)])

    def draw_many(self, n: int) -> np.ndarray:
        return np.array([self.draw() for _ in range(n)], dtype=np.intp)

    def marginal_instance_probabilities(self, ds: Dataset) -> np.ndarray:
        """Closed-form P(draw = i) = sum over i's labels of p_label / n_label."""
        out = np.zeros(ds.n, dtype=np.float64)
        for i, labels in enumerate(ds.labels):
            for l in labels:
                if self.label_counts[l] > 0:
                    out[i] += self.probabilities[l] / self.label_counts[l]
        return out


def paired_batches(
    uniform_stream: np.ndarray,
    sampler: ReversedSampler,
    batch_size: int,
    targets: np.ndarray,
):
    """Pair the uniform epoch with independent reversed draws, batch by batch.

    Yields ((idx_c, g_c), (idx_r, g_r)) tuples; the uniform side covers the
    epoch exactly, the reversed side draws the same number with replacement.
    """
    check_positive_int("batch_size", batch_size)
    uniform_stream = np.asarray(uniform_stream)
    for start in range(0, uniform_stream.size, batch_size):
        idx_c = uniform_stream[start : start + batch_size]
        idx_r = sampler.draw_many(idx_c.size)
        yield (idx_c, targets[idx_c]), (idx_r, targets[idx_r])
