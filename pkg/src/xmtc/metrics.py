"""Ranking metrics: P@k, nDCG@k and their propensity-scored variants.

Propensity-scored metrics divide each hit by the label's estimated observation
propensity, upweighting rare (tail) labels, and are reported relative to the
best achievable ranking of the same truth set, so a perfect prediction scores
1 regardless of the truth set's propensities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import XmtcError
from .validation import check_positive_int


def precision_at_k(ranked, truth, k: int) -> float:
    """|top-k intersect truth| / k; rankings shorter than k count as misses."""
    check_positive_int("k", k)
    if not truth:
        return 0.0
    return sum(1 for label in ranked[:k] if label in truth) / k


def _dcg(ranked, truth, k: int) -> float:
    return sum(
        1.0 / math.log2(r + 1)
        for r, label in enumerate(ranked[:k], start=1)
        if label in truth
    )


def _ideal_dcg(n_relevant: int, k: int) -> float:
    return sum(1.0 / math.log2(r + 1) for r in range(1, min(k, n_relevant) + 1))


def ndcg_at_k(ranked, truth, k: int) -> float:
    check_positive_int("k", k)
    if not truth:
        return 0.0
    return _dcg(ranked, truth, k) / _ideal_dcg(len(truth), k)


@dataclass
class PropensityModel:
    """Per-label propensities 1 / (1 + C * (n + B)^-A), C = (ln N - 1)(B+1)^A."""

    p: np.ndarray
    A: float
    B: float
    C: float

    def of(self, label: int) -> float:
        return float(self.p[label])


def propensities(
    label_counts: np.ndarray, n_train: int, A: float = 0.55, B: float = 1.5
) -> PropensityModel:
    """Fit the standard inverse-propensity curve to training label counts.

    Monotone non-decreasing in the count; approaches 1 as counts grow.  The
    value is capped at 1 so the (0, 1] range survives tiny corpora where
    ln(N) < 1.
    """
    check_positive_int("n_train", n_train)
    counts = np.asarray(label_counts, dtype=np.float64)
    C = (math.log(n_train) - 1.0) * (B + 1.0) ** A
    p = 1.0 / (1.0 + C * np.exp(-A * np.log(counts + B)))
    return PropensityModel(p=np.minimum(p, 1.0), A=A, B=B, C=C)


def psp_at_k(ranked, truth, model: PropensityModel, k: int) -> float:
    """Propensity-scored precision, normalized by the best possible ranking."""
    check_positive_int("k", k)
    if not truth:
        return 0.0
    raw = sum(1.0 / model.of(label) for label in ranked[:k] if label in truth) / k
    best_gains = sorted((1.0 / model.of(label) for label in truth), reverse=True)
    ideal = sum(best_gains[: min(k, len(best_gains))]) / k
    return raw / ideal


def psndcg_at_k(ranked, truth, model: PropensityModel, k: int) -> float:
    """Propensity-scored nDCG, normalized by the best possible ranking."""
    check_positive_int("k", k)
    if not truth:
        return 0.0
    raw = sum(
        (1.0 / model.of(label)) / math.log2(r + 1)
        for r, label in enumerate(ranked[:k], start=1)
        if label in truth
    )
    best_gains = sorted((1.0 / model.of(label) for label in truth), reverse=True)
    ideal = sum(
        gain / math.log2(r + 1)
        for r, gain in enumerate(best_gains[: min(k, len(best_gains))], start=1)
    )
    return raw / ideal


@dataclass
class EvalReport:
    """Percentages averaged over test instances, keyed like "P@1"."""

    values: dict[str, float] = field(default_factory=dict)
    n_instances: int = 0
    ks: tuple[int, ...] = (1, 3, 5)

    METRICS = ("P", "nDCG", "PSP", "PSnDCG")

    def to_table(self) -> str:
        header = "metric" + "".join(f"{f'@{k}':>10}" for k in self.ks)
        lines = [header]
        for m in self.METRICS:
            lines.append(
                f"{m:<6}"
                + "".join(f"{self.values[f'{m}@{k}']:>10.2f}" for k in self.ks)
            )
        return "\n".join(lines)

    def to_kv(self) -> str:
        lines = [f"n_instances={self.n_instances}", f"ks={','.join(map(str, self.ks))}"]
        for m in self.METRICS:
            for k in self.ks:
                key = f"{m}@{k}"
                lines.append(f"{key}={self.values[key]!r}")
        return "\n".join(lines) + "\n"


def parse_report(text: str) -> EvalReport:
    values: dict[str, float] = {}
    n_instances = 0
    ks: tuple[int, ...] = (1, 3, 5)
    for line in text.splitlines():
        if not line.strip():
            continue
        key, _, value = line.partition("=")
        if key == "n_instances":
            n_instances = int(value)
        elif key == "ks":
            ks = tuple(int(x) for x in value.split(","))
        else:
            values[key] = float(value)
    return EvalReport(values=values, n_instances=n_instances, ks=ks)


def evaluate(
    predictions: list[list[int]],
    truths: list,
    model: PropensityModel,
    ks: tuple[int, ...] = (1, 3, 5),
) -> EvalReport:
    """Average the per-instance metrics over a test set, scaled to percent.

    Instances with empty truth sets contribute zeros to every average.
    """
    if len(predictions) != len(truths):
        raise XmtcError(
            f"{len(predictions)} prediction lines vs {len(truths)} truth instances"
        )
    if not predictions:
        raise XmtcError("nothing to evaluate")
    totals = {f"{m}@{k}": 0.0 for m in EvalReport.METRICS for k in ks}
    for ranked, truth in zip(predictions, truths):
        truth = set(truth)
        for k in ks:
            totals[f"P@{k}"] += precision_at_k(ranked, truth, k)
            totals[f"nDCG@{k}"] += ndcg_at_k(ranked, truth, k)
            totals[f"PSP@{k}"] += psp_at_k(ranked, truth, model, k)
            totals[f"PSnDCG@{k}"] += psndcg_at_k(ranked, truth, model, k)
    n = len(predictions)
    return EvalReport(
        values={key: 100.0 * total / n for key, total in totals.items()},
        n_instances=n,
        ks=tuple(ks),
    )


def write_predictions(scored_rankings, path) -> None:
    """One line per instance: "label:score" pairs, descending score."""
    with open(path, "w", encoding="utf-8") as fh:
        for ranking in scored_rankings:
            fh.write(
                " ".join(f"{label}:{float(score)!r}" for label, score in ranking)
                + "\n"
            )


def read_predictions(path) -> list[list[tuple[int, float]]]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            ranking = []
            if line:
                for pair in line.split(" "):
                    label, sep, score = pair.partition(":")
                    if not sep:
                        raise XmtcError(
                            f"predictions file malformed at line {lineno}"
                        )
                    ranking.append((int(label), float(score)))
            out.append(ranking)
    return out
