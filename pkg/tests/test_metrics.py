import itertools
import math
from decimal import Decimal, getcontext

import numpy as np
import pytest

from xmtc.errors import XmtcError
from xmtc.metrics import (
    PropensityModel,
    evaluate,
    ndcg_at_k,
    parse_report,
    precision_at_k,
    propensities,
    psndcg_at_k,
    psp_at_k,
    read_predictions,
    write_predictions,
)


class TestPrecision:
    def test_hand_count(self):
        truth = {"a", "b"}
        assert precision_at_k(["a", "c", "b"], truth, 1) == 1.0
        assert precision_at_k(["a", "c", "b"], truth, 3) == pytest.approx(2 / 3)

    def test_empty_truth(self):
        assert precision_at_k(["a"], set(), 1) == 0.0

    def test_perfect(self):
        assert precision_at_k(["a", "b"], {"a", "b"}, 2) == 1.0

    def test_short_ranking_counts_misses(self):
        assert precision_at_k(["a"], {"a", "b", "c"}, 3) == pytest.approx(1 / 3)


class TestNdcg:
    def test_perfect(self):
        assert ndcg_at_k(["a", "b"], {"a", "b"}, 2) == pytest.approx(1.0)

    def test_late_hit(self):
        expected = (1 / math.log2(3)) / 1.0
        assert ndcg_at_k(["b", "a"], {"a"}, 2) == pytest.approx(expected)
        assert ndcg_at_k(["b", "a"], {"a"}, 2) == pytest.approx(0.6309297535714574)

    def test_empty_truth(self):
        assert ndcg_at_k(["a"], set(), 3) == 0.0

    def test_equals_precision_at_one(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            labels = list(range(10))
            rng.shuffle(labels)
            truth = set(rng.choice(10, size=int(rng.integers(1, 5)), replace=False).tolist())
            assert ndcg_at_k(labels, truth, 1) == precision_at_k(labels, truth, 1)


class TestPropensities:
    def test_large_count_approaches_one(self):
        model = propensities(np.array([1, 10**9]), n_train=10**4)
        assert model.p[1] > 0.999
        assert model.p[1] <= 1.0

    def test_high_precision_oracle(self):
        getcontext().prec = 50
        A, B, N, n = Decimal("0.55"), Decimal("1.5"), Decimal(10**4), Decimal(1)
        C = (N.ln() - 1) * ((B + 1).ln() * A).exp()
        expected = 1 / (1 + C * (-A * (n + B).ln()).exp())
        model = propensities(np.array([1]), n_train=10**4, A=0.55, B=1.5)
        assert model.p[0] == pytest.approx(float(expected), rel=1e-12)

    def test_monotone_in_count(self):
        counts = np.arange(0, 2000, 7)
        model = propensities(counts, n_train=5000)
        assert np.all(np.diff(model.p) >= 0)

    def test_range(self):
        model = propensities(np.array([0, 1, 5, 100]), n_train=300)
        assert np.all(model.p > 0) and np.all(model.p <= 1.0)


def unit_propensities(L):
    return PropensityModel(p=np.ones(L), A=0.55, B=1.5, C=0.0)


class TestPsp:
    def test_unit_propensity_reduces_to_normalized_precision(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            L = 12
            ranked = rng.permutation(L).tolist()
            truth = set(rng.choice(L, size=int(rng.integers(1, 6)), replace=False).tolist())
            model = unit_propensities(L)
            for k in (1, 3, 5):
                p = precision_at_k(ranked, truth, k)
                ideal_p = min(k, len(truth)) / k
                assert psp_at_k(ranked, truth, model, k) == pytest.approx(p / ideal_p)

    def test_perfect_prediction_scores_one(self):
        rng = np.random.default_rng(2)
        model = propensities(rng.integers(1, 50, size=10), n_train=100)
        for _ in range(20):
            truth = set(rng.choice(10, size=int(rng.integers(1, 5)), replace=False).tolist())
            # best ranking: ascending propensity
            ranked = sorted(truth, key=lambda l: model.of(l))
            for k in (1, 3, 5):
                assert psp_at_k(ranked, truth, model, k) == pytest.approx(1.0)
                assert psndcg_at_k(ranked, truth, model, k) == pytest.approx(1.0)

    def test_matches_brute_force_enumeration(self):
        rng = np.random.default_rng(3)
        model = propensities(rng.integers(1, 30, size=8), n_train=200)
        for _ in range(30):
            truth = set(rng.choice(8, size=int(rng.integers(1, 5)), replace=False).tolist())
            ranked = rng.permutation(8).tolist()
            for k in (1, 3):
                # normalizer by brute force over every ordering of the truth set
                best_psp = 0.0
                best_psdcg = 0.0
                for perm in itertools.permutations(sorted(truth)):
                    raw_p = sum(1 / model.of(l) for l in perm[:k]) / k
                    raw_d = sum(
                        (1 / model.of(l)) / math.log2(r + 1)
                        for r, l in enumerate(perm[:k], start=1)
                    )
                    best_psp = max(best_psp, raw_p)
                    best_psdcg = max(best_psdcg, raw_d)
                raw_p = sum(1 / model.of(l) for l in ranked[:k] if l in truth) / k
                raw_d = sum(
                    (1 / model.of(l)) / math.log2(r + 1)
                    for r, l in enumerate(ranked[:k], start=1)
                    if l in truth
                )
                assert psp_at_k(ranked, truth, model, k) == pytest.approx(
                    raw_p / best_psp, abs=1e-12
                )
                assert psndcg_at_k(ranked, truth, model, k) == pytest.approx(
                    raw_d / best_psdcg, abs=1e-12
                )

    def test_invariant_below_rank_k(self):
        rng = np.random.default_rng(4)
        model = propensities(rng.integers(1, 30, size=10), n_train=100)
        truth = {0, 3, 7}
        head = [3, 1, 0]
        tails = [[2, 4, 5, 6, 7, 8, 9], [9, 8, 7, 6, 5, 4, 2]]
        values = set()
        for tail in tails:
            ranked = head + tail
            values.add(
                (
                    precision_at_k(ranked, truth, 3),
                    ndcg_at_k(ranked, truth, 3),
                    psp_at_k(ranked, truth, model, 3),
                    psndcg_at_k(ranked, truth, model, 3),
                )
            )
        assert len(values) == 1


class TestEvaluate:
    def test_single_perfect_instance(self):
        model = unit_propensities(4)
        report = evaluate([[0, 1]], [{0, 1}], model, ks=(1,))
        assert report.values["P@1"] == 100.0
        assert report.values["PSnDCG@1"] == 100.0

    def test_empty_truth_counts_zero(self):
        model = unit_propensities(4)
        report = evaluate([[0], [1]], [{0}, set()], model, ks=(1,))
        assert report.values["P@1"] == 50.0

    def test_count_mismatch_rejected(self):
        with pytest.raises(XmtcError):
            evaluate([[0]], [{0}, {1}], unit_propensities(2))

    def test_report_round_trip(self):
        model = unit_propensities(4)
        report = evaluate([[0, 2], [1]], [{0}, {0, 1}], model)
        parsed = parse_report(report.to_kv())
        assert parsed.values == report.values
        assert parsed.n_instances == report.n_instances
        assert parsed.ks == report.ks

    def test_table_layout(self):
        model = unit_propensities(4)
        report = evaluate([[0]], [{0}], model)
        table = report.to_table()
        assert table.splitlines()[0].split() == ["metric", "@1", "@3", "@5"]
        assert table.splitlines()[1].startswith("P")


class TestPredictionsFile:
    def test_round_trip(self, tmp_path):
        rankings = [[(3, 0.75), (1, 0.5)], [], [(0, 1.0)]]
        p = tmp_path / "pred.txt"
        write_predictions(rankings, p)
        assert read_predictions(p) == rankings

    def test_malformed_rejected(self, tmp_path):
        p = tmp_path / "pred.txt"
        p.write_text("3:0.5 nonsense\n")
        with pytest.raises(XmtcError):
            read_predictions(p)
