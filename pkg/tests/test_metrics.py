import json

import numpy as np
import pytest

from dualdistill.data import LabelSet
from dualdistill.metrics import dump_predictions, score

NEG = LabelSet(("no_relation", "r1", "r2", "r3"), 0)
PLAIN = LabelSet(("a", "b", "c"), None)


def brute_force(gold, pred, neg_index):
    """Count the confusion totals pair by pair, no vector tricks."""
    n_gold = n_pred = n_correct = 0
    for g, p in zip(gold, pred):
        if g != neg_index:
            n_gold += 1
        if p != neg_index:
            n_pred += 1
        if g == p and g != neg_index:
            n_correct += 1
    precision = n_correct / n_pred if n_pred else 0.0
    recall = n_correct / n_gold if n_gold else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


class TestScore:
    def test_perfect_without_negative_class(self):
        s = score([0, 1, 2, 1], [0, 1, 2, 1], PLAIN)
        assert (s.precision, s.recall, s.f1) == (1.0, 1.0, 1.0)

    def test_hand_counted_case(self):
        # gold/pred over {r1, r1, no_rel, r2} vs {r1, no_rel, r2, r2}:
        # 3 gold positives, 3 predicted positives, 2 exact matches.
        gold = [1, 1, 0, 2]
        pred = [1, 0, 2, 2]
        s = score(gold, pred, NEG)
        np.testing.assert_allclose((s.precision, s.recall, s.f1), (2 / 3, 2 / 3, 2 / 3))
        assert (s.n_gold_positive, s.n_pred_positive, s.n_correct_positive) == (3, 3, 2)

    def test_all_negative_predictions_score_zero(self):
        s = score([1, 2, 0], [0, 0, 0], NEG)
        assert (s.precision, s.recall, s.f1) == (0.0, 0.0, 0.0)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            score([0, 1], [0], NEG)

    def test_plain_accuracy_without_negative(self):
        s = score([0, 1, 2, 0], [0, 2, 2, 1], PLAIN)
        np.testing.assert_allclose((s.precision, s.recall, s.f1), (0.5, 0.5, 0.5))

    def test_matches_brute_force_oracle(self):
        """1000 random label vectors against the pairwise counting oracle."""
        rng = np.random.default_rng(20240620)
        for _ in range(1000):
            n_labels = int(rng.integers(2, 43))
            labels = LabelSet(
                tuple(f"l{i}" for i in range(n_labels)),
                no_relation_index=int(rng.integers(0, n_labels)),
            )
            n = int(rng.integers(1, 60))
            gold = rng.integers(0, n_labels, size=n).tolist()
            pred = rng.integers(0, n_labels, size=n).tolist()
            s = score(gold, pred, labels)
            expect = brute_force(gold, pred, labels.no_relation_index)
            np.testing.assert_allclose((s.precision, s.recall, s.f1), expect, atol=1e-12)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(20240621)
        gold = rng.integers(0, 4, size=50).tolist()
        pred = rng.integers(0, 4, size=50).tolist()
        base = score(gold, pred, NEG)
        for _ in range(10):
            perm = rng.permutation(50)
            shuffled = score([gold[i] for i in perm], [pred[i] for i in perm], NEG)
            assert shuffled == base

    def test_f1_between_min_and_max(self):
        rng = np.random.default_rng(20240622)
        for _ in range(200):
            gold = rng.integers(0, 4, size=30).tolist()
            pred = rng.integers(0, 4, size=30).tolist()
            s = score(gold, pred, NEG)
            if s.precision + s.recall > 0:
                assert min(s.precision, s.recall) - 1e-12 <= s.f1
                assert s.f1 <= max(s.precision, s.recall) + 1e-12


class TestDumpPredictions:
    def test_jsonl_structure_and_topk(self, tmp_path):
        probs = [np.array([0.1, 0.6, 0.2, 0.1]), np.array([0.7, 0.1, 0.1, 0.1])]
        path = tmp_path / "preds.jsonl"
        dump_predictions(path, ["a", "b"], [1, 0], probs, NEG, top_k=3)
        rows = [json.loads(line) for line in path.read_text().splitlines()]
        assert rows[0]["id"] == "a"
        assert rows[0]["gold"] == "r1"
        assert rows[0]["pred"] == "r1"
        assert len(rows[0]["top"]) == 3
        assert rows[0]["top"][0]["label"] == "r1"
        assert rows[1]["pred"] == "no_relation"
