"""Distillation-stage tests: consensus partition, teaching data assembly,
student training semantics, audit export."""

import json

import numpy as np
import pytest

from dualdistill.data import generate_synthetic, make_split, split_corpus
from dualdistill.distillation import (
    Partition,
    TeacherPair,
    build_teaching_data,
    export_teaching_data,
    hard_label_view,
    partition_predictions,
    single_teacher_view,
    train_student,
)
from dualdistill.features import featurize_all
from dualdistill.losses import cross_entropy, kl_divergence, softmax
from dualdistill.model import (
    TrainConfig,
    TrainSample,
    evaluate_loss,
    forward,
    init_model,
    predict,
    train,
)

DIM = 1 << 10
TAU = 2.4


def fixture_split(seed=5):
    label_set, insts = generate_synthetic(4, 40, 100, 0.25, seed=seed)
    corpus = split_corpus(label_set, insts, 0.1, 0.2, seed=3)
    return make_split(corpus, 0.2, 0.6, seed=7)


def fixture_features(split):
    everything = split.labeled + split.unlabeled + split.dev + split.test
    return featurize_all(everything, DIM, seed=7)


def trained_pair(split, feats, seeds=(1, 2)):
    samples = [TrainSample(feats[i.id], hard_label=i.relation) for i in split.labeled]
    opt = TrainConfig(learning_rate=5.0, epochs=5, shuffle_seed=3)
    models = [
        train(init_model("linear", DIM, 4, seed=s), samples, opt) for s in seeds
    ]
    return TeacherPair(models[0], models[1])


def divergent_pair(split, feats):
    """Teachers trained on overlapping thirds of the labeled data, so they
    agree on part of the pool and disagree on the rest."""
    samples = [TrainSample(feats[i.id], hard_label=i.relation) for i in split.labeled]
    cut = len(samples) // 3
    opt = TrainConfig(learning_rate=5.0, epochs=3, shuffle_seed=3)
    t1 = train(init_model("linear", DIM, 4, seed=1), samples[cut:], opt)
    t2 = train(init_model("linear", DIM, 4, seed=2), samples[:-cut], opt)
    return TeacherPair(t1, t2)


class TestTeacherPair:
    def test_rejects_mismatched_teachers(self):
        with pytest.raises(ValueError):
            TeacherPair(init_model("linear", DIM, 4, 1), init_model("linear", DIM, 5, 2))
        with pytest.raises(ValueError):
            TeacherPair(init_model("linear", DIM, 4, 1), init_model("mlp1", DIM, 4, 2))


class TestPartitionPredictions:
    def test_identical_teachers_have_empty_difference(self):
        split = fixture_split()
        feats = fixture_features(split)
        pair = trained_pair(split, feats, seeds=(1, 1))
        part = partition_predictions(pair, split.unlabeled, features=feats)
        assert part.difference == []
        assert len(part.intersection) == len(split.unlabeled)

    def test_partition_matches_recomputed_argmaxes(self):
        """Brute-force check: redo both argmaxes for every instance."""
        split = fixture_split()
        feats = fixture_features(split)
        pair = trained_pair(split, feats)
        part = partition_predictions(pair, split.unlabeled, features=feats)
        inter = {inst.id: label for inst, label in part.intersection}
        diff = {inst.id for inst in part.difference}
        assert not set(inter) & diff
        assert set(inter) | diff == {i.id for i in split.unlabeled}
        for inst in split.unlabeled:
            l1 = predict(pair.t1, feats[inst.id])
            l2 = predict(pair.t2, feats[inst.id])
            if l1 == l2:
                assert inter[inst.id] == l1
            else:
                assert inst.id in diff

    def test_complementary_teachers_have_empty_intersection(self):
        split = fixture_split()
        feats = fixture_features(split)
        t1 = init_model("linear", DIM, 4, seed=0)
        t2 = init_model("linear", DIM, 4, seed=0)
        t1.params["weights"][:] = 0.0
        t2.params["weights"][:] = 0.0
        t1.params["bias"][:] = [1.0, 0.0, 0.0, 0.0]
        t2.params["bias"][:] = [0.0, 1.0, 0.0, 0.0]
        part = partition_predictions(TeacherPair(t1, t2), split.unlabeled, features=feats)
        assert part.intersection == []
        assert len(part.difference) == len(split.unlabeled)


class TestBuildTeachingData:
    def test_sizes_and_origins(self):
        split = fixture_split()
        feats = fixture_features(split)
        pair = divergent_pair(split, feats)
        part = partition_predictions(pair, split.unlabeled, features=feats)
        teaching = build_teaching_data(split, part, pair, TAU, True, features=feats)
        assert len(teaching.samples) == (
            len(split.labeled) + len(part.intersection) + len(part.difference)
        )
        counts = {o: teaching.origins.count(o) for o in ("L", "I", "diff")}
        assert counts["L"] == len(split.labeled)
        assert counts["I"] == len(part.intersection)
        assert counts["diff"] == len(part.difference)

    def test_difference_flag_off(self):
        split = fixture_split()
        feats = fixture_features(split)
        pair = trained_pair(split, feats)
        part = partition_predictions(pair, split.unlabeled, features=feats)
        teaching = build_teaching_data(split, part, pair, TAU, False, features=feats)
        assert len(teaching.samples) == len(split.labeled) + len(part.intersection)
        assert all(s.hard_label is not None for s in teaching.samples)

    def test_empty_intersection_reduces_to_labeled_data(self):
        split = fixture_split()
        feats = fixture_features(split)
        pair = trained_pair(split, feats)
        part = Partition(intersection=[], difference=[])
        teaching = build_teaching_data(split, part, pair, TAU, False, features=feats)
        assert len(teaching.samples) == len(split.labeled)
        assert [s.hard_label for s in teaching.samples] == [
            i.relation for i in split.labeled
        ]

    def test_teacher_logits_are_frozen_forward_passes(self):
        split = fixture_split()
        feats = fixture_features(split)
        pair = divergent_pair(split, feats)
        part = partition_predictions(pair, split.unlabeled, features=feats)
        teaching = build_teaching_data(split, part, pair, TAU, True, features=feats)
        for sample, inst_id in list(zip(teaching.samples, teaching.instance_ids))[:20]:
            np.testing.assert_array_equal(
                sample.teacher_logits[0], forward(pair.t1, feats[inst_id])
            )
            np.testing.assert_array_equal(
                sample.teacher_logits[1], forward(pair.t2, feats[inst_id])
            )

    def test_softened_distributions_valid_and_rank_preserving(self):
        split = fixture_split()
        feats = fixture_features(split)
        pair = divergent_pair(split, feats)
        part = partition_predictions(pair, split.unlabeled, features=feats)
        teaching = build_teaching_data(split, part, pair, TAU, True, features=feats)
        for sample in teaching.samples[:50]:
            for z in sample.teacher_logits:
                p = softmax(z, TAU)
                assert abs(p.sum() - 1.0) <= 1e-9
                assert np.argmax(p) == np.argmax(z)


class TestTrainStudent:
    def test_hard_only_training_matches_plain_supervised_run(self):
        """With the soft weight at zero the student must be bitwise equal
        to a supervised run on the same hard-labeled samples."""
        split = fixture_split()
        feats = fixture_features(split)
        pair = trained_pair(split, feats)
        part = partition_predictions(pair, split.unlabeled, features=feats)
        teaching = build_teaching_data(split, part, pair, TAU, False, features=feats)
        opt = TrainConfig(learning_rate=5.0, epochs=4, shuffle_seed=11)
        student = train_student(teaching, "linear", 0.0, TAU, opt, student_seed=42)
        reference = train(
            init_model("linear", DIM, 4, seed=42), hard_label_view(teaching), opt
        )
        for k in student.params:
            assert np.array_equal(student.params[k], reference.params[k])
        assert student.train_losses == reference.train_losses

    def test_identical_teachers_and_student_split_loss_terms(self):
        """Student initialized at the (identical) teachers: the soft term is
        zero and the initial loss is (1 - w) times the hard-label loss."""
        split = fixture_split()
        feats = fixture_features(split)
        pair = trained_pair(split, feats, seeds=(3, 3))
        part = partition_predictions(pair, split.unlabeled, features=feats)
        teaching = build_teaching_data(split, part, pair, TAU, False, features=feats)
        lam = 0.4
        base_full = evaluate_loss(pair.t1, teaching.samples, 0.0, TAU)
        mixed = evaluate_loss(pair.t1, teaching.samples, lam, TAU)
        np.testing.assert_allclose(mixed, (1 - lam) * base_full, atol=1e-9)
        # hard term on consensus labels equals CE of the teachers' own argmax
        ce = np.mean([
            cross_entropy(s.hard_label, softmax(forward(pair.t1, s.features)))
            for s in teaching.samples
        ])
        np.testing.assert_allclose(base_full, ce, atol=1e-9)

    def test_lambda_affine_in_loss(self):
        split = fixture_split()
        feats = fixture_features(split)
        pair = divergent_pair(split, feats)
        part = partition_predictions(pair, split.unlabeled, features=feats)
        teaching = build_teaching_data(split, part, pair, TAU, True, features=feats)
        probe = init_model("linear", DIM, 4, seed=77)
        at0 = evaluate_loss(probe, teaching.samples, 0.0, TAU)
        at_half = evaluate_loss(probe, teaching.samples, 0.5, TAU)
        at1 = evaluate_loss(probe, teaching.samples, 1.0, TAU)
        np.testing.assert_allclose(at_half, 0.5 * (at0 + at1), atol=1e-12)

    def test_single_teacher_view_drops_exactly_one_kl_term(self):
        split = fixture_split()
        feats = fixture_features(split)
        pair = divergent_pair(split, feats)
        part = partition_predictions(pair, split.unlabeled, features=feats)
        teaching = build_teaching_data(split, part, pair, TAU, True, features=feats)
        only_first = single_teacher_view(teaching, 0)
        student = init_model("linear", DIM, 4, seed=5)
        full = evaluate_loss(student, teaching.samples, 1.0, TAU)
        partial = evaluate_loss(student, only_first.samples, 1.0, TAU)
        excluded = np.mean([
            kl_divergence(
                softmax(s.teacher_logits[1], TAU),
                softmax(forward(student, s.features), TAU),
            )
            for s in teaching.samples
        ])
        np.testing.assert_allclose(full - partial, excluded, atol=1e-9)

    def test_difference_samples_have_no_hard_label(self):
        split = fixture_split()
        feats = fixture_features(split)
        pair = divergent_pair(split, feats)
        part = partition_predictions(pair, split.unlabeled, features=feats)
        teaching = build_teaching_data(split, part, pair, TAU, True, features=feats)
        assert part.difference, "fixture should produce disagreements"
        for sample, origin in zip(teaching.samples, teaching.origins):
            assert (sample.hard_label is None) == (origin == "diff")


class TestExport:
    def test_audit_dump_round_trips_soft_labels(self, tmp_path):
        split = fixture_split()
        feats = fixture_features(split)
        pair = divergent_pair(split, feats)
        part = partition_predictions(pair, split.unlabeled, features=feats)
        teaching = build_teaching_data(split, part, pair, TAU, True, features=feats)
        path = tmp_path / "teaching.jsonl"
        export_teaching_data(teaching, path)
        rows = [json.loads(line) for line in path.read_text().splitlines()]
        assert len(rows) == len(teaching.samples)
        assert {r["origin"] for r in rows} == {"L", "I", "diff"}
        for row, sample in zip(rows, teaching.samples):
            assert row["hard_label"] == sample.hard_label
            for soft, z in zip(row["teacher_soft_labels"], sample.teacher_logits):
                np.testing.assert_allclose(soft, softmax(z, TAU), atol=1e-12)
