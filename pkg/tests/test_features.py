import numpy as np
import pytest

from dualdistill.features import (
    FeatureVector,
    Instance,
    featurize,
    featurize_all,
    insert_markers,
)

DIM = 1 << 12


def make_instance(**kw):
    base = dict(
        id="i0",
        tokens=["The", "implant", "is", "placed", "into", "the", "jaw", "bone"],
        subj_span=(1, 2),
        obj_span=(6, 8),
        relation=0,
    )
    base.update(kw)
    return Instance(**base)


class TestInstanceValidation:
    def test_valid(self):
        make_instance()

    def test_span_out_of_bounds(self):
        with pytest.raises(ValueError):
            make_instance(obj_span=(6, 9))

    def test_empty_span(self):
        with pytest.raises(ValueError):
            make_instance(subj_span=(2, 2))

    def test_overlapping_spans(self):
        with pytest.raises(ValueError):
            make_instance(subj_span=(1, 4), obj_span=(3, 6))


class TestInsertMarkers:
    def test_sentence_with_both_entities(self):
        out = insert_markers(make_instance())
        assert out == [
            "[CLS]", "The", "[E1]", "implant", "[E1]", "is", "placed", "into",
            "the", "[E2]", "jaw", "bone", "[E2]", "[SEP]",
        ]

    def test_minimal_adjacent_spans(self):
        inst = Instance(id="m", tokens=["a", "b"], subj_span=(0, 1), obj_span=(1, 2))
        assert insert_markers(inst) == [
            "[CLS]", "[E1]", "a", "[E1]", "[E2]", "b", "[E2]", "[SEP]"
        ]

    def test_object_before_subject(self):
        inst = Instance(id="r", tokens=["x", "y", "z"], subj_span=(2, 3), obj_span=(0, 1))
        assert insert_markers(inst) == [
            "[CLS]", "[E2]", "x", "[E2]", "y", "[E1]", "z", "[E1]", "[SEP]"
        ]

    def test_length_always_plus_six(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            n = int(rng.integers(2, 20))
            s1 = int(rng.integers(0, n - 1))
            e1 = int(rng.integers(s1 + 1, n))
            remaining = [
                (s, e)
                for s in range(n)
                for e in range(s + 1, n + 1)
                if e <= s1 or s >= e1
            ]
            s2, e2 = remaining[int(rng.integers(0, len(remaining)))]
            inst = Instance(id="l", tokens=[f"t{i}" for i in range(n)],
                            subj_span=(s1, e1), obj_span=(s2, e2))
            assert len(insert_markers(inst)) == n + 6


class TestFeaturize:
    def test_deterministic(self):
        a = featurize(make_instance(), DIM, seed=3)
        b = featurize(make_instance(), DIM, seed=3)
        assert np.array_equal(a.indices, b.indices)
        assert np.array_equal(a.values, b.values)

    def test_id_does_not_matter(self):
        a = featurize(make_instance(id="first"), DIM, seed=3)
        b = featurize(make_instance(id="second"), DIM, seed=3)
        assert np.array_equal(a.indices, b.indices)
        assert np.array_equal(a.values, b.values)

    def test_seed_changes_layout(self):
        a = featurize(make_instance(), DIM, seed=3)
        b = featurize(make_instance(), DIM, seed=4)
        assert not (
            np.array_equal(a.indices, b.indices) and np.array_equal(a.values, b.values)
        )

    def test_changing_any_token_changes_vector(self):
        base = featurize(make_instance(), DIM, seed=3)
        tokens = make_instance().tokens
        for i in range(len(tokens)):
            mutated = list(tokens)
            mutated[i] = "zzz_unseen"
            other = featurize(make_instance(tokens=mutated), DIM, seed=3)
            assert not (
                np.array_equal(base.indices, other.indices)
                and np.array_equal(base.values, other.values)
            )

    def test_unit_norm(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            n = int(rng.integers(3, 15))
            toks = [f"w{rng.integers(0, 40)}" for _ in range(n)]
            inst = Instance(id="n", tokens=toks, subj_span=(0, 1), obj_span=(n - 1, n))
            fv = featurize(inst, DIM, seed=9)
            np.testing.assert_allclose(np.linalg.norm(fv.values), 1.0, atol=1e-9)

    def test_indices_sorted_unique_below_dim(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            n = int(rng.integers(2, 25))
            toks = [f"w{rng.integers(0, 200)}" for _ in range(n)]
            s1 = 0
            inst = Instance(id="p", tokens=toks, subj_span=(s1, s1 + 1),
                            obj_span=(n - 1, n))
            fv = featurize(inst, DIM, seed=int(rng.integers(0, 1000)))
            assert np.all(np.diff(fv.indices) > 0)
            assert fv.indices[-1] < DIM if len(fv.indices) else True

    def test_disjoint_vocabularies_overlap_only_by_collision(self):
        a = featurize(
            Instance(id="a", tokens=["alpha", "beta", "gamma", "delta", "eps"],
                     subj_span=(0, 1), obj_span=(2, 3)),
            DIM, seed=3,
        )
        b = featurize(
            Instance(id="b", tokens=["one", "two", "three", "four", "five", "six",
                                     "seven", "eight"],
                     subj_span=(6, 8), obj_span=(1, 3)),
            DIM, seed=3,
        )
        shared = np.intersect1d(a.indices, b.indices)
        assert len(shared) < min(len(a.indices), len(b.indices))

    def test_rejects_non_power_of_two(self):
        with pytest.raises(ValueError):
            featurize(make_instance(), 3000, seed=1)

    def test_rejects_small_dim(self):
        with pytest.raises(ValueError):
            featurize(make_instance(), 512, seed=1)

    def test_featurize_all_keys_by_id(self):
        insts = [make_instance(id="x"), make_instance(id="y")]
        table = featurize_all(insts, DIM, seed=3)
        assert set(table) == {"x", "y"}
        assert isinstance(table["x"], FeatureVector)
