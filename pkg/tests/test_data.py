import numpy as np
import pytest

from domainalign.data import (
    DomainDataset,
    FeatureRecord,
    ParseError,
    SplitError,
    SynthConfig,
    generate_synthetic,
    load_feature_file,
    split_train_test,
    write_feature_file,
)
from domainalign.numerics import make_rng


def small_cfg(**kw):
    base = dict(num_classes=4, samples_per_class_per_domain=6, input_dim=5, seed=11)
    base.update(kw)
    return SynthConfig(**base)


class TestGenerateSynthetic:
    def test_zero_gap_domains_coincide(self):
        cfg = small_cfg(domain_rotation_strength=0.0, domain_bias_scale=0.0,
                        noise_sigma=0.0)
        ds_a, ds_b = generate_synthetic(cfg)
        np.testing.assert_array_equal(ds_a.features, ds_b.features)

    def test_zero_noise_perfect_nearest_prototype(self):
        cfg = small_cfg(noise_sigma=0.0, prototype_separation=5.0)
        for ds in generate_synthetic(cfg):
            labels = np.array(ds.labels)
            protos = np.stack([
                ds.features[labels == c].mean(axis=0)
                for c in range(cfg.num_classes)])
            d = np.linalg.norm(ds.features[:, None] - protos[None], axis=2)
            assert (np.argmin(d, axis=1) == labels).all()

    def test_deterministic(self):
        a1, b1 = generate_synthetic(small_cfg())
        a2, b2 = generate_synthetic(small_cfg())
        np.testing.assert_array_equal(a1.features, a2.features)
        np.testing.assert_array_equal(b1.features, b2.features)

    def test_default_config_has_cross_domain_gap(self):
        # oracle: raw-feature retrieval, within-domain vs cross-domain
        from domainalign.retrieval import evaluate_direction

        ds_a, ds_b = generate_synthetic(SynthConfig())
        fa = ds_a.features / np.linalg.norm(ds_a.features, axis=1, keepdims=True)
        fb = ds_b.features / np.linalg.norm(ds_b.features, axis=1, keepdims=True)
        la, lb = np.array(ds_a.labels), np.array(ds_b.labels)
        cross = evaluate_direction(fa, la, fb, ds_b.ids, lb).map_all
        within = evaluate_direction(fb, lb, fb, ds_b.ids, lb).map_all
        assert cross < within

    def test_labels_in_range_and_counts(self):
        cfg = small_cfg()
        ds_a, ds_b = generate_synthetic(cfg)
        n = cfg.num_classes * cfg.samples_per_class_per_domain
        assert len(ds_a) == len(ds_b) == n
        for ds in (ds_a, ds_b):
            assert set(ds.labels) == set(range(cfg.num_classes))

    def test_bad_config(self):
        with pytest.raises(Exception):
            small_cfg(noise_sigma=-1.0).validate()


class TestSplit:
    def test_eighty_twenty_per_class(self):
        ds_a, _ = generate_synthetic(small_cfg(samples_per_class_per_domain=10))
        train, test = split_train_test(ds_a, 0.8, seed=0)
        for c in range(4):
            assert sum(1 for l in train.labels if l == c) == 8
            assert sum(1 for l in test.labels if l == c) == 2

    def test_rounding_floor_on_test_side(self):
        ds_a, _ = generate_synthetic(small_cfg(samples_per_class_per_domain=5))
        train, test = split_train_test(ds_a, 0.8, seed=0)
        for c in range(4):
            assert sum(1 for l in train.labels if l == c) == 4
            assert sum(1 for l in test.labels if l == c) == 1

    def test_union_and_disjointness(self):
        ds_a, _ = generate_synthetic(small_cfg())
        train, test = split_train_test(ds_a, 0.7, seed=3)
        train_ids = set(train.ids)
        test_ids = set(test.ids)
        assert train_ids | test_ids == set(ds_a.ids)
        assert not (train_ids & test_ids)

    def test_deterministic(self):
        ds_a, _ = generate_synthetic(small_cfg())
        t1 = split_train_test(ds_a, 0.8, seed=5)[0].ids
        t2 = split_train_test(ds_a, 0.8, seed=5)[0].ids
        np.testing.assert_array_equal(t1, t2)

    def test_singleton_class_rejected(self):
        ds = DomainDataset("A", (
            FeatureRecord(0, "A", np.zeros(2), 0),
            FeatureRecord(1, "A", np.ones(2), 0),
            FeatureRecord(2, "A", np.ones(2), 1),
        ))
        with pytest.raises(SplitError):
            split_train_test(ds, 0.8, seed=0)

    def test_unlabeled_split(self):
        ds = DomainDataset("A", tuple(
            FeatureRecord(i, "A", np.full(2, float(i))) for i in range(10)))
        train, test = split_train_test(ds, 0.8, seed=0)
        assert len(train) == 8 and len(test) == 2


class TestFeatureFiles:
    def _random_dataset(self, seed, with_labels=True):
        rng = make_rng(seed)
        return DomainDataset("B", tuple(
            FeatureRecord(i * 3, "B", rng.standard_normal(4),
                          int(i % 3) if with_labels else None)
            for i in range(7)))

    @pytest.mark.parametrize("binary", [False, True])
    @pytest.mark.parametrize("with_labels", [False, True])
    def test_round_trip_bitwise(self, tmp_path, binary, with_labels):
        ds = self._random_dataset(9, with_labels)
        path = tmp_path / "f.feat"
        write_feature_file(path, ds, binary=binary)
        back = load_feature_file(path)
        np.testing.assert_array_equal(back.features, ds.features)
        np.testing.assert_array_equal(back.ids, ds.ids)
        assert back.labels == ds.labels
        assert back.domain == ds.domain

    def test_minimal_text_file(self, tmp_path):
        path = tmp_path / "f.feat"
        path.write_text("2 3\n0 A - 1.0 2.0 3.0\n1 A 4 0.5 0.5 0.5\n")
        ds = load_feature_file(path)
        assert len(ds) == 2 and ds.dim == 3
        assert ds.labels == [None, 4]

    def test_ragged_row_names_line(self, tmp_path):
        path = tmp_path / "f.feat"
        path.write_text("2 3\n0 A - 1.0 2.0 3.0\n1 A - 0.5 0.5\n")
        with pytest.raises(ParseError, match=":3:"):
            load_feature_file(path)

    def test_non_finite_rejected(self, tmp_path):
        path = tmp_path / "f.feat"
        path.write_text("1 2\n0 A - nan 1.0\n")
        with pytest.raises(ParseError):
            load_feature_file(path)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "f.feat"
        path.write_text("hello\n")
        with pytest.raises(ParseError, match=":1:"):
            load_feature_file(path)


def test_label_stripped_view():
    ds_a, _ = generate_synthetic(small_cfg())
    view = ds_a.without_labels()
    assert all(l is None for l in view.labels)
    np.testing.assert_array_equal(view.features, ds_a.features)
    # original is untouched
    assert all(l is not None for l in ds_a.labels)
