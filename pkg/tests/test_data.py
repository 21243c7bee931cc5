import numpy as np
import pytest

from fairsearch import data, nncore
from fairsearch.data import AttributeSpec, DatasetSchema, Instance
from fairsearch.errors import ConfigError, DataError, NumericError, SchemaError

from conftest import random_net


def write_csv(path, header, rows):
    lines = [",".join(header)] + [",".join(str(x) for x in r) for r in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


class TestSchema:
    def test_exactly_one_label_required(self):
        with pytest.raises(SchemaError):
            DatasetSchema([AttributeSpec("a", "nonsensitive", lo=0, hi=1)])

    def test_label_must_be_binary(self):
        with pytest.raises(SchemaError):
            DatasetSchema(
                [
                    AttributeSpec("a", "sensitive", lo=0, hi=1),
                    AttributeSpec("y", "label", values=("x", "y", "z")),
                ]
            )

    def test_sensitive_grid_order_and_values(self, tiny_schema):
        grid = tiny_schema.sensitive_grid()
        np.testing.assert_allclose(grid, [[0.0], [0.5], [1.0]])

    def test_json_round_trip(self, tiny_schema, tmp_path):
        path = tmp_path / "schema.json"
        data.save_schema(tiny_schema, path)
        loaded = data.load_schema(path)
        assert loaded.to_dict() == tiny_schema.to_dict()

    def test_builtin_schemas_load(self):
        for name in ("adult", "german_credit", "bank_marketing", "compas"):
            schema = data.builtin_schema(name)
            assert schema.label_attribute.size == 2
            assert len(schema.sensitive_indices) >= 1

    def test_builtin_sensitive_domains_match_reference(self):
        german = data.builtin_schema("german_credit")
        assert [a.size for a in german.sensitive_attributes] == [2, 51]
        adult = data.builtin_schema("adult")
        assert sorted(a.size for a in adult.sensitive_attributes) == [2, 5, 71]
        bank = data.builtin_schema("bank_marketing")
        assert [a.size for a in bank.sensitive_attributes] == [77]
        compas = data.builtin_schema("compas")
        assert sorted(a.size for a in compas.sensitive_attributes) == [2, 6, 71]


class TestLoadDataset:
    def test_minmax_endpoints(self, tmp_path):
        schema = DatasetSchema(
            [
                AttributeSpec("x", "nonsensitive", lo=0, hi=10),
                AttributeSpec("s", "sensitive", values=("a", "b")),
                AttributeSpec("y", "label", values=("n", "p")),
            ]
        )
        path = write_csv(tmp_path / "d.csv", ["x", "s", "y"], [[0, "a", "n"], [10, "b", "p"]])
        rows = data.load_dataset(path, schema)
        assert rows[0].features[0] == 0.0 and rows[1].features[0] == 1.0
        assert rows[0].features[1] == 0.0 and rows[1].features[1] == 1.0
        assert rows[0].label == 0.0 and rows[1].label == 1.0

    def test_unknown_categorical_names_row_and_column(self, tmp_path, tiny_schema):
        path = write_csv(
            tmp_path / "d.csv", ["x0", "grp", "x1", "y"], [[1, "a", 0, "no"], [2, "zz", 0, "yes"]]
        )
        with pytest.raises(DataError, match=r"row 2.*grp.*zz"):
            data.load_dataset(path, tiny_schema)

    def test_out_of_range_numeric_names_row(self, tmp_path, tiny_schema):
        path = write_csv(tmp_path / "d.csv", ["x0", "grp", "x1", "y"], [[99, "a", 0, "no"]])
        with pytest.raises(DataError, match="row 1"):
            data.load_dataset(path, tiny_schema)

    def test_missing_column_is_schema_error(self, tmp_path, tiny_schema):
        path = write_csv(tmp_path / "d.csv", ["x0", "grp", "y"], [[1, "a", "no"]])
        with pytest.raises(SchemaError, match="x1"):
            data.load_dataset(path, tiny_schema)

    def test_round_trip_through_denormalize(self, tmp_path, tiny_schema):
        path = write_csv(
            tmp_path / "d.csv",
            ["x0", "grp", "x1", "y"],
            [[3, "b", -2, "yes"], [7, "c", 5, "no"]],
        )
        rows = data.load_dataset(path, tiny_schema)
        X = np.stack([r.features for r in rows])
        raw = tiny_schema.denormalize_rows(X)
        assert raw[0] == ["3", "b", "-2"]
        assert raw[1] == ["7", "c", "5"]


class TestSimilarCounterparts:
    def test_single_sensitive_enumeration(self, tiny_schema):
        v = np.array([0.5, 0.5, 0.25])  # grp == "b"
        cps = data.similar_counterparts(v, tiny_schema, cap=100)
        assert cps.shape == (3, 3)
        np.testing.assert_allclose(cps[:, 1], [0.0, 0.5, 1.0])
        for col in (0, 2):
            assert (cps[:, col] == v[col]).all()

    def test_two_sensitive_product(self):
        schema = DatasetSchema(
            [
                AttributeSpec("g", "sensitive", values=("f", "m")),
                AttributeSpec("x", "nonsensitive", lo=0, hi=1),
                AttributeSpec("r", "sensitive", values=tuple("abcde")),
                AttributeSpec("y", "label", values=("n", "p")),
            ]
        )
        cps = data.similar_counterparts(np.array([0.0, 0.3, 0.25]), schema, cap=100)
        assert cps.shape[0] == 10  # 2 * 5
        assert len({tuple(r) for r in map(tuple, cps)}) == 10

    def test_cap_binds_with_big_product(self, rng):
        schema = DatasetSchema(
            [
                AttributeSpec("g", "sensitive", values=("f", "m")),
                AttributeSpec("age", "sensitive", lo=0, hi=70),
                AttributeSpec("r", "sensitive", values=tuple("abcde")),
                AttributeSpec("x", "nonsensitive", lo=0, hi=1),
                AttributeSpec("y", "label", values=("n", "p")),
            ]
        )
        assert schema.sensitive_product_size == 710
        v = np.array([1.0, 10 / 70, 0.5, 0.7])
        cps = data.similar_counterparts(v, schema, cap=256, rng=rng)
        assert cps.shape[0] == 256
        assert len({tuple(r) for r in map(tuple, cps)}) == 256
        np.testing.assert_array_equal(cps[0], v)
        # non-sensitive coordinate untouched
        assert (cps[:, 3] == 0.7).all()

    def test_sampled_counterparts_decode_to_domain(self, rng):
        schema = DatasetSchema(
            [
                AttributeSpec("age", "sensitive", lo=0, hi=500),
                AttributeSpec("x", "nonsensitive", lo=0, hi=1),
                AttributeSpec("y", "label", values=("n", "p")),
            ]
        )
        v = np.array([0.5, 0.2])
        cps = data.similar_counterparts(v, schema, cap=64, rng=rng)
        codes = cps[:, 0] * 500
        np.testing.assert_allclose(codes, np.round(codes), atol=1e-9)

    def test_deterministic_given_seed(self):
        schema = DatasetSchema(
            [
                AttributeSpec("age", "sensitive", lo=0, hi=1000),
                AttributeSpec("y", "label", values=("n", "p")),
            ]
        )
        v = np.array([0.25])
        a = data.similar_counterparts(v, schema, cap=16, rng=np.random.default_rng(5))
        b = data.similar_counterparts(v, schema, cap=16, rng=np.random.default_rng(5))
        np.testing.assert_array_equal(a, b)

    def test_no_sensitive_attributes_rejected(self):
        schema = DatasetSchema(
            [
                AttributeSpec("x", "nonsensitive", lo=0, hi=1),
                AttributeSpec("y", "label", values=("n", "p")),
            ]
        )
        with pytest.raises(ConfigError):
            data.similar_counterparts(np.array([0.5]), schema, cap=10)


class TestMaxDiffCounterpart:
    def test_tie_breaks_to_first(self, tiny_schema):
        net = nncore.DenseNetwork(
            [nncore.Layer(np.zeros((1, 3)), np.zeros(1), "sigmoid")]
        )  # constant 0.5
        v = np.array([0.2, 0.5, 0.6])
        cps = data.similar_counterparts(v, tiny_schema, cap=10)
        np.testing.assert_array_equal(data.max_diff_counterpart(net, v, cps), cps[0])

    def test_picks_largest_absolute_gap(self, rng, tiny_schema):
        net = random_net(rng, 3)
        v = np.array([0.2, 0.0, 0.6])
        cps = data.similar_counterparts(v, tiny_schema, cap=10)
        fv = nncore.forward(net, v)
        gaps = [abs(nncore.forward(net, c) - fv) for c in cps]
        np.testing.assert_array_equal(
            data.max_diff_counterpart(net, v, cps), cps[int(np.argmax(gaps))]
        )

    def test_single_counterpart(self, rng, tiny_schema):
        net = random_net(rng, 3)
        v = np.array([0.2, 0.0, 0.6])
        only = np.array([[0.2, 1.0, 0.6]])
        np.testing.assert_array_equal(data.max_diff_counterpart(net, v, only), only[0])

    def test_empty_rejected(self, rng, tiny_schema):
        net = random_net(rng, 3)
        with pytest.raises(ValueError):
            data.max_diff_counterpart(net, np.zeros(3), np.empty((0, 3)))


class TestClipToDomain:
    def test_clamps(self):
        np.testing.assert_allclose(
            data.clip_to_domain(np.array([-0.1, 0.5, 1.2])), [0.0, 0.5, 1.0]
        )

    def test_identity_in_range(self, rng):
        v = rng.random(6)
        np.testing.assert_array_equal(data.clip_to_domain(v), v)

    def test_nan_rejected(self):
        with pytest.raises(NumericError):
            data.clip_to_domain(np.array([np.nan, 0.5]))


def make_instances(X, labels=None):
    labels = labels if labels is not None else np.zeros(len(X))
    return [Instance(np.asarray(x, dtype=float), float(y)) for x, y in zip(X, labels)]


class TestKmeansSeeds:
    def test_two_blobs_one_seed_each(self, rng):
        # Blobs far apart relative to spread; brute-force the expected split.
        blob_a = rng.normal(0.1, 0.005, size=(30, 2))
        blob_b = rng.normal(0.9, 0.005, size=(30, 2))
        instances = make_instances(np.vstack([blob_a, blob_b]))
        seeds = data.kmeans_seeds(instances, k=2, n_seeds=2, rng=np.random.default_rng(0))
        sides = sorted(int(s.features[0] > 0.5) for s in seeds)
        assert sides == [0, 1]

    def test_k1_uniform_sample(self, rng):
        instances = make_instances(rng.random((50, 3)))
        seeds = data.kmeans_seeds(instances, k=1, n_seeds=10, rng=np.random.default_rng(1))
        assert len(seeds) == 10
        keys = {tuple(s.features) for s in seeds}
        assert len(keys) == 10

    def test_all_data_returned_when_n_seeds_is_size(self, rng):
        instances = make_instances(rng.random((20, 2)))
        seeds = data.kmeans_seeds(instances, k=4, n_seeds=20, rng=np.random.default_rng(2))
        got = sorted(map(tuple, (s.features for s in seeds)))
        want = sorted(map(tuple, (i.features for i in instances)))
        assert got == want

    def test_deterministic(self, rng):
        instances = make_instances(rng.random((40, 2)))
        a = data.kmeans_seeds(instances, 4, 10, np.random.default_rng(3))
        b = data.kmeans_seeds(instances, 4, 10, np.random.default_rng(3))
        assert [tuple(s.features) for s in a] == [tuple(s.features) for s in b]

    def test_k_larger_than_data_rejected(self, rng):
        instances = make_instances(rng.random((3, 2)))
        with pytest.raises(ConfigError):
            data.kmeans_seeds(instances, k=5, n_seeds=2, rng=np.random.default_rng(0))

    def test_n_seeds_larger_than_data_rejected(self, rng):
        instances = make_instances(rng.random((3, 2)))
        with pytest.raises(ConfigError):
            data.kmeans_seeds(instances, k=2, n_seeds=4, rng=np.random.default_rng(0))


class TestCounterpartSoundness:
    def test_only_sensitive_coordinates_change(self, rng, tiny_schema):
        for _ in range(50):
            v = rng.random(3)
            v[1] = rng.choice([0.0, 0.5, 1.0])
            cps = data.similar_counterparts(v, tiny_schema, cap=10, rng=rng)
            assert cps.shape[0] == 3
            assert (cps[:, [0, 2]] == v[[0, 2]]).all()
            assert set(np.round(cps[:, 1] * 2).astype(int)) == {0, 1, 2}
