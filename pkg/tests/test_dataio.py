"""Dataset directories and run configuration files."""
import json

import numpy as np
import pytest

from hierzsl.dataio import RunConfig, load_config, load_dataset, write_dataset
from hierzsl.errors import ConfigError, DataError
from hierzsl.hierarchy import SemanticTable
from hierzsl.projection import LayerParams


@pytest.fixture
def dataset_dir(tmp_path, rng):
    sem = SemanticTable(["a", "b", "c", "d"], rng.standard_normal((4, 3)), seen_count=3)
    labels = np.array([0, 0, 1, 1, 2, 2, 3, 3])
    feats = rng.standard_normal((8, 5))
    write_dataset(tmp_path, sem, feats, labels, test_seen=[1, 4])
    return tmp_path, sem, feats, labels


class TestDataset:
    def test_round_trip(self, dataset_dir):
        root, sem, feats, labels = dataset_dir
        ds = load_dataset(root)
        assert ds.sem.names == sem.names and ds.sem.seen_count == 3
        np.testing.assert_array_equal(ds.features, feats)
        np.testing.assert_array_equal(ds.sem.vectors, sem.vectors)
        np.testing.assert_array_equal(ds.labels, labels)
        np.testing.assert_array_equal(ds.test_seen, [1, 4])
        np.testing.assert_array_equal(ds.train_idx, [0, 2, 3, 5])
        np.testing.assert_array_equal(ds.unseen_idx, [6, 7])

    def test_missing_file(self, dataset_dir):
        root = dataset_dir[0]
        (root / "labels.txt").unlink()
        with pytest.raises(DataError, match="labels.txt"):
            load_dataset(root)

    def test_unknown_label(self, dataset_dir):
        root = dataset_dir[0]
        (root / "labels.txt").write_text("a\n" * 7 + "zz\n")
        with pytest.raises(DataError, match="'zz'"):
            load_dataset(root)

    def test_row_count_mismatch(self, dataset_dir):
        root = dataset_dir[0]
        (root / "labels.txt").write_text("a\n" * 3)
        with pytest.raises(DataError, match="3 labels but 8"):
            load_dataset(root)

    def test_overlapping_split(self, dataset_dir):
        root = dataset_dir[0]
        (root / "split.json").write_text(json.dumps({"seen": ["a", "b", "c"], "unseen": ["c"]}))
        with pytest.raises(DataError, match="overlap"):
            load_dataset(root)

    def test_semantics_rows(self, dataset_dir):
        root = dataset_dir[0]
        (root / "split.json").write_text(json.dumps({"seen": ["a", "b"], "unseen": ["d"]}))
        with pytest.raises(DataError, match="semantics.csv"):
            load_dataset(root)

    def test_non_numeric_features(self, dataset_dir):
        root = dataset_dir[0]
        (root / "features.csv").write_text("1,2,x\n")
        with pytest.raises(DataError, match="features.csv"):
            load_dataset(root)

    def test_test_seen_must_be_seen(self, dataset_dir):
        root = dataset_dir[0]
        doc = json.loads((root / "split.json").read_text())
        doc["test_seen_samples"] = [7]
        (root / "split.json").write_text(json.dumps(doc))
        with pytest.raises(DataError, match="test_seen_samples"):
            load_dataset(root)


class TestRunConfig:
    def test_round_trip(self):
        cfg = RunConfig(t=4, k=6, layer=LayerParams(alpha=0.2), class_params=LayerParams(beta=0.8), seed=3)
        assert RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg

    def test_defaults(self):
        cfg = RunConfig.from_dict({})
        assert cfg.top_k == 3 and cfg.fsl_lambda == 0.5 and cfg.class_params is None

    @pytest.mark.parametrize(
        "doc",
        [{"t": 1}, {"k": 0}, {"top_k": 0}, {"fsl_lambda": 2.0}, {"mode": "x"}, {"layer": {"alpha": 1.0}}, {"bogus": 1}],
    )
    def test_invalid(self, doc):
        with pytest.raises(ConfigError):
            RunConfig.from_dict(doc)

    def test_load_names_file(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"layer": {"beta": 0.0}}))
        with pytest.raises(ConfigError, match="c.json"):
            load_config(p)

    def test_load_bad_json(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text("{")
        with pytest.raises(DataError, match="invalid JSON"):
            load_config(p)
