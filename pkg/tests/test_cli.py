import csv
import os

import numpy as np
import pytest

from dsgnn.cli import main
from dsgnn.data import load_dataset
from dsgnn.training import make_windows


CONFIG = """
tau = 3
d = 4
n_dyn = 2
n_sta = 2
epochs = 1
batch = 8
lr = 0.01
factorize_iters = 50
"""


@pytest.fixture(scope="module")
def dataset_dir(tmp_path_factory):
    out = str(tmp_path_factory.mktemp("data") / "ds")
    code = main(["generate", "--out", out, "--h", "6", "--w", "6", "--t", "40",
                 "--clusters", "2", "--seed", "0", "--station-frac", "0.3"])
    assert code == 0
    return out


@pytest.fixture(scope="module")
def config_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "tiny.cfg"
    path.write_text(CONFIG)
    return str(path)


@pytest.fixture(scope="module")
def trained_dir(tmp_path_factory, dataset_dir, config_path):
    out = str(tmp_path_factory.mktemp("run") / "out")
    code = main(["train", "--config", config_path, "--dataset", dataset_dir,
                 "--out", out])
    assert code == 0
    return out


class TestGenerate:
    def test_writes_dataset_and_label_map(self, dataset_dir):
        ds = load_dataset(dataset_dir)
        assert ds.T == 40 and ds.H == 6 and ds.W == 6
        for ext in (".txt", ".pgm", ".png"):
            assert os.path.exists(os.path.join(dataset_dir, "planted_labels" + ext))

    def test_refuses_nonempty_dir_without_force(self, dataset_dir, capsys):
        code = main(["generate", "--out", dataset_dir, "--t", "40"])
        assert code == 2
        assert "--force" in capsys.readouterr().err

    def test_force_overwrites(self, tmp_path):
        out = str(tmp_path / "ds2")
        for _ in range(2):
            code = main(["generate", "--out", out, "--h", "6", "--w", "6",
                         "--t", "20", "--clusters", "2", "--force"])
            assert code == 0

    def test_bad_cluster_count_is_usage_error(self, tmp_path, capsys):
        code = main(["generate", "--out", str(tmp_path / "x"), "--h", "2",
                     "--w", "2", "--t", "20", "--clusters", "99"])
        assert code == 2


class TestTrain:
    def test_writes_report_and_fold_artifacts(self, trained_dir):
        with open(os.path.join(trained_dir, "report.csv")) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["fold", "mae"]
        assert rows[-1][0] == "mean"
        assert float(rows[-1][1]) >= 0
        assert os.path.exists(os.path.join(trained_dir, "summary.txt"))
        assert os.path.exists(os.path.join(trained_dir, "loss_curves.png"))
        for fold in range(5):
            assert os.path.exists(os.path.join(trained_dir, f"fold{fold}_params.npz"))
        # assignment label maps and edge weights for both views and kinds
        assert os.path.exists(os.path.join(trained_dir, "fold0_aod_static_labels.png"))
        assert os.path.exists(os.path.join(trained_dir, "fold0_met_dynamic_edge_weights.csv"))

    def test_missing_config_is_usage_error(self, dataset_dir, tmp_path, capsys):
        code = main(["train", "--config", "/no/such.cfg", "--dataset", dataset_dir,
                     "--out", str(tmp_path / "o")])
        assert code == 2

    def test_missing_dataset_is_usage_error(self, config_path, tmp_path):
        code = main(["train", "--config", config_path, "--dataset",
                     str(tmp_path / "nope"), "--out", str(tmp_path / "o")])
        assert code == 2


class TestEstimate:
    def test_writes_heatmap_files(self, trained_dir, dataset_dir, tmp_path):
        params = os.path.join(trained_dir, "fold0_params.npz")
        t = make_windows(40, 3).test[0]
        base = str(tmp_path / "est")
        code = main(["estimate", "--params", params, "--dataset", dataset_dir,
                     "--time", str(t), "--out", base])
        assert code == 0
        for ext in (".csv", ".pgm", ".png"):
            assert os.path.exists(base + ext)
        with open(base + ".csv") as fh:
            rows = list(csv.reader(fh))
        assert len(rows) == 6 and len(rows[0]) == 6

    def test_non_test_time_rejected(self, trained_dir, dataset_dir, tmp_path, capsys):
        params = os.path.join(trained_dir, "fold0_params.npz")
        code = main(["estimate", "--params", params, "--dataset", dataset_dir,
                     "--time", "5", "--out", str(tmp_path / "e")])
        assert code == 2
        assert "test-split" in capsys.readouterr().err

    def test_unknown_channel_rejected(self, trained_dir, dataset_dir, tmp_path):
        params = os.path.join(trained_dir, "fold0_params.npz")
        t = make_windows(40, 3).test[0]
        code = main(["estimate", "--params", params, "--dataset", dataset_dir,
                     "--time", str(t), "--out", str(tmp_path / "e"),
                     "--channel", "XYZ"])
        assert code == 2

    def test_missing_params_rejected(self, dataset_dir, tmp_path):
        code = main(["estimate", "--params", str(tmp_path / "no.npz"),
                     "--dataset", dataset_dir, "--time", "30",
                     "--out", str(tmp_path / "e")])
        assert code == 2


class TestAblate:
    def test_writes_comparison_table(self, dataset_dir, config_path, tmp_path):
        out = str(tmp_path / "ablation")
        code = main(["ablate", "--config", config_path, "--dataset", dataset_dir,
                     "--variants", "full,DSGNN-C", "--out", out])
        assert code == 0
        with open(os.path.join(out, "ablation.csv")) as fh:
            rows = list(csv.reader(fh))
        assert [r[0] for r in rows[1:]] == ["full", "DSGNN-C"]
        assert os.path.exists(os.path.join(out, "ablation.png"))

    def test_unknown_variant_is_usage_error(self, dataset_dir, config_path, tmp_path):
        code = main(["ablate", "--config", config_path, "--dataset", dataset_dir,
                     "--variants", "full,DSGNN-XX", "--out", str(tmp_path / "a")])
        assert code == 2

    def test_empty_variant_list_is_usage_error(self, dataset_dir, config_path, tmp_path):
        code = main(["ablate", "--config", config_path, "--dataset", dataset_dir,
                     "--variants", ",", "--out", str(tmp_path / "a")])
        assert code == 2
