import csv
import gzip
import json
import statistics

import numpy as np
import pytest

from pupolicy.cli import expand_grid, main
from pupolicy.config import DATA_DIR_ENV, load_config, parse_config, to_config_text
from pupolicy.data import encode_idx
from pupolicy.errors import ConfigError
from pupolicy.trainer import VARIANTS

GAUSS = """\
[dataset]
source = gaussians
n_per_class = 150
test_n_per_class = 50
d = 3
n_l = 40
rho = 0.3
split_seed = 1

[model]
classifier_hidden = 6
policy_hidden = 4

[train]
variant = {variant}
epochs = 2
batch_size = 64
pretrain_classifier_epochs = 1
pretrain_policy_epochs = 1
alpha = {alpha}
seed = 0
grid_seeds = {grid}
"""


def write_config(tmp_path, variant="biased", alpha="known", grid="", name="exp.ini"):
    path = tmp_path / name
    path.write_text(GAUSS.format(variant=variant, alpha=alpha, grid=grid))
    return path


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


def write_fake_mnist(root, n_train=200, n_test=60):
    rng = np.random.default_rng(0)
    for prefix, n in (("train", n_train), ("t10k", n_test)):
        images = rng.integers(0, 256, size=(n, 4, 4), dtype=np.uint8)
        labels = np.arange(n, dtype=np.uint8) % 10
        (root / f"{prefix}-images-idx3-ubyte.gz").write_bytes(gzip.compress(encode_idx(images)))
        (root / f"{prefix}-labels-idx1-ubyte.gz").write_bytes(gzip.compress(encode_idx(labels)))


MNIST = """\
[dataset]
source = mnist
positive_digits = 0,2,4,6,8
n_l = 20
rho = 0.3

[train]
variant = biased
epochs = 1
"""


class TestConfigParsing:
    def test_unknown_key_names_line(self):
        with pytest.raises(ConfigError, match=r"line 3, \[dataset\] colour"):
            parse_config("[dataset]\nsource = gaussians\ncolour = red\n")

    def test_unknown_section(self):
        with pytest.raises(ConfigError, match="unknown section"):
            parse_config("[extras]\nx = 1\n")

    def test_bad_value(self):
        with pytest.raises(ConfigError, match=r"\[train\] epochs"):
            parse_config("[train]\nepochs = many\n")

    def test_round_trip(self, tmp_path):
        spec = load_config(write_config(tmp_path, variant="separator", grid="3,4"))
        again = parse_config(to_config_text(spec), base_dir=spec.base_dir)
        assert again == spec

    def test_alpha_known_resolves_to_rho(self, tmp_path):
        spec = load_config(write_config(tmp_path, variant="nnpu"))
        assert spec.resolved_train().alpha == 0.3

    def test_grid_expansion(self, tmp_path):
        spec = load_config(write_config(tmp_path, grid="0,1"))
        names = [name for name, _ in expand_grid(spec)]
        assert names == [f"{v}_seed{s}" for v in VARIANTS for s in (0, 1)]


class TestGenData:
    def test_gaussian_dump(self, tmp_path):
        out = tmp_path / "data"
        assert main(["gen-data", "--config", str(write_config(tmp_path)), "--out", str(out)]) == 0
        rows = read_rows(out / "train.csv")
        assert rows[0] == ["feature_0", "feature_1", "feature_2", "s", "hidden_y"]
        assert len(rows) - 1 == 40 + 120
        assert all(len(r) == 5 for r in rows)

    def test_rerun_identical(self, tmp_path):
        cfg = str(write_config(tmp_path))
        main(["gen-data", "--config", cfg, "--out", str(tmp_path / "a")])
        main(["gen-data", "--config", cfg, "--out", str(tmp_path / "b")])
        for name in ("train.csv", "test.csv", "manifest.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_mnist_manifest(self, tmp_path, monkeypatch):
        data_dir = tmp_path / "idx"
        data_dir.mkdir()
        write_fake_mnist(data_dir)
        monkeypatch.setenv(DATA_DIR_ENV, str(data_dir))
        cfg = tmp_path / "mnist.ini"
        cfg.write_text(MNIST)
        assert main(["gen-data", "--config", str(cfg), "--out", str(tmp_path / "out")]) == 0
        manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert manifest["positive_digit_set"] == [0, 2, 4, 6, 8]

    def test_missing_idx(self, tmp_path, monkeypatch, capsys):
        monkeypatch.delenv(DATA_DIR_ENV, raising=False)
        cfg = tmp_path / "mnist.ini"
        cfg.write_text(MNIST)
        assert main(["gen-data", "--config", str(cfg), "--out", str(tmp_path / "out")]) == 1
        assert DATA_DIR_ENV in capsys.readouterr().err


class TestRun:
    def test_biased_run(self, tmp_path):
        out = tmp_path / "run"
        assert main(["run", "--config", str(write_config(tmp_path)), "--out", str(out)]) == 0
        for name in ("metrics.csv", "config.ini", "manifest.json", "classifier.pupn"):
            assert (out / name).exists()
        assert not (out / "policy.pupn").exists()

    def test_nnpu_without_alpha(self, tmp_path, capsys):
        cfg = tmp_path / "bad.ini"
        cfg.write_text(GAUSS.format(variant="nnpu", alpha="", grid="").replace("alpha = \n", ""))
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "r")]) == 2
        assert "alpha" in capsys.readouterr().err

    def test_snapshot_reproduces(self, tmp_path):
        first = tmp_path / "first"
        main(["run", "--config", str(write_config(tmp_path, variant="weighter")), "--out", str(first)])
        second = tmp_path / "second"
        main(["run", "--config", str(first / "config.ini"), "--out", str(second)])
        assert (first / "metrics.csv").read_bytes() == (second / "metrics.csv").read_bytes()

    def test_seed_override(self, tmp_path):
        cfg = str(write_config(tmp_path, variant="weighter"))
        main(["run", "--config", cfg, "--out", str(tmp_path / "a")])
        main(["run", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "7"])
        assert (tmp_path / "a" / "metrics.csv").read_bytes() != (tmp_path / "b" / "metrics.csv").read_bytes()
        assert "seed = 7" in (tmp_path / "b" / "config.ini").read_text()

    def test_grid_parallel(self, tmp_path):
        out = tmp_path / "grid"
        cfg = str(write_config(tmp_path, grid="0,1"))
        assert main(["run", "--config", cfg, "--out", str(out), "--grid", "--jobs", "2"]) == 0
        assert sorted(p.name for p in out.iterdir()) == sorted(f"{v}_seed{s}" for v in VARIANTS for s in (0, 1))


class TestReport:
    def test_single_run(self, tmp_path):
        run_dir = tmp_path / "run"
        main(["run", "--config", str(write_config(tmp_path, variant="weighter")), "--out", str(run_dir)])
        assert main(["report", str(run_dir), "--out", str(tmp_path / "rep")]) == 0
        header, row = read_rows(tmp_path / "rep" / "summary.csv")
        metrics = read_rows(run_dir / "metrics.csv")
        final = dict(zip(metrics[0], metrics[-1]))
        got = dict(zip(header, row))
        for m in ("accuracy", "roc_auc", "pr_auc", "assignment_rate"):
            assert float(got[f"{m}_mean"]) == float(final[m])
            assert got[f"{m}_std"] == ""

    def test_seed_spread_and_curve_order(self, tmp_path):
        out = tmp_path / "grid"
        main(["run", "--config", str(write_config(tmp_path, grid="0,1,2,3,4")), "--out", str(out), "--grid"])
        assert main(["report", str(out), "--out", str(tmp_path / "rep")]) == 0
        summary = {r[0]: dict(zip(read_rows(tmp_path / "rep" / "summary.csv")[0], r))
                   for r in read_rows(tmp_path / "rep" / "summary.csv")[1:]}
        finals = [float(read_rows(out / f"biased_seed{s}" / "metrics.csv")[-1][3]) for s in range(5)]
        assert summary["biased"]["n_runs"] == "5"
        assert float(summary["biased"]["accuracy_std"]) == pytest.approx(statistics.stdev(finals), abs=1e-15)
        curves = read_rows(tmp_path / "rep" / "curves.csv")
        assert curves[0] == ["epoch", "variant", "metric", "value"]
        keys = [(r[1], int(r[0])) for r in curves[1:]]
        assert keys == sorted(keys)

    def test_refuses_mixed_specs(self, tmp_path, capsys):
        a = tmp_path / "a"
        main(["run", "--config", str(write_config(tmp_path)), "--out", str(a)])
        b = tmp_path / "b"
        other = write_config(tmp_path, name="other.ini").read_text().replace("n_l = 40", "n_l = 30")
        (tmp_path / "other.ini").write_text(other)
        main(["run", "--config", str(tmp_path / "other.ini"), "--out", str(b)])
        assert main(["report", str(a), str(b), "--out", str(tmp_path / "rep")]) == 2
        assert "incompatible" in capsys.readouterr().err

    def test_no_runs(self, tmp_path):
        assert main(["report", str(tmp_path), "--out", str(tmp_path / "rep")]) == 2
