import csv
import io
import subprocess
import sys

import numpy as np
import pytest

from smerf.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, build_parser, main
from smerf.io import read_matrix


def _table(text):
    return list(csv.DictReader(io.StringIO(text)))


@pytest.fixture(scope="module")
def radial_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("radial")
    assert main(["simulate", "--family", "radial", "--n", "60", "--seed", "3", "--out", str(out)]) == EXIT_OK
    return out


class TestSimulate:
    def test_radial_files(self, radial_dir):
        X = read_matrix(radial_dir / "features.csv")
        assert X.shape == (60, 20)
        assert np.all(np.linalg.norm(X, axis=1) <= 1 + 1e-12)
        Z, Q = read_matrix(radial_dir / "dist.csv"), read_matrix(radial_dir / "sim.csv")
        assert Z.shape == (60, 60) and np.array_equal(Q, 1 - Z)
        assert (radial_dir / "features.csv").read_text().startswith("x1,x2,")

    def test_same_seed_same_files(self, tmp_path):
        for sub in ("a", "b"):
            main(["simulate", "--family", "bilinear", "--n", "25", "--seed", "8", "--out", str(tmp_path / sub)])
        for name in ("features.csv", "dist.csv", "sim.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_n_one_is_error(self, tmp_path, capsys):
        assert main(["simulate", "--family", "radial", "--n", "1", "--out", str(tmp_path / "x")]) == EXIT_USAGE
        assert "n >= 2" in capsys.readouterr().err
        assert not (tmp_path / "x").exists()

    def test_unknown_family(self, tmp_path):
        assert main(["simulate", "--family", "spiral", "--n", "5", "--out", str(tmp_path)]) == EXIT_USAGE

    def test_theory_and_sbm(self, tmp_path):
        assert main(["simulate", "--family", "theory", "--n", "20", "--out", str(tmp_path / "t")]) == EXIT_OK
        assert read_matrix(tmp_path / "t" / "responses.csv").shape == (20, 1)
        assert main(["simulate", "--family", "sbm", "--n", "30", "--blocks", "3", "--out", str(tmp_path / "s")]) == EXIT_OK
        assert read_matrix(tmp_path / "s" / "features.csv").shape == (30, 3)
        assert (tmp_path / "s" / "edges.csv").read_text().startswith("source,target")

    def test_bad_probability_is_data_error(self, tmp_path):
        args = ["simulate", "--family", "sbm", "--n", "30", "--p-in", "1.5", "--out", str(tmp_path)]
        assert main(args) == EXIT_DATA


class TestTrainPredict:
    def test_default_tree_count(self):
        args = build_parser().parse_args(["train", "--features", "f", "--dist", "d", "--out", "m"])
        assert args.trees == 500

    def test_train_predict_evaluate(self, radial_dir, tmp_path, capsys):
        model = tmp_path / "m.smerf"
        rc = main(["train", "--features", str(radial_dir / "features.csv"), "--dist", str(radial_dir / "dist.csv"),
                   "--trees", "20", "--mode", "binary", "--seed", "2", "--out", str(model)])
        assert rc == EXIT_OK
        rows = {r["metric"]: float(r["value"]) for r in _table(capsys.readouterr().out)}
        assert rows["oob_rmse"] >= 0 and rows["covered_pairs"] <= rows["total_pairs"] == 60 * 59 / 2

        pred = tmp_path / "pred.csv"
        assert main(["predict", "--model", str(model), "--features", str(radial_dir / "features.csv"),
                     "--out", str(pred)]) == EXIT_OK
        P = read_matrix(pred)
        assert P.shape == (60, 60) and np.array_equal(P, P.T)

        capsys.readouterr()
        assert main(["evaluate", "--pred", str(radial_dir / "dist.csv"), "--truth", str(radial_dir / "dist.csv")]) == EXIT_OK
        rows = {r["metric"]: float(r["value"]) for r in _table(capsys.readouterr().out)}
        assert rows["rmse"] == 0.0 and rows["spearman"] == pytest.approx(1.0) and rows["map10"] == pytest.approx(1.0)

        assert main(["importance", "--model", str(model), "--features", str(radial_dir / "features.csv")]) == EXIT_OK
        imp = _table(capsys.readouterr().out)
        assert [r["feature"] for r in imp[:3]] == ["x1", "x2", "x3"]
        assert max(float(r["normalized"]) for r in imp) == 1.0

    def test_labels_reduction_matches_materialized(self, tmp_path, rng):
        X = rng.normal(size=(40, 3))
        labels = rng.integers(0, 3, size=40)
        np.savetxt(tmp_path / "X.csv", X, delimiter=",")
        (tmp_path / "labels.csv").write_text("\n".join(f"c{v}" for v in labels) + "\n")
        Z = (labels[:, None] != labels[None, :]).astype(float)
        np.savetxt(tmp_path / "Z.csv", Z, delimiter=",")
        common = ["--features", str(tmp_path / "X.csv"), "--trees", "10", "--seed", "4"]
        assert main(["train", *common, "--labels", str(tmp_path / "labels.csv"), "--reduction", "class",
                     "--out", str(tmp_path / "a.smerf")]) == EXIT_OK
        assert main(["train", *common, "--dist", str(tmp_path / "Z.csv"), "--out", str(tmp_path / "b.smerf")]) == EXIT_OK
        for tag in ("a", "b"):
            main(["predict", "--model", str(tmp_path / f"{tag}.smerf"), "--features", str(tmp_path / "X.csv"),
                  "--out", str(tmp_path / f"{tag}.csv")])
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_missing_inputs_is_usage_error(self, radial_dir, tmp_path):
        rc = main(["train", "--features", str(radial_dir / "features.csv"), "--out", str(tmp_path / "m")])
        assert rc == EXIT_USAGE
        rc = main(["train", "--features", str(radial_dir / "features.csv"), "--dist", str(radial_dir / "dist.csv"),
                   "--labels", "x.csv", "--reduction", "class", "--out", str(tmp_path / "m")])
        assert rc == EXIT_USAGE

    def test_shape_mismatch_is_data_error(self, radial_dir, tmp_path):
        np.savetxt(tmp_path / "small.csv", np.zeros((3, 3)), delimiter=",")
        rc = main(["train", "--features", str(radial_dir / "features.csv"), "--dist", str(tmp_path / "small.csv"),
                   "--out", str(tmp_path / "m")])
        assert rc == EXIT_DATA

    def test_unreadable_file(self, tmp_path):
        assert main(["predict", "--model", str(tmp_path / "none"), "--features", "x", "--out", "y"]) == EXIT_DATA

    def test_regression_reduction_stores_responses(self, tmp_path, rng):
        from smerf.io import load_model

        X = rng.uniform(size=(30, 2))
        np.savetxt(tmp_path / "X.csv", X, delimiter=",")
        np.savetxt(tmp_path / "y.csv", X[:, 0] + rng.normal(scale=0.1, size=30))
        assert main(["train", "--features", str(tmp_path / "X.csv"), "--labels", str(tmp_path / "y.csv"),
                     "--reduction", "reg", "--trees", "5", "--out", str(tmp_path / "m")]) == EXIT_OK
        assert load_model(tmp_path / "m").responses is not None

    def test_thread_count_model_bytes(self, radial_dir, tmp_path, threads_env):
        base = ["train", "--features", str(radial_dir / "features.csv"), "--dist", str(radial_dir / "dist.csv"),
                "--trees", "12", "--seed", "1"]
        blobs = []
        for k in (1, 4, 8):
            threads_env(k)
            main([*base, "--out", str(tmp_path / f"m{k}")])
            blobs.append((tmp_path / f"m{k}").read_bytes())
        assert blobs[0] == blobs[1] == blobs[2]


class TestExperiments:
    def test_tune(self, radial_dir, tmp_path, capsys):
        rc = main(["tune", "--features", str(radial_dir / "features.csv"), "--dist", str(radial_dir / "dist.csv"),
                   "--trees", "10", "--exponents", "0.5", "1", "--min-parents", "2", "4",
                   "--out", str(tmp_path / "best.smerf")])
        assert rc == EXIT_OK
        rows = _table(capsys.readouterr().out)
        assert len(rows) == 4 and (tmp_path / "best.smerf").exists()

    def test_linkpred(self, tmp_path, capsys, caplog):
        main(["simulate", "--family", "sbm", "--n", "60", "--out", str(tmp_path)])
        capsys.readouterr()
        caplog.set_level("INFO", logger="smerf")
        rc = main(["-v", "linkpred", "--edges", str(tmp_path / "edges.csv"),
                   "--attributes", str(tmp_path / "features.csv"),
                   "--tp", "0.3", "0.6", "--replicates", "2", "--trees", "10"])
        assert rc == EXIT_OK
        out = capsys.readouterr()
        rows = _table(out.out)
        assert [float(r["tp"]) for r in rows] == [0.3, 0.6]
        assert all(0 <= float(r["auc_roc_mean"]) <= 1 for r in rows)
        assert "node pairs" in caplog.text
        assert "AUC-ROC" in out.err

    def test_linkpred_bad_tp(self, tmp_path):
        main(["simulate", "--family", "sbm", "--n", "30", "--out", str(tmp_path)])
        rc = main(["linkpred", "--edges", str(tmp_path / "edges.csv"), "--attributes", str(tmp_path / "features.csv"),
                   "--tp", "1.5", "--trees", "5"])
        assert rc == EXIT_USAGE

    def test_theory_check(self, capsys, tmp_path):
        rc = main(["theory-check", "--kmin", "4", "--kmax", "6", "--trees", "20", "--test", "30",
                   "--table", str(tmp_path / "s.csv")])
        assert rc == EXIT_OK
        rows = _table((tmp_path / "s.csv").read_text())
        assert [int(r["n"]) for r in rows] == [16, 32, 64]
        assert all(float(r["s_n"]) > 0 for r in rows)


def test_console_script_entry_point():
    res = subprocess.run([sys.executable, "-m", "smerf.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "linkpred" in res.stdout
    res = subprocess.run([sys.executable, "-m", "smerf.cli", "train"], capture_output=True, text=True)
    assert res.returncode == EXIT_USAGE
