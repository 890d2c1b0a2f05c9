import json

import pytest

from pllkit.cli import main


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data = root / "data.csv"
    rc = main(["gen-data", "--subjects", "1", "--segments", "2", "--separation", "1.0",
               "--noise", "0.1", "--feature-len", "20", "--seed", "0",
               "--out", str(data)])
    assert rc == 0
    labels = root / "labels.csv"
    rc = main(["gen-labels", "--mode", "uniform", "--q", "0.4",
               "--data", str(data), "--seed", "1", "--out", str(labels)])
    assert rc == 0
    return root, data, labels


class TestGenData:
    def test_writes_csv_and_meta(self, workspace):
        root, data, _ = workspace
        header = data.read_text().splitlines()[0]
        assert header.startswith("subject,session,trial,segment,label,f000")
        meta = (root / "data.csv.meta").read_text()
        assert "seed=0" in meta and "segments_per_trial=2" in meta


class TestGenLabels:
    def test_similarity_mode_default_wheel(self, workspace, tmp_path):
        _, data, _ = workspace
        out = tmp_path / "sim.csv"
        rc = main(["gen-labels", "--mode", "similarity", "--data", str(data),
                   "--seed", "2", "--out", str(out)])
        assert rc == 0
        assert "similarity:wheel=" in out.read_text().splitlines()[1]

    def test_uniform_requires_q(self, workspace, tmp_path, capsys):
        _, data, _ = workspace
        rc = main(["gen-labels", "--mode", "uniform", "--data", str(data),
                   "--seed", "0", "--out", str(tmp_path / "x.csv")])
        assert rc == 2


class TestTrain:
    def test_byte_identical_reruns(self, workspace, tmp_path):
        _, data, labels = workspace
        args = ["train", "--method", "proden", "--ld", "--data", str(data),
                "--labels", str(labels), "--subject", "0", "--fold", "1",
                "--seed", "7", "--epochs", "2"]
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert main(args + ["--out", str(out_a)]) == 0
        assert main(args + ["--out", str(out_b)]) == 0
        assert (out_a / "result.json").read_bytes() == (out_b / "result.json").read_bytes()

    def test_supervised_without_labels(self, workspace, tmp_path):
        _, data, _ = workspace
        out = tmp_path / "sup"
        rc = main(["train", "--method", "supervised", "--data", str(data),
                   "--seed", "0", "--epochs", "2", "--out", str(out)])
        assert rc == 0
        result = json.loads((out / "result.json").read_text())
        assert 0.0 <= result["accuracy"] <= 100.0
        assert result["config"]["scheduler"] == "none"

    def test_non_supervised_needs_labels(self, workspace, tmp_path):
        _, data, _ = workspace
        rc = main(["train", "--method", "dnpl", "--data", str(data),
                   "--out", str(tmp_path / "x")])
        assert rc == 2

    def test_diagnostics_flag(self, workspace, tmp_path):
        _, data, labels = workspace
        diag = tmp_path / "diag.csv"
        rc = main(["train", "--method", "cavl", "--ld", "--data", str(data),
                   "--labels", str(labels), "--epochs", "1",
                   "--diag-out", str(diag), "--out", str(tmp_path / "out")])
        assert rc == 0
        assert diag.read_text().startswith("epoch,batch,loss")


class TestGridAndReport:
    def test_grid_then_report(self, workspace, tmp_path):
        _, data, _ = workspace
        cfg = tmp_path / "grid.cfg"
        cfg.write_text("methods = dnpl\nseeds = 0\nq = 0.4\nld = off\n"
                       "subjects = 0\nfolds = 1\nepochs = 2\n")
        grid_out = tmp_path / "grid-out"
        assert main(["grid", "--config", str(cfg), "--data", str(data),
                     "--out", str(grid_out)]) == 0
        assert (grid_out / "runs.csv").exists()
        assert (grid_out / "results.txt").exists()

        rep_out = tmp_path / "report-out"
        assert main(["report", "--in", str(grid_out), "--out", str(rep_out),
                     "--with-paper-reference"]) == 0
        text = (rep_out / "results.txt").read_text()
        assert "NOT-REPRODUCIBLE-AT-DESK-SCALE" in text
        assert (rep_out / "reference.csv").exists()

    def test_report_without_runs_fails(self, tmp_path):
        assert main(["report", "--in", str(tmp_path), "--out", str(tmp_path)]) == 2


class TestGradcheckCli:
    def test_passes_for_dnpl(self, capsys):
        rc = main(["gradcheck", "--method", "dnpl", "--eps", "1e-4",
                   "--samples", "2", "--seed", "0"])
        captured = capsys.readouterr()
        assert rc == 0
        assert "max relative error" in captured.out
