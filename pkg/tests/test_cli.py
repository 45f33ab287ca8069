import csv
import json

import pytest

from tracesmith import SANDBOX_MARKER, __version__
from tracesmith.cli import main


def _cli(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def lab(tmp_path):
    """A corpus root plus a bundle that has been through `corpus`."""
    root, bundle = tmp_path / "root", tmp_path / "b1"
    assert _cli("--root", root, "--seed", 4, "corpus", "--bundle", bundle, "--files", 20,
                "--max-bytes", 32768) == 0
    return root, bundle


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert __version__ in capsys.readouterr().out


def test_corpus_run_decrypt(lab, capsys):
    root, bundle = lab
    assert (root / SANDBOX_MARKER).exists()
    assert _cli("--root", root, "--seed", 4, "run", "--bundle", bundle,
                "--persona", "rw-cbc-overwrite") == 0
    report = json.loads((bundle / "report.json").read_text())
    assert report["campaign"]["files_encrypted"] > 0
    assert _cli("decrypt", "--bundle", bundle) == 0
    assert "verify ok" in capsys.readouterr().out
    restore = json.loads((bundle / "restore.json").read_text())
    assert restore["verify"]["ok"] is True


def test_run_without_marker(tmp_path, capsys):
    root = tmp_path / "bare"
    root.mkdir()
    assert _cli("--root", root, "run", "--bundle", tmp_path / "b") == 2
    assert SANDBOX_MARKER in capsys.readouterr().err


def test_missing_root(tmp_path, monkeypatch, capsys):
    monkeypatch.delenv("TRACESMITH_ROOT", raising=False)
    assert _cli("run", "--bundle", tmp_path / "b") == 2
    assert "TRACESMITH_ROOT" in capsys.readouterr().err


def test_root_from_environment(lab, monkeypatch):
    root, bundle = lab
    monkeypatch.setenv("TRACESMITH_ROOT", str(root))
    assert _cli("--seed", 1, "run", "--bundle", bundle, "--persona", "benign-fileserver") == 0


def test_bundle_version_mismatch(lab, capsys):
    _, bundle = lab
    (bundle / "VERSION").write_text("99\n")
    assert _cli("decrypt", "--bundle", bundle) == 2
    assert "version" in capsys.readouterr().err


def test_plot_scatter_rows_match_trace(lab, tmp_path):
    root, bundle = lab
    assert _cli("--root", root, "--seed", 2, "run", "--bundle", bundle,
                "--persona", "rw-ctr-intermittent") == 0
    assert _cli("extract", "--bundle", bundle) == 0
    out = tmp_path / "fig"
    assert _cli("plot", "--bundle", bundle, "--out", out) == 0
    with open(bundle / "trace.csv") as fh:
        n_trace = sum(1 for _ in csv.reader(fh)) - 1
    with open(out / "scatter.csv") as fh:
        n_rows = sum(1 for _ in csv.reader(fh)) - 1
    assert n_rows == n_trace == json.loads((bundle / "report.json").read_text())["records"]
    assert (out / "scatter.svg").read_text().startswith("<svg")
    assert (out / "quantiles.csv").exists()


def test_seeded_runs_are_byte_reproducible(lab, tmp_path):
    root, bundle = lab
    traces = []
    for name in ("r1", "r2"):
        b = tmp_path / name
        b.mkdir()
        for f in ("VERSION", "manifest.jsonl"):
            (b / f).write_bytes((bundle / f).read_bytes())
        (b / "snapshot").symlink_to(bundle / "snapshot")
        assert _cli("--root", root, "--seed", 5, "run", "--bundle", b, "--reset",
                    "--persona", "rw-shuffle-burst") == 0
        traces.append((b / "trace.csv").read_bytes())
    assert traces[0] == traces[1]


def test_extract_train_eval_optimize(lab, tmp_path, capsys):
    root, bundle = lab
    model = tmp_path / "model.json"
    assert _cli("--seed", 0, "train", "--lab", "--bundle", bundle, "--min-windows", 30,
                "--trees", 10, "--model", model, "--cv", 3, "--metrics", tmp_path / "cv.csv",
                "--dataset-out", tmp_path / "ds.csv") == 0
    assert (tmp_path / "cv.csv").exists() and model.exists()
    feats = tmp_path / "ds.csv"
    assert _cli("eval", "--model", model, "--features", feats, "--out", tmp_path / "ev.json") == 0
    ev = json.loads((tmp_path / "ev.json").read_text())
    assert ev["macro_f1"] > 0.8
    out = tmp_path / "opt"
    assert _cli("--seed", 1, "optimize", "--model", model, "--bundle", bundle, "--target",
                "benign-fileserver", "--population", 4, "--generations", 2, "--budget-s", 30,
                "--out", out) == 0
    epochs = (out / "epochs.csv").read_text().splitlines()
    assert len(epochs) == 3
    assert json.loads((out / "best_genome.json").read_text())["algorithm"] == "nsga2"
    assert (out / "best_config.toml").exists()
    assert _cli("plot", "--epochs", f"nsga2={out / 'epochs.csv'}", "--out", tmp_path / "p") == 0
    assert (tmp_path / "p" / "convergence.csv").exists()
    assert _cli("optimize", "--model", model, "--bundle", bundle, "--target", "nope",
                "--out", out) == 2


def test_extract_requires_out(tmp_path):
    assert _cli("extract", "--trace", tmp_path / "t.csv") == 2


def test_plot_needs_input(tmp_path):
    assert _cli("plot", "--out", tmp_path / "o") == 2
