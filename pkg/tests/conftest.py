import pytest

from tracesmith.cipher import derive_keys
from tracesmith.corpus import CorpusSpec, generate_corpus, open_snapshot


def small_spec(n=12, seed=3, kinds=None, lo=1024, hi=16384):
    return CorpusSpec.from_dict({
        "file_count": n,
        "size_distribution": {"min_bytes": lo, "max_bytes": hi, "shape": "uniform"},
        "type_mix": kinds or {"text": 0.4, "csv": 0.2, "binary-random": 0.2,
                              "binary-structured": 0.2},
        "directory_fanout": 3,
        "seed": seed,
    })


@pytest.fixture(scope="session")
def keys():
    return derive_keys(7)


@pytest.fixture
def corpus(tmp_path):
    """(root, manifest, snapshot) for a small generated corpus."""
    root = tmp_path / "root"
    root.mkdir()
    manifest = generate_corpus(small_spec(), root, snapshot_dir=tmp_path / "snap")
    return root, manifest, open_snapshot(tmp_path / "snap")


@pytest.fixture(scope="session")
def shared_snapshot(tmp_path_factory):
    base = tmp_path_factory.mktemp("shared")
    root = base / "root"
    root.mkdir()
    generate_corpus(small_spec(16, seed=11), root, snapshot_dir=base / "snap")
    return open_snapshot(base / "snap").load()


@pytest.fixture(scope="session")
def lab_model(tmp_path_factory):
    """A forest trained on a reduced lab dataset, plus the snapshot it came from."""
    from tracesmith.detect import ForestParams, train
    from tracesmith.emulator.presets import build_lab_dataset, lab_corpus_spec
    base = tmp_path_factory.mktemp("lab")
    root = base / "root"
    root.mkdir()
    generate_corpus(lab_corpus_spec(file_count=48, seed=5), root, snapshot_dir=base / "snap")
    snap = open_snapshot(base / "snap").load()
    ds = build_lab_dataset(snap, min_windows=40)
    return train(ds, ForestParams(n_trees=30, seed=0)), snap, ds


# one line per acceptance criterion, printed after the run
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
