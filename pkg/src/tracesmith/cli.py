"""Command line entry point: corpus, run, decrypt, extract, train, eval, optimize, serve, plot.

Stages exchange files through a run bundle directory. Exit codes: 0 on
success, 2 on invalid input or configuration, 1 on any other failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path
from typing import Optional

from . import SANDBOX_MARKER, ValidationError, __version__

log = logging.getLogger("tracesmith")

BUNDLE_VERSION = 1
ROOT_ENV = "TRACESMITH_ROOT"


class RunBundle:
    """Directory of stage artifacts; a VERSION file guards the layout."""

    FILES = {"config": "config.toml", "manifest": "manifest.jsonl", "trace": "trace.csv",
             "escrow": "escrow.jsonl", "report": "report.json", "features": "features.csv",
             "corpus": "corpus.toml", "restore": "restore.json"}

    def __init__(self, path, create: bool = False):
        self.path = Path(path)
        vfile = self.path / "VERSION"
        if create:
            self.path.mkdir(parents=True, exist_ok=True)
            if not vfile.exists():
                vfile.write_text(f"{BUNDLE_VERSION}\n")
        if not vfile.exists():
            raise ValidationError(f"{self.path} is not a run bundle (no VERSION file)")
        try:
            version = int(vfile.read_text().strip())
        except ValueError:
            raise ValidationError(f"{vfile}: unreadable bundle version") from None
        if version != BUNDLE_VERSION:
            raise ValidationError(f"bundle version {version} does not match supported "
                                  f"version {BUNDLE_VERSION}")

    def __getattr__(self, name):
        files = type(self).FILES
        if name in files:
            return self.path / files[name]
        raise AttributeError(name)

    @property
    def snapshot_dir(self) -> Path:
        return self.path / "snapshot"

    def need(self, name: str) -> Path:
        p = getattr(self, name)
        if not p.exists():
            raise ValidationError(f"bundle {self.path} has no {p.name}; run the earlier stage first")
        return p

    def read_report(self) -> dict:
        return json.loads(self.need("report").read_text())


def _root(args, required: bool = True) -> Optional[Path]:
    root = args.root or os.environ.get(ROOT_ENV)
    if not root:
        if required:
            raise ValidationError(f"no corpus root: pass --root or set {ROOT_ENV}")
        return None
    return Path(root)


def _dump(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=str) + "\n")


def _config(args):
    from .emulator import EmulatorConfig, load_config
    from .emulator.presets import lab_personas
    if getattr(args, "persona", None):
        presets = lab_personas()
        if args.persona not in presets:
            raise ValidationError(f"unknown persona {args.persona!r}; choose from {sorted(presets)}")
        cfg = presets[args.persona]
    elif args.config:
        cfg = load_config(args.config)
    else:
        cfg = EmulatorConfig()
    if args.seed is not None:
        cfg = cfg.with_(seed=args.seed)
    if args.clock is not None:
        cfg = cfg.with_(clock=type(cfg.clock)(**{**cfg.clock.to_dict(), "mode": args.clock}))
    return cfg


# -- stages -------------------------------------------------------------------------

def cmd_corpus(args) -> int:
    from .corpus import CorpusSpec, generate_corpus, load_corpus_spec, write_manifest
    from .config_io import save_mapping
    root = _root(args)
    root.mkdir(parents=True, exist_ok=True)
    spec = load_corpus_spec(args.spec) if args.spec else CorpusSpec.from_dict({
        "file_count": args.files,
        "size_distribution": {"min_bytes": args.min_bytes, "max_bytes": args.max_bytes,
                              "shape": "lognormal"},
        "type_mix": {"text": 0.35, "csv": 0.15, "binary-random": 0.1,
                     "binary-structured": 0.25, "already-compressed": 0.15},
        "directory_fanout": 8})
    if args.seed is not None:
        spec = CorpusSpec.from_dict({**spec.to_dict(), "seed": args.seed})
    bundle = RunBundle(args.bundle, create=True)
    manifest = generate_corpus(spec, root, force=args.force, snapshot_dir=bundle.snapshot_dir)
    write_manifest(manifest, bundle.manifest)
    save_mapping({"corpus": spec.to_dict()}, bundle.corpus)
    print(f"{len(manifest)} files, {manifest.total_bytes} bytes under {root}")
    return 0


def cmd_run(args) -> int:
    from .cipher import derive_keys
    from .corpus import open_snapshot, read_manifest, reset_corpus
    from .emulator import DiskStore, require_marker, run_workload, save_config
    from .vdev import write_trace
    cfg = _config(args)
    if args.workers is not None:
        cfg = cfg.with_(workers=args.workers)
    root = _root(args)
    require_marker(root)
    bundle = RunBundle(args.bundle, create=True)
    if args.reset:
        reset_corpus(root, open_snapshot(bundle.snapshot_dir))
    manifest = read_manifest(bundle.need("manifest"))
    store = DiskStore(root)
    keys = derive_keys(cfg.seed)
    save_config(cfg, bundle.config)
    t0 = time.perf_counter()
    res = run_workload(cfg, manifest, store, bundle.escrow, keys.victim_view())
    wall = time.perf_counter() - t0
    write_trace(res.records, bundle.trace)
    doc = {"version": BUNDLE_VERSION, "tool_version": __version__, "workload": cfg.workload,
           "class_label": cfg.class_label, "key_seed": cfg.seed, "root": str(root.resolve()),
           "records": len(res.records), "wall_s": wall,
           "campaign": res.report.to_dict() if res.report else None}
    _dump(doc, bundle.report)
    if args.export_server_key:
        Path(args.export_server_key).write_bytes(keys.server_private.export_key("PEM"))
    rep = res.report
    if rep is not None:
        print(f"{rep.files_encrypted}/{rep.files_planned} files encrypted, "
              f"{rep.files_skipped} skipped, {rep.files_failed} failed; "
              f"{rep.encryptions_per_second:.1f} encryptions/s")
    print(f"{len(res.records)} trace records -> {bundle.trace}")
    return 0


def cmd_decrypt(args) -> int:
    from Crypto.PublicKey import RSA
    from .cipher import derive_keys
    from .corpus import read_manifest, verify_corpus
    from .emulator import DiskStore, decrypt_campaign
    bundle = RunBundle(args.bundle)
    report = bundle.read_report()
    root = Path(args.root or os.environ.get(ROOT_ENV) or report["root"])
    if args.server_key:
        server_private = RSA.import_key(Path(args.server_key).read_bytes())
    else:
        server_private = derive_keys(int(report["key_seed"])).server_private
    res = decrypt_campaign(bundle.need("escrow"), server_private, DiskStore(root))
    ver = verify_corpus(root, read_manifest(bundle.need("manifest")))
    _dump({"restore": res.to_dict(), "verify": ver.to_dict()}, bundle.restore)
    print(f"{len(res.restored)} restored, {len(res.intact)} intact, {len(res.failed)} failed; "
          f"verify {'ok' if ver.ok else 'FAILED'}")
    if res.error:
        print(res.error, file=sys.stderr)
    return 0 if res.ok and ver.ok else 1


def _labels_for(cfg):
    from .features import majority_labeler
    if cfg.workload == "mixed":
        return majority_labeler(cfg.class_label, cfg.persona.label)
    return cfg.class_label


def cmd_extract(args) -> int:
    from .emulator import load_config
    from .features import WindowSpec, extract_windows, write_features
    from .vdev import parse_trace
    bundle = RunBundle(args.bundle) if args.bundle else None
    trace = Path(args.trace) if args.trace else bundle.need("trace")
    out = Path(args.out) if args.out else (bundle.features if bundle else None)
    if out is None:
        raise ValidationError("--out is required without --bundle")
    if args.label:
        label = args.label
    elif bundle is not None and bundle.config.exists():
        label = _labels_for(load_config(bundle.config))
    else:
        label = "unknown"
    spec = WindowSpec.sliding(args.window) if args.sliding else WindowSpec(args.window, args.shift)
    vecs = extract_windows(parse_trace(trace), spec, label)
    write_features(vecs, out)
    print(f"{len(vecs)} windows -> {out}")
    return 0


def _collect_features(paths) -> dict:
    from .features import read_features
    return {str(p): read_features(p) for p in paths}


def cmd_train(args) -> int:
    from .corpus import open_snapshot
    from .detect import ForestParams, KnnParams, cross_validate, save_model, train, write_metrics_csv
    from .emulator.presets import build_lab_dataset
    from .features import build_dataset, dataset_to_csv
    if args.lab:
        if not args.bundle:
            raise ValidationError("--lab needs --bundle holding a corpus snapshot")
        snap = open_snapshot(RunBundle(args.bundle).snapshot_dir)
        ds = build_lab_dataset(snap, min_windows=args.min_windows, balance=args.balance,
                               seed=args.seed or 0)
    else:
        paths = list(args.features or [])
        paths += [RunBundle(b).need("features") for b in (args.bundles or [])]
        if not paths:
            raise ValidationError("give --features, --bundles, or --lab")
        ds = build_dataset(_collect_features(paths), balance=args.balance, seed=args.seed or 0)
    if args.dataset_out:
        dataset_to_csv(ds, args.dataset_out)
    params = (ForestParams(n_trees=args.trees, max_depth=args.max_depth, seed=args.seed or 0)
              if args.kind == "forest" else KnnParams(k=args.k))
    print("class counts:", json.dumps(ds.counts(), sort_keys=True))
    if args.cv:
        cv = cross_validate(ds, args.cv, params, seed=args.seed or 0, kind=args.kind)
        print(f"{args.cv}-fold macro-F1 {cv.aggregate['macro_f1']:.4f}, "
              f"accuracy {cv.aggregate['accuracy']:.4f}")
        if args.metrics:
            write_metrics_csv(cv, args.metrics)
            _dump(cv.to_dict(), Path(args.metrics).with_suffix(".json"))
    model = train(ds, params, kind=args.kind)
    save_model(model, args.model)
    print(f"model -> {args.model}")
    return 0


def cmd_eval(args) -> int:
    import numpy as np
    from .detect import classification_report, confusion_matrix, load_model
    from .features import build_dataset
    model = load_model(args.model)
    paths = list(args.features or []) + [RunBundle(b).need("features") for b in (args.bundles or [])]
    if not paths:
        raise ValidationError("give --features or --bundles")
    vecs = [v for vs in _collect_features(paths).values() for v in vs]
    X = np.array([v.values() for v in vecs])
    truth = [v.label for v in vecs]
    pred = list(model.predict(X))
    classes = tuple(sorted(set(model.classes) | set(truth)))
    rep = classification_report(pred, truth, classes)
    rep["predicted_fraction"] = {c: pred.count(c) / len(pred) for c in classes}
    rep["confusion"] = confusion_matrix(pred, truth, classes).tolist()
    rep["classes"] = list(classes)
    if args.out:
        _dump(rep, args.out)
    print(f"macro-F1 {rep['macro_f1']:.4f} over {len(pred)} windows")
    for c, frac in rep["predicted_fraction"].items():
        print(f"  {c:28s} {frac:6.1%}")
    return 0


def cmd_optimize(args) -> int:
    from .corpus import open_snapshot
    from .detect import load_model
    from .emulator import save_config
    from .emulator.presets import LAB_KEY_SEED
    from .cipher import derive_keys
    from .features import WindowSpec
    from .mimic import EvalContext, Goal, SearchConfig, decode, run_search, write_best, write_epochs
    model = load_model(args.model)
    snap = open_snapshot(RunBundle(args.bundle).snapshot_dir)
    goal = Goal.diverge() if args.goal == "diverge" else Goal.resemble(args.target)
    if goal.kind == "resemble" and goal.target_class not in model.classes:
        raise ValidationError(f"model classes {list(model.classes)} lack {goal.target_class!r}")
    seed = args.seed or 0
    root = _root(args, required=False) if args.on_disk else None
    ctx = EvalContext(model, snap, WindowSpec(args.window), budget_s=args.budget_s,
                      keys=derive_keys(LAB_KEY_SEED), seed=seed, root=root,
                      workdir=Path(args.out) if root else None)
    scfg = SearchConfig(args.algorithm, args.population, args.generations,
                        elitism_fraction=args.elitism, seed=seed, early_stop=args.early_stop)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    res = run_search(ctx.objective(goal, with_duration=args.two_objective), scfg)
    write_epochs(res, out / "epochs.csv")
    best_cfg = ctx.config_for(res.best_genome)
    write_best(res, out / "best_genome.json", best_cfg.to_dict(), scfg)
    save_config(best_cfg, out / "best_config.toml")
    print(f"{args.algorithm}: best cost {res.best_cost:.2f} after {res.evaluations} evaluations "
          f"({ctx.misses} emulated) in {time.perf_counter() - t0:.1f}s -> {out}")
    return 0


def cmd_serve(args) -> int:
    from .c2server import serve
    serve(args.bind, args.store, args.demand, args.allow_remote)
    return 0


def cmd_plot(args) -> int:
    from . import figures
    from .features import read_features
    from .vdev import parse_trace
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    made = []
    bundle = RunBundle(args.bundle) if args.bundle else None
    if bundle is not None:
        rows = figures.scatter_rows(parse_trace(bundle.need("trace")))
        figures.write_scatter_csv(rows, out / "scatter.csv")
        figures.write_text(figures.scatter_svg(rows), out / "scatter.svg")
        made += ["scatter.csv", "scatter.svg"]
    feats = list(args.features or [])
    if bundle is not None and bundle.features.exists():
        feats.append(bundle.features)
    if feats:
        vecs = [v for p in feats for v in read_features(p)]
        figures.write_quantiles_csv(figures.feature_quantiles(vecs), out / "quantiles.csv")
        made.append("quantiles.csv")
    if args.epochs:
        curves = {}
        for item in args.epochs:
            name, sep, path = item.partition("=")
            if not sep:
                name, path = Path(item).parent.name or Path(item).stem, item
            curves[name] = figures.read_epochs(path)
        figures.write_convergence_csv(curves, out / "convergence.csv")
        figures.write_text(figures.convergence_svg(curves), out / "convergence.svg")
        made += ["convergence.csv", "convergence.svg"]
    if not made:
        raise ValidationError("nothing to plot: give --bundle, --features or --epochs")
    print("wrote " + ", ".join(made) + f" under {out}")
    return 0


# -- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tracesmith", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--root", help=f"sandbox corpus root (else ${ROOT_ENV}); "
                                  f"must contain {SANDBOX_MARKER}")
    p.add_argument("--seed", type=int, default=None, help="seed for every stochastic stage")
    p.add_argument("--clock", choices=("virtual", "real"), default=None)
    p.add_argument("--config", help="emulator config file (TOML or JSON)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("corpus", help="generate a decoy corpus and snapshot it into a bundle")
    s.add_argument("--bundle", required=True)
    s.add_argument("--spec", help="corpus spec file; otherwise --files and size flags")
    s.add_argument("--files", type=int, default=50)
    s.add_argument("--min-bytes", type=int, default=1024)
    s.add_argument("--max-bytes", type=int, default=65536)
    s.add_argument("--force", action="store_true", help="clear a non-empty root first")
    s.set_defaults(func=cmd_corpus)

    s = sub.add_parser("run", help="run a workload against the corpus root")
    s.add_argument("--bundle", required=True)
    s.add_argument("--persona", help="use a built-in lab persona instead of --config")
    s.add_argument("--workers", type=int)
    s.add_argument("--reset", action="store_true", help="restore the corpus from the snapshot first")
    s.add_argument("--export-server-key", help="write the server private key (PEM) here")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("decrypt", help="restore the corpus from the bundle's escrow and verify it")
    s.add_argument("--bundle", required=True)
    s.add_argument("--server-key", help="server private key PEM; default derives it from the run seed")
    s.set_defaults(func=cmd_decrypt)

    s = sub.add_parser("extract", help="window a trace into feature vectors")
    s.add_argument("--bundle")
    s.add_argument("--trace", help="trace CSV (native or foreign) instead of the bundle's")
    s.add_argument("--out")
    s.add_argument("--window", type=float, default=2.0)
    s.add_argument("--shift", type=float, default=None)
    s.add_argument("--sliding", action="store_true", help="sliding windows moved by one second")
    s.add_argument("--label", help="class label for every window")
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("train", help="train a detector")
    s.add_argument("--model", required=True, help="output model JSON")
    s.add_argument("--features", nargs="*")
    s.add_argument("--bundles", nargs="*")
    s.add_argument("--lab", action="store_true", help="generate the lab persona dataset")
    s.add_argument("--bundle", help="bundle whose snapshot feeds --lab")
    s.add_argument("--min-windows", type=int, default=200)
    s.add_argument("--balance", action="store_true")
    s.add_argument("--kind", choices=("forest", "knn"), default="forest")
    s.add_argument("--trees", type=int, default=100)
    s.add_argument("--max-depth", type=int, default=None)
    s.add_argument("--k", type=int, default=5)
    s.add_argument("--cv", type=int, default=0, help="run k-fold cross-validation first")
    s.add_argument("--metrics", help="CV metrics CSV")
    s.add_argument("--dataset-out", help="write the assembled dataset CSV")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="classify feature windows and report metrics")
    s.add_argument("--model", required=True)
    s.add_argument("--features", nargs="*")
    s.add_argument("--bundles", nargs="*")
    s.add_argument("--out", help="metrics JSON")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("optimize", help="search configurations against a trained model")
    s.add_argument("--model", required=True)
    s.add_argument("--bundle", required=True, help="bundle whose snapshot is the evaluation corpus")
    s.add_argument("--goal", choices=("resemble", "diverge"), default="resemble")
    s.add_argument("--target", help="class to resemble")
    s.add_argument("--algorithm", choices=("rw", "sa", "gga", "nsga2"), default="nsga2")
    s.add_argument("--population", type=int, default=20)
    s.add_argument("--generations", type=int, default=50)
    s.add_argument("--elitism", type=float, default=0.1)
    s.add_argument("--budget-s", type=float, default=300.0)
    s.add_argument("--window", type=float, default=2.0)
    s.add_argument("--early-stop", type=float, default=None)
    s.add_argument("--two-objective", action="store_true", help="add modeled duration as objective")
    s.add_argument("--on-disk", action="store_true", help="evaluate on the root instead of in memory")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_optimize)

    s = sub.add_parser("serve", help="run the loopback negotiation server")
    s.add_argument("--bind", default="127.0.0.1:4821")
    s.add_argument("--demand", type=int, default=2000)
    s.add_argument("--store", default="c2-store")
    s.add_argument("--allow-remote", action="store_true", help="permit a non-loopback bind")
    s.set_defaults(func=cmd_serve)

    s = sub.add_parser("plot", help="emit figure data (CSV) and simple SVGs")
    s.add_argument("--bundle")
    s.add_argument("--features", nargs="*")
    s.add_argument("--epochs", nargs="*", help="epochs.csv files, optionally NAME=PATH")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 1
    except Exception as exc:
        log.debug("failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
