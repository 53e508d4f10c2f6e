"""Command-line pipeline: synth-data -> extract -> fit-kpca -> project -> train -> evaluate -> report.

Every subcommand accepts ``--config FILE`` (TOML). Keys are looked up in the
table named after the subcommand (``[train]``), then at top level; explicit
flags win over the file, the file wins over built-in defaults.

Exit codes: 0 success, 2 usage or validation error, 3 data/processing
error, 4 checkpoint or format incompatibility.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib as tomli
except ImportError:  # python < 3.11
    import tomli

from . import __version__, checkpoint, dataset, kpca, protocol
from .errors import CheckpointMismatch, EEGVerifyError
from .features import (FeatureKind, FeatureSequence, align_concat, eeg155, feature_path,
                       mfcc13, read_features, write_features)
from .filters import preprocess_eeg

log = logging.getLogger("eegverify")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_COMPAT = 0, 2, 3, 4


class UsageError(Exception):
    pass


class DataError(Exception):
    def __init__(self, message, failures=()):
        super().__init__(message)
        self.failures = list(failures)


def _write_provenance(path: Path, command: str, args: argparse.Namespace, **extra) -> None:
    cfg = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()
           if k not in ("func", "config") and not k.startswith("_")}
    doc = {"tool_version": __version__, "command": command, "config": cfg, **extra}
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _require(args, *names):
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + n.replace("_", "-") for n in missing))


def _split_subjects(manifest, split: str) -> list[str]:
    if split == "train":
        return list(manifest.train_subjects)
    if split == "test":
        return list(manifest.test_subjects)
    return list(manifest.subjects)


def _load_store(manifest, root, kind: FeatureKind, subjects) -> dict:
    store, missing = {}, []
    for s in subjects:
        for i in range(manifest.utterances_per_subject):
            if kind == FeatureKind.CONCAT43:
                a = feature_path(root, FeatureKind.MFCC13, s, i)
                b = feature_path(root, FeatureKind.EEG_KPCA30, s, i)
                if not (a.is_file() and b.is_file()):
                    missing.append(str(a if not a.is_file() else b))
                    continue
                store[(s, i)] = align_concat(read_features(a, s, i), read_features(b, s, i))
            else:
                p = feature_path(root, kind, s, i)
                if not p.is_file():
                    missing.append(str(p))
                    continue
                store[(s, i)] = read_features(p, s, i)
    if missing:
        raise DataError(f"{len(missing)} feature file(s) missing", missing)
    return store


# ---------------------------------------------------------------------------
# subcommands

def cmd_synth_data(args) -> int:
    _require(args, "out")
    spec = dataset.SynthSpec(num_subjects=args.subjects, utterances_per_subject=args.utterances,
                             channel_count=args.channels, noise_db=args.noise_db, seed=args.seed,
                             n_test=args.test_subjects)
    if spec.num_subjects < 2 or spec.utterances_per_subject < 1 or spec.channel_count < 1:
        raise UsageError("need --subjects >= 2, --utterances >= 1, --channels >= 1")
    out = Path(args.out)
    manifest = dataset.synth_dataset(spec, out)
    _write_provenance(out / "synth_config.json", "synth-data", args)
    print(f"wrote {len(manifest)} recordings to {out}", file=sys.stderr)
    return EXIT_OK


def cmd_preprocess(args) -> int:
    _require(args, "manifest", "out")
    manifest = dataset.load_manifest(args.manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    failures = []
    for (s, i) in manifest.entries:
        try:
            rec = dataset.load_recording(manifest, s, i)
            dataset.write_eeg(out / f"{s}_{i:03d}.eeg", preprocess_eeg(
                rec.eeg, f_low=args.f_low, f_high=args.f_high, order=args.order,
                notch_hz=args.notch, notch_q=args.notch_q))
        except EEGVerifyError as exc:
            failures.append(f"{manifest.paths(s, i)[1]}: {exc}")
    _write_provenance(out / "preprocess_config.json", "preprocess", args)
    if failures:
        raise DataError(f"{len(failures)} recording(s) failed", failures)
    return EXIT_OK


def cmd_extract(args) -> int:
    _require(args, "manifest", "kind", "out")
    kind = FeatureKind.parse(args.kind)
    if kind not in (FeatureKind.MFCC13, FeatureKind.EEG155):
        raise UsageError("--kind must be mfcc13 or eeg155")
    manifest = dataset.load_manifest(args.manifest)
    out_dir = Path(args.out) / kind.slug
    out_dir.mkdir(parents=True, exist_ok=True)
    failures, done = [], 0
    for (s, i) in manifest.entries:
        audio_path, eeg_path = manifest.paths(s, i)
        try:
            if kind == FeatureKind.MFCC13:
                audio, rate = dataset.read_wav(audio_path)
                if rate != dataset.AUDIO_RATE:
                    raise dataset.RateMismatch(f"audio at {rate} Hz")
                seq = mfcc13(audio, s, i)
            else:
                eeg = dataset.read_eeg(eeg_path)
                filtered = preprocess_eeg(eeg, f_low=args.f_low, f_high=args.f_high,
                                          order=args.order, notch_hz=args.notch, notch_q=args.notch_q)
                seq = eeg155(filtered, manifest.channel_count, s, i)
            write_features(feature_path(args.out, kind, s, i), seq)
            done += 1
        except (EEGVerifyError, ValueError, OSError) as exc:
            bad = audio_path if kind == FeatureKind.MFCC13 else eeg_path
            failures.append(f"{bad}: {exc}")
        if done and done % 100 == 0:
            print(f"  {done} files", file=sys.stderr)
    _write_provenance(out_dir / "_config.json", "extract", args, files=done)
    print(f"extracted {done} {kind.slug} files, {len(failures)} failure(s)", file=sys.stderr)
    if failures:
        raise DataError(f"{len(failures)} file(s) failed", failures)
    return EXIT_OK


def cmd_fit_kpca(args) -> int:
    _require(args, "manifest", "feature_root", "out")
    manifest = dataset.load_manifest(args.manifest)
    store = _load_store(manifest, args.feature_root, FeatureKind.EEG155, manifest.train_subjects)
    frames = np.vstack([seq.frames for seq in store.values()])
    model = kpca.fit(frames, k=args.components, m=args.landmarks, seed=args.seed,
                     degree=args.degree, gamma=args.gamma, coef0=args.coef0,
                     standardize=not args.no_standardize)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    kpca.save(model, out)
    csv_path = Path(args.variance_csv) if args.variance_csv else out.parent / "explained_variance.csv"
    with open(csv_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["component", "ratio", "cumulative"])
        for row in kpca.explained_variance_table(model):
            writer.writerow([row[0], repr(row[1]), repr(row[2])])
    _write_provenance(Path(str(out) + ".json"), "fit-kpca", args, training_frames=int(frames.shape[0]))
    print(f"fitted KPCA on {frames.shape[0]} frames ({model.landmarks.shape[0]} landmarks)", file=sys.stderr)
    return EXIT_OK


def cmd_project(args) -> int:
    _require(args, "manifest", "feature_root", "model")
    manifest = dataset.load_manifest(args.manifest)
    model = kpca.load(args.model)
    out_root = Path(args.out) if args.out else Path(args.feature_root)
    subjects = _split_subjects(manifest, args.split)
    store = _load_store(manifest, args.feature_root, FeatureKind.EEG155, subjects)
    (out_root / FeatureKind.EEG_KPCA30.slug).mkdir(parents=True, exist_ok=True)
    for (s, i), seq in store.items():
        reduced = FeatureSequence(model.transform(seq.frames), FeatureKind.EEG_KPCA30, s, i)
        write_features(feature_path(out_root, FeatureKind.EEG_KPCA30, s, i), reduced)
    _write_provenance(out_root / FeatureKind.EEG_KPCA30.slug / "_config.json", "project", args,
                      files=len(store))
    return EXIT_OK


def cmd_train(args) -> int:
    _require(args, "manifest", "feature_root", "out")
    manifest = dataset.load_manifest(args.manifest)
    cfg = protocol.TrainConfig(sentences_per_step=args.sentences, cell_kind=args.cell,
                               feature_kind=args.kind, epochs=args.epochs,
                               learning_rate=args.lr, grad_clip_norm=args.clip, seed=args.seed,
                               hidden=args.hidden, embed_dim=args.embed_dim,
                               exclusive_centroids=not args.no_exclusive)
    store = _load_store(manifest, args.feature_root, FeatureKind.parse(args.kind), manifest.train_subjects)
    result = protocol.train(manifest, cfg, store, progress=lambda e, loss: print(
        f"epoch {e} mean loss {loss:.4f}", file=sys.stderr))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    checkpoint.save(out, result, extra={"command": "train", "manifest": str(args.manifest)})
    loss_path = Path(args.loss_log) if args.loss_log else Path(str(out) + ".loss.csv")
    loss_path.write_text(result.loss_csv())
    return EXIT_OK


def cmd_evaluate(args) -> int:
    _require(args, "manifest", "feature_root", "checkpoint", "out")
    manifest = dataset.load_manifest(args.manifest)
    ckpt = checkpoint.load(args.checkpoint)
    store = _load_store(manifest, args.feature_root, FeatureKind.parse(ckpt.config.feature_kind),
                        manifest.test_subjects)
    report = protocol.evaluate(ckpt, manifest, store, args.sentences, dataset_tag=args.dataset)
    report.config["tool_version"] = __version__
    report.config["checkpoint"] = str(args.checkpoint)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(report.to_json())
    print(f"N={args.sentences} mean EER {report.mean_eer:.4f} over {len(report.per_step_eer)} steps",
          file=sys.stderr)
    return EXIT_OK


REPORT_FEATURES = ("mfcc13", "concat43")


def cmd_report(args) -> int:
    _require(args, "reports", "out")
    paths = []
    for item in args.reports:
        p = Path(item)
        paths.extend(sorted(p.glob("*.json")) if p.is_dir() else [p])
    table: dict[tuple[int, str], float] = {}
    used = []
    for p in paths:
        try:
            rep = protocol.EvalReport.from_json(p.read_text())
        except (KeyError, ValueError, TypeError):
            continue    # not an evaluation report
        if args.cell and rep.config.get("cell_kind") != args.cell:
            continue
        key = (int(rep.config["N"]), rep.config["feature_kind"])
        table[key] = rep.mean_eer
        used.append(str(p))
    if not used:
        raise DataError("no evaluation reports found", [str(p) for p in paths])
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["N"] + [f"{k}_eer_percent" for k in REPORT_FEATURES])
        for n in protocol.SENTENCE_GRID:
            row = [n]
            for k in REPORT_FEATURES:
                row.append("" if (n, k) not in table else f"{100 * table[(n, k)]:.2f}")
            writer.writerow(row)
    _write_provenance(Path(str(out) + ".json"), "report", args, reports=used)

    if args.loss_log:
        curve = Path(args.loss_out) if args.loss_out else out.parent / "loss_curve.csv"
        by_epoch: dict[int, list[float]] = {}
        with open(args.loss_log) as f:
            for row in csv.DictReader(f):
                by_epoch.setdefault(int(row["epoch"]), []).append(float(row["loss"]))
        with open(curve, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["epoch", "mean_loss"])
            for e in sorted(by_epoch):
                writer.writerow([e, repr(float(np.mean(by_epoch[e])))])
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser

def _filter_flags(p):
    p.add_argument("--f-low", type=float, default=0.1)
    p.add_argument("--f-high", type=float, default=70.0)
    p.add_argument("--order", type=int, default=4)
    p.add_argument("--notch", type=float, default=60.0)
    p.add_argument("--notch-q", type=float, default=30.0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eegverify", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", help="TOML file with default option values")
        p.set_defaults(func=func)
        return p

    p = add("synth-data", cmd_synth_data, "generate a synthetic speech+EEG corpus")
    p.add_argument("--subjects", type=int, default=10)
    p.add_argument("--utterances", type=int, default=90)
    p.add_argument("--channels", type=int, default=31)
    p.add_argument("--noise-db", type=float, default=40.0, help="speech SNR in dB")
    p.add_argument("--test-subjects", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")

    p = add("preprocess", cmd_preprocess, "write bandpass+notch filtered EEG files")
    p.add_argument("--manifest")
    p.add_argument("--out")
    _filter_flags(p)

    p = add("extract", cmd_extract, "compute MFCC-13 or EEG-155 feature files")
    p.add_argument("--manifest")
    p.add_argument("--kind", choices=["mfcc13", "eeg155"])
    p.add_argument("--out", help="feature root; files go to OUT/<kind>/")
    _filter_flags(p)

    p = add("fit-kpca", cmd_fit_kpca, "fit kernel PCA on training-subject EEG-155 frames")
    p.add_argument("--manifest")
    p.add_argument("--feature-root", help="feature root holding eeg155/")
    p.add_argument("--out", help="model file")
    p.add_argument("--variance-csv")
    p.add_argument("--components", type=int, default=30)
    p.add_argument("--landmarks", type=int, default=2000)
    p.add_argument("--degree", type=int, default=3)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--coef0", type=float, default=1.0)
    p.add_argument("--no-standardize", action="store_true")
    p.add_argument("--seed", type=int, default=0)

    p = add("project", cmd_project, "project EEG-155 features to EEG-KPCA-30")
    p.add_argument("--manifest")
    p.add_argument("--feature-root")
    p.add_argument("--model")
    p.add_argument("--split", choices=["train", "test", "all"], default="all")
    p.add_argument("--out", help="feature root (defaults to --feature-root)")

    p = add("train", cmd_train, "train the d-vector encoder")
    p.add_argument("--manifest")
    p.add_argument("--feature-root")
    p.add_argument("--features", "--kind", dest="kind", default="concat43",
                   choices=["mfcc13", "eeg155", "eeg_kpca30", "concat43"])
    p.add_argument("--cell", choices=["lstm", "gru"], default="lstm")
    p.add_argument("--sentences", type=int, default=3)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--clip", type=float, default=3.0)
    p.add_argument("--hidden", type=int, default=128)
    p.add_argument("--embed-dim", type=int, default=128)
    p.add_argument("--no-exclusive", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="checkpoint path")
    p.add_argument("--loss-log")

    p = add("evaluate", cmd_evaluate, "rolling enrollment/evaluation EER on the test split")
    p.add_argument("--manifest")
    p.add_argument("--feature-root")
    p.add_argument("--checkpoint")
    p.add_argument("--sentences", type=int, default=3)
    p.add_argument("--dataset", default="")
    p.add_argument("--out")

    p = add("report", cmd_report, "EER table (N x features) and loss-curve CSVs")
    p.add_argument("--reports", nargs="+", help="report JSON files or directories")
    p.add_argument("--out", help="table CSV")
    p.add_argument("--cell", choices=["lstm", "gru"], help="only reports for this cell kind")
    p.add_argument("--loss-log")
    p.add_argument("--loss-out")
    return parser


def _config_defaults(path: str, command: str, subparser: argparse.ArgumentParser) -> dict:
    with open(path, "rb") as f:
        doc = tomli.load(f)
    flat = {k: v for k, v in doc.items() if not isinstance(v, dict)}
    flat.update(doc.get(command, {}))
    known = {a.dest for a in subparser._actions}
    out = {}
    for key, value in flat.items():
        dest = key.replace("-", "_")
        if dest in known:
            out[dest] = value
    return out


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    if args.config:
        subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
        sp = subparsers.choices[args.command]
        try:
            sp.set_defaults(**_config_defaults(args.config, args.command, sp))
        except (OSError, tomli.TOMLDecodeError) as exc:
            print(f"eegverify: cannot read config {args.config}: {exc}", file=sys.stderr)
            return EXIT_USAGE
        args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"eegverify {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CheckpointMismatch as exc:
        print(f"eegverify {args.command}: incompatible: {exc}", file=sys.stderr)
        return EXIT_COMPAT
    except DataError as exc:
        print(f"eegverify {args.command}: {exc}", file=sys.stderr)
        for item in exc.failures:
            print(f"  {item}", file=sys.stderr)
        return EXIT_DATA
    except (EEGVerifyError, OSError) as exc:
        print(f"eegverify {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        # option values the library rejects (e.g. landmarks < components)
        print(f"eegverify {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
