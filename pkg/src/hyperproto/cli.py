"""Command-line pipeline: one stage per invocation.

Every run writes a manifest JSON next to its outputs holding the resolved
configuration and the list of files written.  Passing that manifest back with
``--config`` reproduces the run.  Exit status is 0 on success, 1 for invalid
input (bad flags, bad config, missing files) and 2 for failures while running.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .congeal import CongealSpec, congeal_set
from .data import (
    Dataset,
    IdxError,
    load_dataset,
    make_congealed_dataset,
    read_idx,
    save_dataset,
    synth_clusters,
    synth_glyphs,
)
from .density import DensitySpec, norm_density_profile
from .evaluate import SelectionSpec, confidence, evaluate_subset, polar, select_subset
from .geometry import BallParams
from .nn import EncoderParams
from .packing import PackingSpec, ParticleSet, pack
from .plot import disk_svg, profile_svg
from .trainer import TrainConfig, hack_train

CONFIG_VERSION = 1
COMMANDS = ("pack", "congeal", "make-dataset", "train", "density", "rank", "select", "eval-select",
            "eval-robust", "plot")

logger = logging.getLogger("hyperproto")


class UsageError(Exception):
    """Invalid invocation; reported with exit status 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _ints(text: str) -> list:
    return [int(t) for t in str(text).split(",") if t.strip()]


def _floats(text: str) -> list:
    return [float(t) for t in str(text).split(",") if t.strip()]


def _num(v) -> str:
    # shortest round-trip representation keeps CSVs exact and reproducible
    return repr(float(v))


def _write_csv(path: Path, header, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def _write_text(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def read_features(paths):
    """Concatenate snapshot CSVs into (ids, features, congealed flags, file index)."""
    ids, xy, flags, source = [], [], [], []
    for k, path in enumerate(paths):
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            missing = {"instance_id", "x", "y"} - set(reader.fieldnames or ())
            if missing:
                raise UsageError(f"{path}: missing columns {sorted(missing)}")
            for row in reader:
                ids.append(int(row["instance_id"]))
                xy.append((float(row["x"]), float(row["y"])))
                flags.append(row.get("is_congealed", "0") in ("1", "true", "True"))
                source.append(k)
    if not ids:
        raise UsageError("no features found")
    if len(set(ids)) != len(ids):
        raise UsageError("feature files repeat an instance id")
    return np.asarray(ids), np.asarray(xy, dtype=float), np.asarray(flags), np.asarray(source)


def snapshot_rows(ids, features, flags):
    norm, angle = polar(features)
    return [(int(i), _num(x), _num(y), _num(n), _num(a), int(c))
            for i, (x, y), n, a, c in zip(ids, features, norm, angle, flags)]


SNAPSHOT_HEADER = ("instance_id", "x", "y", "norm", "angle", "is_congealed")


# ---------------------------------------------------------------- subcommands

def cmd_pack(a):
    spec = PackingSpec(n=a.n, r=a.r, k=a.k, margin=a.margin, lr=a.lr, epochs=a.epochs, seed=a.seed)
    ps = pack(spec, BallParams(a.c))
    out = Path(a.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    ps.save(out)
    return [out]


def cmd_make_dataset(a):
    classes = _ints(a.classes) if a.classes else None
    if a.source == "glyphs":
        ds = synth_glyphs(a.n_per_class, classes if classes is not None else range(10), seed=a.seed,
                          distortion=a.distortion, style_mix=a.style_mix)
    elif a.source == "clusters":
        centers = json.loads(a.centers)
        ds = synth_clusters(a.n, centers, _floats(a.sigmas), seed=a.seed)
    else:
        if not a.images:
            raise UsageError("--images is required for --source idx")
        ds = read_idx(a.images, a.labels)
        if classes is not None:
            if ds.labels is None:
                raise UsageError("--classes needs --labels")
            ds = ds.subset(np.flatnonzero(np.isin(ds.labels, classes)))
        if a.n_per_class:
            rng = np.random.default_rng(a.seed)
            keep = []
            for c in np.unique(ds.labels) if ds.labels is not None else [None]:
                members = ds.ids if c is None else np.flatnonzero(ds.labels == c)
                take = min(a.n_per_class, len(members))
                keep.append(np.sort(rng.choice(members, size=take, replace=False)))
            ds = ds.subset(np.sort(np.concatenate(keep)))
        ds = Dataset(ds.x, ds.labels, ds.congealed, ds.shape, ds.source, None)
    if a.m:
        if len(ds.shape) != 2:
            raise UsageError("congealed replacement needs image data")
        ds = make_congealed_dataset(ds, a.m, CongealSpec(iterations=a.congeal_iterations, seed=a.seed), a.seed)
    return save_dataset(ds, a.out)


def cmd_congeal(a):
    ds = load_dataset(a.dataset)
    if len(ds.shape) != 2:
        raise UsageError("congealing needs image data")
    res = congeal_set(ds.images(), CongealSpec(iterations=a.iterations, seed=a.seed))
    out = Path(a.out)
    aligned = Dataset(res.images.reshape(len(ds), -1), ds.labels, np.ones(len(ds), bool), ds.shape,
                      f"{ds.source} congealed", ds.origin)
    paths = save_dataset(aligned, out)
    paths.append(_write_csv(out / "params.csv", ("id", "tx", "ty", "rot", "scale"),
                            [(i, p.tx, p.ty, _num(p.rot), _num(p.scale)) for i, p in enumerate(res.params)]))
    paths.append(_write_csv(out / "objective.csv", ("sweep", "objective"),
                            [(t, _num(v)) for t, v in enumerate(res.objective)]))
    return paths


def cmd_train(a):
    ds = load_dataset(a.dataset)
    if a.cls is not None:
        ds = ds.of_class(a.cls)
    particles = ParticleSet.load(a.particles)
    snaps = _ints(a.snapshot_epochs) if a.snapshot_epochs is not None else [a.epochs]
    if any(e < 0 or e > a.epochs for e in snaps):
        raise UsageError("snapshot epochs must lie in [0, epochs]")
    cfg = TrainConfig(epochs=a.epochs, lr0=a.lr0, batch_size=a.batch_size, assign_every=a.assign_every,
                      seed=a.seed, snapshot_epochs=tuple(snaps), r_clip=a.r_clip)
    if len(ds) != particles.n:
        raise UsageError(f"dataset has {len(ds)} items but the packing has {particles.n} particles")
    res = hack_train(ds, particles, cfg, ball=particles.ball)
    out = Path(a.out)
    paths = [_write_text(out / "checkpoint.json", res.params.to_json()),
             _write_text(out / "assignment.json", res.assignment.to_json(a.epochs)),
             _write_csv(out / "loss.csv", ("epoch", "loss"), [(e, _num(v)) for e, v in enumerate(res.loss_history)])]
    for snap in res.snapshots:
        paths.append(_write_csv(out / "snapshots" / f"epoch_{snap.epoch:04d}.csv", SNAPSHOT_HEADER,
                                snapshot_rows(ds.origin, snap.features, ds.congealed)))
        paths.append(_write_text(out / "snapshots" / f"assignment_{snap.epoch:04d}.json",
                                 snap.assignment.to_json(snap.epoch)))
    return paths


def cmd_density(a):
    _, feats, _, _ = read_features(a.features)
    bins = norm_density_profile(feats, DensitySpec(k=a.k, metric=a.metric), a.portions)
    rows = [(_num(b.center), _num(b.mean_density), _num(b.variance), b.count) for b in bins]
    return [_write_csv(Path(a.out), ("bin_center", "mean_density", "variance", "count"), rows)]


def cmd_rank(a):
    if a.classifier:
        if not a.dataset:
            raise UsageError("--classifier needs --dataset")
        ds = load_dataset(a.dataset)
        params = EncoderParams.from_json(Path(a.classifier).read_text())
        ids, score = ds.origin, confidence(params, ds.x)
        order = np.lexsort((ids, -score))
    else:
        if not a.features:
            raise UsageError("rank needs --features or --classifier")
        ids, feats, _, _ = read_features(a.features)
        score, _ = polar(feats)
        order = np.lexsort((ids, score))
    rows = [(int(ids[i]), _num(score[i]), r) for r, i in enumerate(order)]
    return [_write_csv(Path(a.out), ("id", "score", "rank"), rows)]


def _select(ids, feats, source, spec):
    """Select within each feature file separately (files hold one class each)."""
    picked = []
    for k in np.unique(source):
        members = np.flatnonzero(source == k)
        picked.extend(members[select_subset(feats[members], spec)])
    return np.asarray(picked, dtype=np.intp)


def cmd_select(a):
    ids, feats, _, source = read_features(a.features)
    spec = SelectionSpec(a.fraction, a.mode, a.angular_bins)
    picked = _select(ids, feats, source, spec)
    norm, angle = polar(feats)
    rows = [(int(ids[i]), _num(norm[i]), _num(angle[i]), r) for r, i in enumerate(picked)]
    return [_write_csv(Path(a.out), ("id", "norm", "angle", "rank"), rows)]


def _train_test(a):
    train, test = load_dataset(a.train), load_dataset(a.test)
    if train.labels is None or test.labels is None:
        raise UsageError("evaluation needs labelled train and test datasets")
    ids, feats, _, source = read_features(a.features)
    pos = {int(o): i for i, o in enumerate(train.origin)}
    unknown = [int(i) for i in ids if int(i) not in pos]
    if unknown:
        raise UsageError(f"feature ids not in the training set, e.g. {unknown[:3]}")
    rows_of = np.asarray([pos[int(i)] for i in ids], dtype=np.intp)
    return train, test, rows_of, feats, source


def _mean_accuracy(train, test, rows, a):
    accs = [evaluate_subset(train, test, rows, a.epochs, a.lr, s, a.epsilon) for s in _ints(a.seeds)]
    return float(np.mean([c for c, _ in accs])), float(np.mean([v for _, v in accs]))


def cmd_eval_select(a):
    train, test, rows_of, feats, source = _train_test(a)
    report = []
    for mode in [m for m in a.modes.split(",") if m]:
        picked = rows_of[_select(None, feats, source, SelectionSpec(a.fraction, mode, a.angular_bins))]
        clean, adv = _mean_accuracy(train, test, picked, a)
        report.append((f"{mode}_{a.fraction:g}", _num(clean), _num(adv)))
    return [_write_csv(Path(a.out), ("setting", "clean_acc", "adv_acc"), report)]


def cmd_eval_robust(a):
    train, test, rows_of, feats, source = _train_test(a)
    drop = rows_of[_select(None, feats, source, SelectionSpec(a.remove, "atypical"))]
    keep = np.setdiff1d(np.arange(len(train)), drop)
    report = []
    for name, rows in (("full", np.arange(len(train))), (f"remove_atypical_{a.remove:g}", keep)):
        clean, adv = _mean_accuracy(train, test, rows, a)
        report.append((name, _num(clean), _num(adv)))
    paths = [_write_csv(Path(a.out), ("setting", "clean_acc", "adv_acc"), report)]
    if a.classifier_out:
        # the full-data classifier of the first seed, for confidence ranking
        *_, clf = evaluate_subset(train, test, np.arange(len(train)), a.epochs, a.lr, _ints(a.seeds)[0],
                                  a.epsilon, return_classifier=True)
        paths.append(_write_text(Path(a.classifier_out), clf.params.to_json()))
    return paths


def cmd_plot(a):
    if a.profile:
        with open(a.profile, newline="") as fh:
            bins = [(float(r["bin_center"]), float(r["mean_density"]), float(r["variance"]), int(r["count"]))
                    for r in csv.DictReader(fh)]
        return [_write_text(Path(a.out), profile_svg(bins, title=a.title))]
    if not a.features:
        raise UsageError("plot needs --features or --profile")
    _, feats, flags, _ = read_features(a.features)
    return [_write_text(Path(a.out), disk_svg(feats, flags, title=a.title))]


# --------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hyperproto", description="Prototypicality in the Poincare ball, one stage at a time.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)

    def command(name, func, help_text, out_help):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="RunConfig or manifest JSON supplying defaults")
        p.add_argument("--out", required=True, help=out_help)
        p.add_argument("--manifest", help="manifest path (default: next to --out)")
        p.set_defaults(func=func)
        return p

    p = command("pack", cmd_pack, "pack particles in the ball", "particles JSON")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--r", type=float, default=0.76)
    p.add_argument("--k", type=float, default=1.55)
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--margin", type=float, default=0.01)
    p.add_argument("--epochs", type=int, default=1000)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)

    p = command("make-dataset", cmd_make_dataset, "build a dataset directory", "dataset directory")
    p.add_argument("--source", choices=("glyphs", "clusters", "idx"), default="glyphs")
    p.add_argument("--images", help="IDX image file (source idx)")
    p.add_argument("--labels", help="IDX label file (source idx)")
    p.add_argument("--classes", help="comma-separated class labels to keep")
    p.add_argument("--n-per-class", type=int, default=200)
    p.add_argument("--distortion", type=float, default=1.0)
    p.add_argument("--style-mix", type=float, default=0.0, help="probability of a minority writing style")
    p.add_argument("--n", type=int, default=2000, help="sample count (source clusters)")
    p.add_argument("--centers", default="[[0, 0], [0, 0]]", help="JSON list of centres (source clusters)")
    p.add_argument("--sigmas", default="0.25,1.0", help="per-centre spreads (source clusters)")
    p.add_argument("--m", type=int, default=0, help="number of congealed replacements")
    p.add_argument("--congeal-iterations", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)

    p = command("congeal", cmd_congeal, "jointly align every image of a dataset", "output directory")
    p.add_argument("--dataset", required=True)
    p.add_argument("--iterations", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)

    p = command("train", cmd_train, "learn features on packed particles", "output directory")
    p.add_argument("--dataset", required=True)
    p.add_argument("--particles", required=True)
    p.add_argument("--class", dest="cls", type=int, help="train on one class only")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr0", type=float, default=0.1)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--assign-every", type=int, default=2)
    p.add_argument("--snapshot-epochs", help="comma-separated epochs (default: the last)")
    p.add_argument("--r-clip", type=float, default=0.76)
    p.add_argument("--seed", type=int, default=0)

    p = command("density", cmd_density, "norm/density profile of features", "density CSV")
    p.add_argument("--features", nargs="+", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--metric", choices=("hyperbolic", "euclidean"), default="hyperbolic")
    p.add_argument("--portions", type=int, default=50)

    p = command("rank", cmd_rank, "rank items by feature norm or classifier confidence", "ranks CSV")
    p.add_argument("--features", nargs="+")
    p.add_argument("--classifier", help="classifier checkpoint; ranks by confidence instead of norm")
    p.add_argument("--dataset")

    p = command("select", cmd_select, "select a subset by feature norm", "selection CSV")
    p.add_argument("--features", nargs="+", required=True, help="one file per class")
    p.add_argument("--fraction", type=float, required=True)
    p.add_argument("--mode", choices=("typical", "atypical", "atypical_diverse"), default="typical")
    p.add_argument("--angular-bins", type=int, default=8)

    for name, func, help_text in (("eval-select", cmd_eval_select, "accuracy of classifiers trained on selections"),
                                  ("eval-robust", cmd_eval_robust, "FGSM accuracy after removing atypical items")):
        p = command(name, func, help_text, "accuracy report CSV")
        p.add_argument("--train", required=True, help="training dataset directory")
        p.add_argument("--test", required=True, help="held-out dataset directory")
        p.add_argument("--features", nargs="+", required=True, help="one file per class")
        p.add_argument("--epochs", type=int, default=10)
        p.add_argument("--lr", type=float, default=0.1)
        p.add_argument("--epsilon", type=float, default=0.07)
        p.add_argument("--seeds", default="0,1,2")
        p.add_argument("--angular-bins", type=int, default=8)
        if name == "eval-select":
            p.add_argument("--fraction", type=float, default=0.1)
            p.add_argument("--modes", default="typical,atypical,atypical_diverse")
        else:
            p.add_argument("--remove", type=float, default=0.01)
            p.add_argument("--classifier-out", help="also save the full-data classifier checkpoint here")

    p = command("plot", cmd_plot, "SVG of features in the disk or of a density profile", "SVG file")
    p.add_argument("--features", nargs="+")
    p.add_argument("--profile", help="density CSV to draw instead of features")
    p.add_argument("--title", default="")
    return parser


_RUN_ONLY = {"config", "manifest", "func", "command", "verbose"}


def _config_path(argv):
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def _resolve(parser, argv):
    command = next((tok for tok in argv if tok in COMMANDS), None)
    path = _config_path(argv)
    if command is not None and path is not None:
        # config values become defaults before parsing; flags on the command line still win
        try:
            doc = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise UsageError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"config is not valid JSON: {exc}") from None
        if not isinstance(doc, dict) or doc.get("version") != CONFIG_VERSION or not isinstance(doc.get("config"), dict):
            raise UsageError("config must be a versioned RunConfig object {version, command, config}")
        if doc.get("command") != command:
            raise UsageError(f"config is for {doc.get('command')!r}, not {command!r}")
        sub = parser._subparsers._group_actions[0].choices[command]
        known = {act.dest for act in sub._actions} - {"help", "config", "manifest"}
        unknown = set(doc["config"]) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        for act in sub._actions:
            if act.dest in doc["config"]:
                act.required = False
        sub.set_defaults(**doc["config"])
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError(f"a command is required: {', '.join(COMMANDS)}\n{parser.format_usage()}")
    return args


def _manifest_path(args) -> Path:
    if args.manifest:
        return Path(args.manifest)
    out = Path(args.out)
    if out.suffix:
        return out.with_name(out.name + ".manifest.json")
    return out / "manifest.json"


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = _resolve(parser, list(sys.argv[1:] if argv is None else argv))
    except UsageError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        outputs = args.func(args)
    except (UsageError, FileNotFoundError, IdxError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except ValueError as exc:
        # constructor checks on specs and datasets: invalid input, not a crash
        sys.stderr.write(f"error: invalid input: {exc}\n")
        return 1
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        logger.exception("run failed")
        sys.stderr.write(f"error: {args.command} failed: {exc}\n")
        return 2
    config = {k: v for k, v in sorted(vars(args).items()) if k not in _RUN_ONLY}
    manifest = _manifest_path(args)
    written = [str(p) for p in outputs] + [str(manifest)]
    doc = {"version": CONFIG_VERSION, "command": args.command, "config": config,
           "seed": config.get("seed"), "outputs": written}
    _write_text(manifest, json.dumps(doc, indent=1, sort_keys=True) + "\n")
    for path in written:
        print(path)
    return 0


def main() -> None:
    sys.exit(run_cli())
