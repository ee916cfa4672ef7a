"""Command line front end.

Exit codes: 0 success, 1 usage error, 2 input error, 3 pipeline error.
"""
import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import corpus, fusion, metrics, svr
from .errors import GazeAffectError, IngestError
from .gaze_features import GazeFeatureConfig
from .ingest import (
    ModalityFeatureFile,
    parse_feature_csv,
    parse_label_csv,
    synth_corpus,
    write_feature_csv,
)
from .segmentation import align, filter_zero_valence

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_PIPELINE = 0, 1, 2, 3

log = logging.getLogger("gazeaffect")


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--window", type=float, default=3.0, help="analysis window in seconds")
    p.add_argument("--overlap", type=float, default=1.0, help="overlap between adjacent windows in seconds")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    p.add_argument("--config", type=Path, help="key=value file; command-line flags take precedence")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def _gaze_flags(p):
    g = p.add_argument_group("gaze feature settings")
    g.add_argument("--reference-point", type=float, nargs=2, default=(0.0, 0.0), metavar=("X", "Y"))
    g.add_argument("--closure-threshold", type=float, default=0.2)
    g.add_argument("--dispersion-threshold", type=float, default=0.05)
    g.add_argument("--min-fixation-duration", type=float, default=0.10)
    g.add_argument("--zone-grid", type=int, nargs=2, default=(3, 3), metavar=("ROWS", "COLS"))


def build_parser():
    common = _common()
    parser = _Parser(prog="gazeaffect", description="Continuous affect prediction from eye gaze and speech.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic corpus")
    p.add_argument("--n-recordings", type=int, default=40)
    p.add_argument("--duration", type=float, default=90.0)
    p.add_argument("--frame-rate", type=float, default=30.0)
    p.add_argument("--speech-dim", type=int, default=40)
    p.add_argument("--noise-sd", type=float, default=0.05)
    p.add_argument("--zero-valence-fraction", type=float, default=0.0)

    p = sub.add_parser("extract", parents=[common], help="31 gaze features per window for every recording")
    p.add_argument("gaze_dir", type=Path)
    _gaze_flags(p)

    p = sub.add_parser("train", parents=[common], help="train one SVR")
    p.add_argument("--features", type=Path, required=True, help="directory of feature CSVs")
    p.add_argument("--labels", type=Path, required=True, help="directory of label CSVs")
    p.add_argument("--target", choices=fusion.TARGETS, required=True)
    p.add_argument("--c", type=float, required=True)
    p.add_argument("--epsilon", type=float, default=1e-3)
    p.add_argument("--tolerance", type=float, default=1e-3)
    p.add_argument("--max-iterations", type=int, default=svr.DEFAULT_MAX_ITERATIONS)
    p.add_argument("--filter-zero-valence", action="store_true")

    p = sub.add_parser("predict", parents=[common], help="apply a trained SVR to feature CSVs")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--features", type=Path, required=True)

    p = sub.add_parser("fuse", parents=[common], help="feature concatenation or prediction averaging")
    p.add_argument("method", choices=("feature", "averaged"))
    p.add_argument("inputs", type=Path, nargs="+", help="feature or prediction directories")

    p = sub.add_parser("evaluate", parents=[common], help="Pearson r and CCC of predictions")
    p.add_argument("--predictions", type=Path, required=True)
    p.add_argument("--labels", type=Path, required=True)
    p.add_argument("--target", choices=fusion.TARGETS, required=True)
    p.add_argument("--per-recording", action="store_true")

    p = sub.add_parser("experiment", parents=[common], help="train and score all six systems")
    p.add_argument("--data", type=Path, required=True, help="corpus root with train/development/test")
    p.add_argument("--plan", type=Path, help="plan file (default: the published 14-model plan)")
    p.add_argument("--modalities", default="speech,gaze")
    _gaze_flags(p)
    parser.subcommands = dict(sub.choices)
    return parser


def _apply_config(parser, argv):
    args = parser.parse_args(argv)
    if args.config is None:
        return args
    try:
        text = args.config.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read config {args.config}: {exc}") from None
    sub = parser.subcommands[args.command]
    known = {a.dest: a for a in sub._actions}
    defaults = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        dest = key.strip().replace("-", "_")
        if not sep or dest not in known:
            raise UsageError(f"{args.config}:{lineno}: unknown setting {key.strip()!r}")
        action = known[dest]
        parts = value.split()
        conv = action.type or str
        try:
            if action.nargs in (2, "+"):
                defaults[dest] = [conv(v) for v in parts]
            elif isinstance(action, argparse._StoreTrueAction):
                defaults[dest] = value.strip().lower() in ("1", "true", "yes")
            else:
                defaults[dest] = conv(value.strip())
        except ValueError:
            raise UsageError(f"{args.config}:{lineno}: bad value for {key.strip()}") from None
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _hop(args):
    if not args.window > args.overlap >= 0:
        raise UsageError("need window > overlap >= 0")
    return args.window - args.overlap


def _gaze_config(args):
    return GazeFeatureConfig(
        reference_point=tuple(args.reference_point),
        closure_threshold=args.closure_threshold,
        dispersion_threshold=args.dispersion_threshold,
        min_fixation_duration=args.min_fixation_duration,
        zone_grid=tuple(args.zone_grid),
    )


def _csvs(directory):
    if not Path(directory).is_dir():
        raise InputError(f"not a directory: {directory}")
    return sorted(Path(directory).glob("*.csv"))


# ---------------------------------------------------------------------------
# commands

def cmd_synth(args):
    c = synth_corpus(args.seed, args.n_recordings, args.duration, args.frame_rate, args.speech_dim,
                     args.noise_sd, window=args.window, hop=_hop(args),
                     zero_valence_fraction=args.zero_valence_fraction)
    written = corpus.write_corpus(c, args.out)
    print(f"wrote {len(written)} recordings to {args.out}")


def cmd_extract(args):
    hop = _hop(args)
    if not _csvs(args.gaze_dir):
        raise InputError("no input recordings")
    feats = corpus.extract_dir(args.gaze_dir, _gaze_config(args), args.window, hop)
    for rid, f in feats.items():
        write_feature_csv(f, args.out / f"{rid}.csv")
        log.info("%s: %d segments", rid, len(f))
    print(f"extracted {len(feats)} recordings to {args.out}")


def _load_instances(feature_dir, label_dir):
    paths = _csvs(feature_dir)
    if not paths:
        raise InputError(f"no feature files in {feature_dir}")
    out = []
    for path in paths:
        label_path = Path(label_dir) / path.name
        if not label_path.exists():
            raise InputError(f"no labels for {path.stem} in {label_dir}")
        out += align(parse_feature_csv(path), parse_label_csv(label_path), recording_id=path.stem)
    return out


def cmd_train(args):
    instances = _load_instances(args.features, args.labels)
    if args.filter_zero_valence and args.target == "valence":
        instances = filter_zero_valence(instances)
    hp = svr.SvrHyperparams(args.c, args.epsilon, args.tolerance)
    model = svr.train(instances, args.target, hp, args.max_iterations)
    path = svr.save(model, args.out / "model.svr")
    meta = model.train_meta
    print(f"{meta.status}: {meta.iterations} iterations, {model.betas.size} support vectors -> {path}")


def _write_predictions(path, values):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["segment_index", "prediction"])
        for i, v in enumerate(values):
            w.writerow([i, repr(float(v))])


def _read_predictions(path):
    f = parse_feature_csv(path, "prediction")
    if f.dimension != 1:
        raise InputError(f"{path}: expected a single prediction column")
    return f.values[:, 0]


def cmd_predict(args):
    try:
        model = svr.load(args.model)
    except OSError as exc:
        raise InputError(f"cannot read model: {exc}") from None
    paths = _csvs(args.features)
    if not paths:
        raise InputError(f"no feature files in {args.features}")
    for path in paths:
        f = parse_feature_csv(path)
        _write_predictions(args.out / path.name, model.predict(f.values) if len(f) else [])
    print(f"predicted {len(paths)} recordings to {args.out}")


def cmd_fuse(args):
    if len(args.inputs) < 2:
        raise UsageError("fusion needs at least two inputs")
    names = [{p.name for p in _csvs(d)} for d in args.inputs]
    common = sorted(set.intersection(*names))
    if not common or any(n != names[0] for n in names):
        raise InputError("input directories must hold the same recordings")
    for name in common:
        if args.method == "feature":
            parts = [parse_feature_csv(d / name) for d in args.inputs]
            if len({len(p) for p in parts}) != 1:
                raise InputError(f"{name}: segment counts differ between inputs")
            columns = tuple(f"m{k}_{c}" for k, p in enumerate(parts) for c in p.columns)
            write_feature_csv(ModalityFeatureFile("fused", np.hstack([p.values for p in parts]), columns),
                              args.out / name)
        else:
            preds = [_read_predictions(d / name) for d in args.inputs]
            _write_predictions(args.out / name, fusion.averaged_prediction_fusion(preds))
    print(f"fused {len(common)} recordings to {args.out}")


def cmd_evaluate(args):
    paths = _csvs(args.predictions)
    if not paths:
        raise InputError(f"no prediction files in {args.predictions}")
    pred, truth, groups = [], [], []
    for path in paths:
        p = _read_predictions(path)
        labels = parse_label_csv(Path(args.labels) / path.name)
        t = labels.arousal if args.target == "arousal" else labels.valence
        if len(t) != len(p):
            raise InputError(f"{path.name}: {len(p)} predictions vs {len(t)} labels")
        pred.append(p)
        truth.append(t)
        groups += [path.stem] * len(p)
    pred, truth = np.concatenate(pred), np.concatenate(truth)
    rows = [("all", metrics.evaluate(pred, truth))]
    if args.per_recording:
        rows += list(metrics.evaluate_by_group(pred, truth, groups).items())
    args.out.mkdir(parents=True, exist_ok=True)
    with open(args.out / "metrics.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scope", "dimension", "r", "ccc"])
        for scope, rep in rows:
            w.writerow([scope, args.target, repr(rep.r), repr(rep.ccc)])
    r = rows[0][1]
    print(f"{args.target}: r={r.r:.4f} ccc={r.ccc:.4f}")


def cmd_experiment(args):
    try:
        plan = fusion.load_plan(args.plan) if args.plan else fusion.default_plan(
            tuple(args.modalities.split(",")), seed=args.seed)
        datasets = corpus.load_datasets(args.data, plan.modalities, _gaze_config(args), args.window, _hop(args))
        report = fusion.run_experiment(plan, datasets)
    except (GazeAffectError, OSError) as exc:
        raise _PipelineFailure(exc) from exc
    fusion.write_report(report, args.out)
    print(fusion.format_table(report))


class _PipelineFailure(Exception):
    pass


COMMANDS = {
    "synth": cmd_synth, "extract": cmd_extract, "train": cmd_train, "predict": cmd_predict,
    "fuse": cmd_fuse, "evaluate": cmd_evaluate, "experiment": cmd_experiment,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except UsageError as exc:
        print(f"gazeaffect: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InputError as exc:
        print(f"gazeaffect: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"gazeaffect: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _PipelineFailure as exc:
        cause = exc.__cause__
        print(f"gazeaffect: {type(cause).__name__}: {cause}", file=sys.stderr)
        return EXIT_PIPELINE
    except (InputError, IngestError, FileNotFoundError) as exc:
        print(f"gazeaffect: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except GazeAffectError as exc:
        print(f"gazeaffect: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
