"""Command-line front end: ``tablascribe <command> ...``.

Commands: onsets, train, transcribe, evaluate, rfe, tune, synth. Every
command is deterministic given ``--seed`` (default from the
``TABLASCRIBE_SEED`` environment variable, else 0) and exits nonzero on error.
"""

import argparse
import json
import os
import sys
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .audio_io import WORKING_RATE, load_wav, to_working_rate
from .augment import STRATEGIES, AugmentConfig, apply_strategy
from .dataset import concat, track_dataset
from .dsp import DEFAULT_CONFIG
from .evaluate import (SearchSpace, format_loto_row, loto_cv, metrics,
                       params_from_dict, params_to_dict, random_search, rfe, write_confusion_csv,
                       write_curve_csv, write_json, write_search_csv)
from .features import FEATURE_NAMES, FEATURE_SET_VERSION, extract_track, segment_strokes
from .forest import ForestParams, load_model, save_model, train_forest
from .labels import CLASSES, normalize_label
from .onset import (OnsetConfig, detect_onsets, evaluate_onsets, read_annotations,
                    tune_grid, write_onsets)

SEED_ENV = "TABLASCRIBE_SEED"
DEFAULT_ALPHA_GRID = (0.02, 0.05, 0.1, 0.15, 0.2, 0.3)
DEFAULT_DELAY_GRID = (1, 2, 3, 4, 6, 8)


class CliError(Exception):
    pass


# -- manifests and corpora -------------------------------------------------

@dataclass
class ManifestEntry:
    audio_path: str
    annotation_path: Optional[str]
    tabla_set: str
    split: str


def read_manifest(path):
    """Entries of a JSON manifest; relative paths resolve against its folder."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise CliError(f"cannot read manifest {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise CliError(f"manifest {path} is not valid JSON: {exc.msg}") from exc
    base = os.path.dirname(os.path.abspath(path))
    entries = []
    for n, e in enumerate(doc.get("entries", [])):
        try:
            audio = os.path.join(base, e["audio_path"])
            ann = e.get("annotation_path")
            ann = os.path.join(base, ann) if ann else None
            tabla_set = str(e["tabla_set"])
            split = e.get("split", "train")
        except (KeyError, TypeError) as exc:
            raise CliError(f"manifest entry {n}: missing field {exc}") from exc
        if not tabla_set:
            raise CliError(f"manifest entry {n}: empty tabla_set")
        if split not in ("train", "test"):
            raise CliError(f"manifest entry {n}: split must be train or test, got {split!r}")
        for p in (audio, ann):
            if p is not None and not os.path.exists(p):
                raise CliError(f"manifest entry {n}: no such file {p}")
        entries.append(ManifestEntry(audio, ann, tabla_set, split))
    return entries


def _read_bol_map(path):
    if path is None:
        return None
    with open(path) as fh:
        return json.load(fh)


def _load_clip(path, rate):
    return to_working_rate(load_wav(path), rate)


def build_dataset(entries, split, rate, bol_map=None, keep_audio=False):
    parts = []
    for e in entries:
        if e.split != split:
            continue
        if e.annotation_path is None:
            raise CliError(f"{e.audio_path}: {split} entries need annotations")
        times, labels = read_annotations(e.annotation_path)
        if any(lab is None for lab in labels):
            raise CliError(f"{e.annotation_path}: every onset needs a label")
        labels = [normalize_label(lab, bol_map) for lab in labels]
        clip = _load_clip(e.audio_path, rate)
        track_id = os.path.splitext(os.path.basename(e.audio_path))[0]
        parts.append(track_dataset(clip, times, labels, e.tabla_set, track_id, DEFAULT_CONFIG,
                                   keep_audio))
    if not parts:
        raise CliError(f"manifest has no {split} entries")
    return concat(parts)


def _training_tracks(entries, rate):
    out = []
    for e in entries:
        if e.split == "train" and e.annotation_path is not None:
            out.append((_load_clip(e.audio_path, rate), read_annotations(e.annotation_path)[0]))
    return out


def _seed(args):
    return args.seed


def _forest_params(args):
    params = ForestParams(seed=_seed(args))
    if getattr(args, "params", None):
        with open(args.params) as fh:
            params = params_from_dict(json.load(fh), seed=_seed(args))
    if getattr(args, "n_trees", None):
        params = replace(params, n_trees=args.n_trees)
    return params


def _read_feature_list(path):
    with open(path) as fh:
        names = [line.strip() for line in fh if line.strip()]
    unknown = [n for n in names if n not in FEATURE_NAMES]
    if unknown:
        raise CliError(f"{path}: unknown feature names {unknown}")
    return names


# -- commands ----------------------------------------------------------------

def cmd_onsets(args):
    clip = _load_clip(args.audio, args.sample_rate)
    if args.tune_grid:
        if not args.annotations:
            raise CliError("--tune-grid needs --annotations")
        truth = read_annotations(args.annotations)[0]
        res = tune_grid([(clip, truth)], args.alpha_grid, args.delay_grid)
        print("alpha,delay,f_score")
        for (a, d), f in sorted(res.table.items()):
            print(f"{a:g},{d},{f:.3f}")
        print(f"best alpha={res.alpha:g} delay={res.delay} "
              f"f={res.table[(res.alpha, res.delay)]:.3f}")
        return 0
    cfg = OnsetConfig(alpha=args.alpha, delay=args.delay)
    est = detect_onsets(clip, cfg)
    if args.annotations:
        truth = read_annotations(args.annotations)[0]
        p, r, f = evaluate_onsets(est, truth, cfg.tolerance_s)
        print(f"P={p:.3f} R={r:.3f} F={f:.3f}")
    if args.out:
        write_onsets(args.out, est)
    elif not args.annotations:
        print("time_sec")
        for t in est:
            print(f"{t:.6f}")
    return 0


def cmd_train(args):
    entries = read_manifest(args.manifest)
    bol_map = _read_bol_map(args.bol_map)
    aug = AugmentConfig(strategy=args.augment)
    ds = build_dataset(entries, "train", args.sample_rate, bol_map,
                       keep_audio=args.augment.startswith("pitch"))
    if args.features:
        ds = ds.select_features(_read_feature_list(args.features))

    if args.tune:
        space = SearchSpace(n_samples=args.n_samples)
        params = random_search(ds, space, seed=_seed(args), aug=aug).best
    else:
        params = _forest_params(args)

    tracks = _training_tracks(entries, args.sample_rate)
    grid = tune_grid(tracks, DEFAULT_ALPHA_GRID, DEFAULT_DELAY_GRID)
    before = ds.counts()
    train = apply_strategy(ds, aug, seed=params.seed) if aug.strategy != "none" else ds
    model = train_forest(train.X, train.labels, params, feature_names=ds.feature_names)
    model.metadata = {
        "feature_set_version": FEATURE_SET_VERSION,
        "sample_rate": args.sample_rate,
        "onset": {"alpha": grid.alpha, "delay": grid.delay},
        "augment": aug.strategy,
        "train_counts": train.counts(),
    }
    save_model(model, args.out)

    print(f"strategy {aug.strategy}: {len(ds)} strokes -> {len(train)} training rows")
    for c in CLASSES:
        print(f"  {c:<3} {before.get(c, 0):>6} -> {train.counts().get(c, 0):>6}")
    print(f"onset config alpha={grid.alpha:g} delay={grid.delay} "
          f"(train F={grid.table[(grid.alpha, grid.delay)]:.3f})")
    order = np.argsort(-model.importances, kind="stable")
    lines = ["feature,importance"] + [f"{model.feature_names[i]},{model.importances[i]!r}"
                                      for i in order]
    imp_path = args.importances or f"{os.path.splitext(args.out)[0]}.importances.csv"
    _write_text(imp_path, "\n".join(lines) + "\n")
    print(f"wrote {args.out} and {imp_path}")
    return 0


def _check_model_features(model):
    version = model.metadata.get("feature_set_version")
    if version != FEATURE_SET_VERSION:
        raise CliError(f"model was built with feature set version {version}, "
                       f"this extractor produces version {FEATURE_SET_VERSION}")
    bad = [n for n in model.feature_names if n not in FEATURE_NAMES]
    if bad:
        raise CliError(f"model expects features unknown to this extractor: {bad}")
    return [FEATURE_NAMES.index(n) for n in model.feature_names]


def _write_text(path, text):
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def transcribe(clip, model, onsets=None):
    """Rows of ``(onset_sec, label, probabilities)`` for ``clip``."""
    cols = _check_model_features(model)
    if onsets is None:
        oc = model.metadata.get("onset", {})
        cfg = OnsetConfig(alpha=oc.get("alpha", 0.1), delay=oc.get("delay", 3))
        onsets = detect_onsets(clip, cfg)
    onsets = np.asarray(onsets, dtype=np.float64)
    if onsets.size == 0:
        return []
    vectors = extract_track(segment_strokes(onsets, clip), DEFAULT_CONFIG)
    X = np.array([v.values for v in vectors])[:, cols]
    proba = model.predict_proba(X)
    labels = model.predict_labels(X)
    return list(zip(onsets.tolist(), labels, proba.tolist()))


def cmd_transcribe(args):
    model = load_model(args.model)
    rate = int(model.metadata.get("sample_rate", args.sample_rate))
    clip = _load_clip(args.audio, rate)
    onsets = read_annotations(args.onsets)[0] if args.onsets else None
    rows = transcribe(clip, model, onsets)
    lines = ["onset_sec,label," + ",".join(f"p_{c}" for c in model.classes)]
    for t, label, p in rows:
        lines.append(f"{t:.6f},{label}," + ",".join(f"{v:.6f}" for v in p))
    text = "\n".join(lines) + "\n"
    if args.out:
        _write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_evaluate(args):
    entries = read_manifest(args.manifest)
    bol_map = _read_bol_map(args.bol_map)
    os.makedirs(args.report, exist_ok=True)
    if args.loto:
        aug = AugmentConfig(strategy=args.augment)
        ds = build_dataset(entries, "train", args.sample_rate, bol_map,
                           keep_audio=args.augment.startswith("pitch"))
        if args.features:
            ds = ds.select_features(_read_feature_list(args.features))
        res = loto_cv(ds, _forest_params(args), aug)
        total = sum(r.confusion for r in res.folds.values())
        for name, fold in res.folds.items():
            write_confusion_csv(os.path.join(args.report, f"confusion_{name}.csv"), fold.confusion)
        write_confusion_csv(os.path.join(args.report, "confusion.csv"), total)
        write_json(os.path.join(args.report, "metrics.json"), res.to_dict())
        print("folds: " + " ".join(res.folds))
        print(format_loto_row(args.augment, res))
        return 0
    if not args.model:
        raise CliError("evaluate needs --model or --loto")
    model = load_model(args.model)
    cols = _check_model_features(model)
    rate = int(model.metadata.get("sample_rate", args.sample_rate))
    ds = build_dataset(entries, "test", rate, bol_map)
    report = metrics(model.predict_index(ds.X[:, cols]), ds.labels)
    write_confusion_csv(os.path.join(args.report, "confusion.csv"), report.confusion)
    write_json(os.path.join(args.report, "metrics.json"), report.to_dict())
    print(f"n={report.n} accuracy={report.accuracy:.3f} macro_f={report.macro_f:.3f} "
          f"balanced_accuracy={report.balanced_accuracy:.3f}")
    return 0


def cmd_rfe(args):
    entries = read_manifest(args.manifest)
    ds = build_dataset(entries, "train", args.sample_rate, _read_bol_map(args.bol_map))
    n = len(ds.feature_names)
    counts = args.counts or list(range(n, args.min_features - 1, -1))
    res = rfe(ds, counts, _forest_params(args), select_count=args.select)
    write_curve_csv(args.out, res.curve)
    if args.subset_out:
        _write_text(args.subset_out, "\n".join(res.best_subset) + "\n")
    for count, m, s in res.curve:
        print(f"{count:>3} {m:.3f} +/- {s:.3f}")
    print(f"selected {res.best_count} features")
    return 0


def cmd_tune(args):
    entries = read_manifest(args.manifest)
    ds = build_dataset(entries, "train", args.sample_rate, _read_bol_map(args.bol_map),
                       keep_audio=args.augment.startswith("pitch"))
    default = SearchSpace()
    space = SearchSpace(
        n_trees=tuple(args.trees_grid or default.n_trees),
        max_depth=tuple(None if d == 0 else d for d in args.depth_grid) if args.depth_grid
        else default.max_depth,
        max_features=tuple(args.features_grid or default.max_features),
        bootstrap=tuple(b == "true" for b in args.bootstrap_grid) if args.bootstrap_grid
        else default.bootstrap,
        n_samples=args.n_samples,
    )
    res = random_search(ds, space, seed=_seed(args), aug=AugmentConfig(strategy=args.augment))
    write_search_csv(args.out, res.scores)
    if args.best_out:
        write_json(args.best_out, {"params": params_to_dict(res.best), "mean_f": res.best_score})
    print(f"evaluated {len(res.scores)} combinations; best mean f {res.best_score:.3f}")
    print(json.dumps(params_to_dict(res.best)))
    return 0


def cmd_synth(args):
    from .synth import DEFAULT_SETS, TEST_VOICE, shifted_sets, synth_corpus, write_corpus

    sets = DEFAULT_SETS if args.shift_set is None else shifted_sets(args.shift_factor,
                                                                   args.shift_set)
    tracks = synth_corpus(sets, args.strokes_per_class, seed=_seed(args),
                          sample_rate=args.sample_rate)
    manifest = os.path.join(args.outdir, "manifest.json")
    if os.path.exists(manifest):
        os.remove(manifest)
    write_corpus(args.outdir, tracks, "train")
    if args.test_strokes:
        test = synth_corpus([TEST_VOICE], args.test_strokes, seed=_seed(args) + 1,
                            sample_rate=args.sample_rate)
        write_corpus(args.outdir, test, "test")
    print(f"wrote {manifest}")
    return 0


# -- parser ----------------------------------------------------------------

def _default_seed():
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise SystemExit(f"error: {SEED_ENV} must be an integer, got {raw!r}")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=_default_seed(),
                        help=f"random seed (default: ${SEED_ENV} or 0)")
    common.add_argument("--sample-rate", type=int, default=WORKING_RATE,
                        help="working sample rate in Hz")
    common.add_argument("--bol-map", help="JSON file mapping bol names to D/RT/RB/B")

    forest = argparse.ArgumentParser(add_help=False)
    forest.add_argument("--params", help="JSON file of forest parameters")
    forest.add_argument("--n-trees", type=int, help="override the number of trees")

    p = argparse.ArgumentParser(prog="tablascribe", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("onsets", parents=[common], help="detect, evaluate or tune onsets")
    s.add_argument("audio")
    s.add_argument("--alpha", type=float, default=OnsetConfig.alpha)
    s.add_argument("--delay", type=int, default=OnsetConfig.delay)
    s.add_argument("--annotations", help="reference onset CSV")
    s.add_argument("--tune-grid", action="store_true", help="grid-search alpha and delay")
    s.add_argument("--alpha-grid", type=float, nargs="+", default=list(DEFAULT_ALPHA_GRID))
    s.add_argument("--delay-grid", type=int, nargs="+", default=list(DEFAULT_DELAY_GRID))
    s.add_argument("--out", help="write detected onsets here instead of stdout")
    s.set_defaults(func=cmd_onsets)

    s = sub.add_parser("train", parents=[common, forest], help="train a stroke classifier")
    s.add_argument("manifest")
    s.add_argument("--augment", choices=STRATEGIES, default="none")
    s.add_argument("--tune", action="store_true", help="pick forest parameters by random search")
    s.add_argument("--n-samples", type=int, default=40, help="combinations tried by --tune")
    s.add_argument("--features", help="file listing the feature names to use")
    s.add_argument("--importances", help="importance table path (default: next to the model)")
    s.add_argument("--out", required=True, help="model JSON path")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("transcribe", parents=[common], help="transcribe an audio file")
    s.add_argument("audio")
    s.add_argument("model")
    s.add_argument("--onsets", help="use these onset times instead of detecting them")
    s.add_argument("--out", help="output CSV (default: stdout)")
    s.set_defaults(func=cmd_transcribe)

    s = sub.add_parser("evaluate", parents=[common, forest], help="score a model or run LOTO-CV")
    s.add_argument("manifest")
    mode = s.add_mutually_exclusive_group(required=True)
    mode.add_argument("--model", help="evaluate this model on the test split")
    mode.add_argument("--loto", action="store_true", help="leave-one-tabla-out CV on train")
    s.add_argument("--augment", choices=STRATEGIES, default="none")
    s.add_argument("--features", help="file listing the feature names to use")
    s.add_argument("--report", required=True, help="directory for metrics.json/confusion.csv")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("rfe", parents=[common, forest], help="recursive feature elimination")
    s.add_argument("manifest")
    s.add_argument("--min-features", type=int, default=1)
    s.add_argument("--counts", type=int, nargs="+", help="explicit subset sizes to score")
    s.add_argument("--select", type=int, help="subset size to report (default: best score)")
    s.add_argument("--subset-out", help="write the selected feature names here")
    s.add_argument("--out", required=True, help="curve CSV path")
    s.set_defaults(func=cmd_rfe)

    s = sub.add_parser("tune", parents=[common], help="random search over forest parameters")
    s.add_argument("manifest")
    s.add_argument("--n-samples", type=int, default=40)
    s.add_argument("--trees-grid", type=int, nargs="+")
    s.add_argument("--depth-grid", type=int, nargs="+", help="0 means unlimited")
    s.add_argument("--features-grid", nargs="+", choices=("sqrt", "log2", "all"))
    s.add_argument("--bootstrap-grid", nargs="+", choices=("true", "false"))
    s.add_argument("--augment", choices=STRATEGIES, default="none")
    s.add_argument("--out", required=True, help="scores CSV path")
    s.add_argument("--best-out", help="best parameters JSON path")
    s.set_defaults(func=cmd_tune)

    s = sub.add_parser("synth", parents=[common], help="write a synthetic annotated corpus")
    s.add_argument("outdir")
    s.add_argument("--strokes-per-class", type=int, default=150)
    s.add_argument("--test-strokes", type=int, default=0,
                   help="strokes per class for an extra test-split tabla set")
    s.add_argument("--shift-set", type=int, choices=(0, 1, 2),
                   help="scale this set's treble energy by --shift-factor")
    s.add_argument("--shift-factor", type=float, default=0.2)
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
