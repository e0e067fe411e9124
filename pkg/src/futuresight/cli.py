"""Command-line pipeline: synth -> train -> predict -> eval.

Every command accepts ``--config file.json`` whose keys are option names
(``lr``, ``batch_size``, ...). Explicit flags override the file, which
overrides built-in defaults. Exit status is 0 on success, 2 on usage
errors and 1 on runtime errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import baselines, container, data, metrics, mixture, recognition
from .nn import NetworkSpec, OptimizerConfig

log = logging.getLogger("futuresight")


class CliError(Exception):
    pass


# --- argument types -----------------------------------------------------------


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _nonneg_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {v}")
    return v


def _fraction(text):
    v = _nonneg_float(text)
    if v >= 1:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1), got {v}")
    return v


def _probability(text):
    v = _nonneg_float(text)
    if v > 1:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1], got {v}")
    return v


def _int_list(text):
    try:
        sizes = [int(s) for s in str(text).split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if any(s < 1 for s in sizes):
        raise argparse.ArgumentTypeError("sizes must be positive")
    return sizes


def _float_list(text):
    try:
        return [float(s) for s in str(text).split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


# --- helpers ------------------------------------------------------------------


def _resolved(args) -> dict:
    out = {}
    for k, v in sorted(vars(args).items()):
        if k in ("func", "config"):
            continue
        out[k] = v
    return out


def _write_meta(path, command: str, config: dict) -> None:
    meta = Path(str(path) + ".meta.json")
    meta.write_text(json.dumps({"command": command, "config": config}, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


def _load_pairs(path, delta):
    seqs = data.load_sequences(path)
    pairs = data.make_pairs(seqs, delta)
    return seqs, pairs


def _load_predictor(path):
    kind = container.peek_type(path)
    if kind == mixture.MODEL_TYPE:
        model = mixture.load_model(path)
        return model.spec.input_dim, model.spec.output_dim, lambda X: mixture.predict_all_batch(model, X)
    if kind == baselines.LINEAR_TYPE:
        reg = baselines.load_linear(path)
        return reg.W.shape[1], reg.W.shape[0], lambda X: baselines.predict_linear(reg, X)[:, None, :]
    if kind == baselines.KNN_TYPE:
        bank, k = baselines.load_knn(path)
        return bank.keys.shape[1], bank.values.shape[1], \
            lambda X: baselines.knn_predict_batch(bank, X, k)[:, None, :]
    raise CliError(f"{path}: model type {kind!r} cannot produce predictions")


def _read_predictions(path):
    preds = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                key = (rec["video"], int(rec["t"]))
                arr = np.asarray(rec["preds"], dtype=np.float64)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                raise CliError(f"{path}:{lineno}: malformed prediction record") from None
            if arr.ndim != 2:
                raise CliError(f"{path}:{lineno}: 'preds' must be a list of K vectors")
            if key in preds:
                raise CliError(f"{path}:{lineno}: duplicate prediction for {key}")
            preds[key] = arr
    return preds


# --- commands -----------------------------------------------------------------


def cmd_synth(args):
    cfg = data.SynthConfig(
        n_sequences=args.sequences, seq_len=args.len, dim=args.dim, n_modes=args.modes,
        noise_sigma=args.noise, mode_probs=args.mode_probs, seed=args.seed,
        persistence=args.persistence, contraction=args.contraction, offset_scale=args.offset_scale,
        identity_dynamics=args.identity_dynamics)
    seqs, truth = data.generate_synthetic(cfg)
    if args.test_out:
        seqs, test = data.split_dataset(seqs, 1.0 - args.test_fraction, args.seed)
        data.write_sequences(test, args.test_out)
        _write_meta(args.test_out, "synth", _resolved(args) | {"split": "test"})
    data.write_sequences(seqs, args.out)
    truth_path = args.truth or str(Path(args.out).with_suffix("")) + ".truth.jsonl"
    data.write_truth(truth, truth_path)
    config = _resolved(args) | {"truth": truth_path, "mode_probs": list(cfg.mode_probs)}
    _write_meta(args.out, "synth", config | {
        "maps": {"A": truth.A.tolist(), "b": truth.b.tolist()}})
    log.info("wrote %d frames to %s", sum(len(s) for s in seqs), args.out)


def cmd_train(args):
    _, pairs = _load_pairs(args.data, args.delta)
    if not pairs:
        raise CliError(f"{args.data}: no (frame, frame+{args.delta}) pairs; empty dataset")
    d_in, d_out = len(pairs[0].input), len(pairs[0].target)
    spec = NetworkSpec((d_in, *args.hidden, d_out), args.dropout)
    mix_cfg = mixture.MixtureConfig(
        k=args.k, shared_layer_count=args.shared_layers, private_prob=args.p,
        alternations=args.alternations, iters_per_alternation=args.iters,
        init_scale=args.init_scale, bias_const=args.bias_init)
    opt = OptimizerConfig(args.lr, args.momentum, args.batch_size, args.seed)
    try:
        model, assignments, history = mixture.train_alternating(pairs, spec, mix_cfg, opt)
    except mixture.TrainingDiverged as exc:
        raise CliError(f"training aborted: {exc}") from None
    config = _resolved(args)
    mixture.save_model(model, args.out, provenance={"command": "train", "config": config})
    hist_path = args.history or str(Path(args.out).with_suffix("")) + ".history.csv"
    with open(hist_path, "w", encoding="utf-8") as fh:
        fh.write("# " + json.dumps({"command": "train", "config": config}, sort_keys=True) + "\n")
        fh.write("round,phase,objective\n")
        for row in history:
            fh.write(f"{row['round']},{row['phase']},{row['objective']!r}\n")
    log.info("final objective %.6g; assignment counts %s", history[-1]["objective"],
             assignments.counts(args.k).tolist())


def cmd_train_linear(args):
    _, pairs = _load_pairs(args.data, args.delta)
    if not pairs:
        raise CliError(f"{args.data}: empty dataset")
    reg = baselines.fit_linear(pairs, args.lam)
    baselines.save_linear(reg, args.out, {"command": "train-linear", "config": _resolved(args)})


def cmd_train_knn(args):
    _, pairs = _load_pairs(args.data, args.delta)
    if not pairs:
        raise CliError(f"{args.data}: empty dataset")
    if args.k > len(pairs):
        raise CliError(f"k={args.k} exceeds the {len(pairs)} stored pairs")
    baselines.save_knn(baselines.NeighborBank.from_pairs(pairs), args.k, args.out,
                       {"command": "train-knn", "config": _resolved(args)})


def cmd_train_classifier(args):
    _, pairs = _load_pairs(args.data, args.delta)
    if not args.multi_label:
        pairs = [p for p in pairs if len(p.future_labels) == 1]
    else:
        pairs = [p for p in pairs if p.future_labels]
    if not pairs:
        raise CliError(f"{args.data}: no labelled pairs")
    cfg = recognition.ClassifierConfig(loss=args.loss, l2=args.l2, learning_rate=args.lr, epochs=args.epochs,
                                       batch_size=args.batch_size, seed=args.seed, multi_label=args.multi_label)
    if args.features == "future":
        clf = recognition.train_off_the_shelf(pairs, cfg)
    elif args.features == "current":
        clf = recognition.train_direct(pairs, cfg)
    else:
        if not args.model:
            raise CliError("--features predicted requires --model")
        model = mixture.load_model(args.model)
        clf = recognition.train_adapted(model, pairs, cfg)
    recognition.save_classifier(clf, args.out, {"command": "train-classifier", "config": _resolved(args)})


def cmd_predict(args):
    _, pairs = _load_pairs(args.data, args.delta)
    if args.identity:
        d = len(pairs[0].input) if pairs else 0
        d_in, d_out, fn = d, d, lambda X: X[:, None, :].copy()
    else:
        if not args.model:
            raise CliError("either --model or --identity is required")
        d_in, d_out, fn = _load_predictor(args.model)
    if pairs and len(pairs[0].input) != d_in:
        raise CliError(f"model expects {d_in}-dim inputs but {args.data} has {len(pairs[0].input)}-dim features")
    if pairs and len(pairs[0].target) != d_out:
        raise CliError(f"model predicts {d_out}-dim features but {args.data} has {len(pairs[0].target)}-dim")
    preds = fn(np.stack([p.input for p in pairs])) if pairs else np.empty((0, 1, d_out))
    with open(args.out, "w", encoding="utf-8") as fh:
        for p, kp in zip(pairs, preds):
            fh.write(json.dumps({"video": p.video_id, "t": p.t, "preds": kp.tolist()}) + "\n")
    _write_meta(args.out, "predict", _resolved(args))


def evaluate(pairs, preds: dict, clf=None, config=None) -> metrics.MetricReport:
    """Metric report for pairs against a {(video, t): (K, d) array} prediction map."""
    keys = [p.key for p in pairs]
    missing = [k for k in keys if k not in preds]
    extra = set(preds) - set(keys)
    if missing or extra:
        example = missing[0] if missing else sorted(extra)[0]
        raise CliError(f"predictions and data are misaligned ({len(missing)} missing, {len(extra)} unmatched; "
                       f"e.g. sample {example})")
    if not pairs:
        raise CliError("no samples to evaluate")
    ks = {preds[k].shape for k in keys}
    if len(ks) != 1:
        raise CliError(f"inconsistent prediction shapes {sorted(ks)}")
    k_preds = np.stack([preds[k] for k in keys])
    targets = np.stack([p.target for p in pairs])
    if k_preds.shape[2] != targets.shape[1]:
        raise CliError(f"predictions are {k_preds.shape[2]}-dim but targets are {targets.shape[1]}-dim")
    kwargs = {}
    if clf is not None and not clf.multi_label:
        labelled = [i for i, p in enumerate(pairs) if len(p.future_labels) == 1]
        if labelled:
            cats, _ = recognition.anticipate_batch(clf, k_preds[labelled])
            kwargs["predicted_categories"] = cats
            kwargs["true_categories"] = [next(iter(pairs[i].future_labels)) for i in labelled]
    elif clf is not None:
        probs = 1.0 / (1.0 + np.exp(-recognition.scores(clf, k_preds)))
        kwargs["category_scores"] = probs.mean(axis=1)
        kwargs["category_truth"] = np.array([[c in p.future_labels for c in clf.categories] for p in pairs])
        kwargs["categories"] = clf.categories
    return metrics.build_report(k_preds, targets, config=config, **kwargs)


def cmd_eval(args):
    _, pairs = _load_pairs(args.data, args.delta)
    preds = _read_predictions(args.predictions)
    clf = recognition.load_classifier(args.classifier) if args.classifier else None
    report = evaluate(pairs, preds, clf, config={"command": "eval", "config": _resolved(args)})
    Path(args.out).write_text(report.to_json(), encoding="utf-8")
    if args.csv:
        new = not Path(args.csv).exists()
        with open(args.csv, "a", encoding="utf-8") as fh:
            if new:
                fh.write(metrics.CSV_HEADER)
            fh.write(report.csv_row())
    log.info("mean distance %.6g, min-over-K %.6g", report.mean_euclidean_distance,
             report.mean_min_over_k_distance)


# --- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="futuresight", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="JSON file of option defaults")
        p.set_defaults(func=func)
        return p

    p = add("synth", cmd_synth, "generate a synthetic multi-modal feature dataset")
    p.add_argument("--modes", type=_positive_int, default=2)
    p.add_argument("--dim", type=_positive_int, default=8)
    p.add_argument("--sequences", type=_positive_int, default=200)
    p.add_argument("--len", type=_positive_int, default=50)
    p.add_argument("--noise", type=_nonneg_float, default=0.05)
    p.add_argument("--mode-probs", type=_float_list, default=None)
    p.add_argument("--persistence", type=_fraction, default=0.0)
    p.add_argument("--contraction", type=_nonneg_float, default=0.5)
    p.add_argument("--offset-scale", type=_nonneg_float, default=2.0)
    p.add_argument("--identity-dynamics", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--truth", help="ground-truth mode file (default: <out>.truth.jsonl)")
    p.add_argument("--test-out", help="also write a held-out split of whole videos here")
    p.add_argument("--test-fraction", type=_fraction, default=0.25)

    def data_args(p):
        p.add_argument("--data", required=True)
        p.add_argument("--delta", type=_positive_int, default=1)

    p = add("train", cmd_train, "train a K-network mixture by alternating optimisation")
    data_args(p)
    p.add_argument("--k", type=_positive_int, default=1)
    p.add_argument("--hidden", type=_int_list, default=[64, 64, 64])
    p.add_argument("--dropout", type=_fraction, default=0.5)
    p.add_argument("--p", type=_probability, default=0.5, help="probability a unit is private")
    p.add_argument("--shared-layers", type=_positive_int, default=2)
    p.add_argument("--alternations", type=_positive_int, default=10)
    p.add_argument("--iters", type=int, default=200)
    p.add_argument("--lr", type=_nonneg_float, default=0.001)
    p.add_argument("--momentum", type=_fraction, default=0.9)
    p.add_argument("--batch-size", type=_positive_int, default=32)
    p.add_argument("--init-scale", type=_nonneg_float, default=0.01)
    p.add_argument("--bias-init", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--history", help="objective CSV (default: <out>.history.csv)")

    p = add("train-linear", cmd_train_linear, "fit the ridge-regression baseline")
    data_args(p)
    p.add_argument("--lam", type=_nonneg_float, default=1e-3)
    p.add_argument("--out", required=True)

    p = add("train-knn", cmd_train_knn, "store the nearest-neighbour baseline bank")
    data_args(p)
    p.add_argument("--k", type=_positive_int, default=1)
    p.add_argument("--out", required=True)

    p = add("train-classifier", cmd_train_classifier, "train a linear category classifier")
    data_args(p)
    p.add_argument("--features", choices=["future", "predicted", "current"], default="future",
                   help="future: off-the-shelf, predicted: adapted, current: direct baseline")
    p.add_argument("--model", help="mixture model (for --features predicted)")
    p.add_argument("--loss", choices=["hinge", "logistic"], default="hinge")
    p.add_argument("--l2", type=_nonneg_float, default=1e-3)
    p.add_argument("--lr", type=_nonneg_float, default=0.1)
    p.add_argument("--epochs", type=_positive_int, default=30)
    p.add_argument("--batch-size", type=_positive_int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--multi-label", action="store_true")
    p.add_argument("--out", required=True)

    p = add("predict", cmd_predict, "write the K predicted futures of every pair")
    data_args(p)
    p.add_argument("--model")
    p.add_argument("--identity", action="store_true", help="predict the current frame unchanged")
    p.add_argument("--out", required=True)

    p = add("eval", cmd_eval, "score predictions against the data")
    data_args(p)
    p.add_argument("--predictions", required=True)
    p.add_argument("--classifier")
    p.add_argument("--out", required=True)
    p.add_argument("--csv", help="append one summary row to this CSV")
    return parser


def _scan_config(argv, commands):
    """The chosen command and --config path, found before full parsing."""
    command = config = None
    for i, tok in enumerate(argv):
        if command is None and tok in commands:
            command = tok
        elif command is not None and tok == "--config" and i + 1 < len(argv):
            config = argv[i + 1]
        elif command is not None and tok.startswith("--config="):
            config = tok.split("=", 1)[1]
    return command, config


def _apply_config_file(parser, argv):
    """Parse argv with defaults taken from the chosen command's --config file.

    The file is read first so that it may also supply options that are
    otherwise required on the command line.
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    commands = parser._subparsers._group_actions[0].choices
    command, path = _scan_config(argv, commands)
    if command is None or path is None:
        return parser.parse_args(argv)
    try:
        overrides = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        parser.error(f"cannot read config file {path}: {exc}")
    if not isinstance(overrides, dict):
        parser.error(f"config file {path} must hold a JSON object")
    subparser = commands[command]
    known = {a.dest: a for a in subparser._actions}
    defaults = {}
    for key, value in overrides.items():
        dest = key.replace("-", "_")
        if dest not in known or dest in ("config", "help"):
            parser.error(f"unknown option {key!r} in config file")
        action = known[dest]
        if action.type is not None and value is not None:
            text = ",".join(str(v) for v in value) if isinstance(value, list) else str(value)
            try:
                value = action.type(text)
            except argparse.ArgumentTypeError as exc:
                parser.error(f"config option {key!r}: {exc}")
        defaults[dest] = value
        action.required = False
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    args = _apply_config_file(parser, argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (CliError, ValueError, OSError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
