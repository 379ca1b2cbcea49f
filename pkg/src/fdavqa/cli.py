"""Command-line entry point: ``fdavqa <command> [options]``."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

from .ablation import run_ablation
from .attention import explain_trace, trace_rows
from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from .gradcheck import run_suite
from .lexicon import EmbeddingFileError, WordVectors, load_pretrained_embeddings, save_pretrained_embeddings
from .model import VARIANTS, VARIANT_TITLES, predict_multiple_choice, predict_open_ended
from .plotting import plot_metrics_csv
from .sceneworld import (SceneConfig, SceneConfigError, answer_universe, generate_splits,
                         read_dataset, world_word_vectors, write_dataset)
from .training import (METRIC_COLUMNS, TrainConfig, TrainingDiverged, build_answer_vocabulary,
                       evaluate, train, write_history_csv)

log = logging.getLogger("fdavqa")

OUT_ENV = "FDAVQA_OUT"
SPLITS = ("train", "val", "test")
MANIFEST = "manifest.json"
MATCHER_FILE = "matcher.txt"
# Acceptance-scale defaults for ablate when it has to generate its own data.
ABLATE_SIZES = {"train": 2000, "val": 500, "test": 500}
ABLATE_EPOCHS = 15
ABLATE_LR = 3e-3


class CLIError(Exception):
    pass


# --- helpers ----------------------------------------------------------------


def config_hash(config: SceneConfig) -> str:
    raw = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(raw.encode("utf-8")).hexdigest()


def load_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise CLIError(f"{path}: invalid JSON ({e})") from None
    if not isinstance(data, dict):
        raise CLIError(f"{path}: expected a JSON object")
    return data


def generate_data_dir(out_dir, seed: int, sizes: dict, config: SceneConfig) -> dict:
    """Write the three splits, the matcher vectors and a manifest; returns the manifest."""
    config.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    splits = generate_splits(seed, config, sizes)
    files = {}
    for name, data in splits.items():
        path = out / f"{name}.jsonl"
        write_dataset(path, data.scenes, data.samples, config.visual_dim)
        files[name] = hashlib.sha256(path.read_bytes()).hexdigest()
    words = world_word_vectors(config)
    save_pretrained_embeddings(out / MATCHER_FILE, words.vocab, words.table)
    manifest = {
        "seed": seed,
        "sizes": sizes,
        "config": config.to_dict(),
        "config_sha256": config_hash(config),
        "answer_universe": answer_universe(config),
        "files": files,
    }
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                encoding="utf-8")
    return manifest


def load_data_dir(data_dir, splits=SPLITS):
    """(datasets by split, matcher vectors or None, answer universe)."""
    root = Path(data_dir)
    if not root.is_dir():
        raise CLIError(f"data directory {root} does not exist")
    datasets = {}
    for name in splits:
        path = root / f"{name}.jsonl"
        if path.exists():
            datasets[name] = read_dataset(path)
    matcher = None
    if (root / MATCHER_FILE).exists():
        matcher = WordVectors(*load_pretrained_embeddings(root / MATCHER_FILE))
    universe = ()
    if (root / MANIFEST).exists():
        universe = tuple(load_json(root / MANIFEST).get("answer_universe", ()))
    return datasets, matcher, universe


def train_config(args, visual_dim: int) -> TrainConfig:
    base = load_json(args.config).copy() if getattr(args, "config", None) else {}
    overrides = {
        "seed": args.seed, "epochs": args.epochs, "batch_size": args.batch_size,
        "learning_rate": args.lr, "optimizer": args.optimizer, "clip_norm": args.clip_norm,
        "embed_dim": args.embed_dim, "state_dim": args.state_dim, "threshold": args.threshold,
        "variant": getattr(args, "variant", None),
    }
    base.update({k: v for k, v in overrides.items() if v is not None})
    base["visual_dim"] = visual_dim
    return TrainConfig.from_dict(base)


def format_metrics(tables: dict) -> str:
    """Aligned ``mode  All  Y/N  Other  Num`` lines in percent."""
    lines = [f"{'mode':<6}{'All':>8}{'Y/N':>8}{'Other':>8}{'Num':>8}"]
    for mode, m in tables.items():
        cells = [m.all, m.yesno, m.other, m.number]
        lines.append(f"{mode:<6}" + "".join(f"{'-' if c is None else f'{100 * c:.2f}':>8}"
                                            for c in cells))
    return "\n".join(lines)


def out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def split_or_fail(datasets, name):
    if name not in datasets:
        raise CLIError(f"split {name!r} not found in the data directory")
    return datasets[name]


# --- commands ---------------------------------------------------------------


def cmd_gen_data(args):
    config = SceneConfig.from_dict(load_json(args.config)) if args.config else SceneConfig()
    sizes = {"train": args.train, "val": args.val, "test": args.test}
    for k, n in sizes.items():
        if n < 0:
            raise CLIError(f"--{k} must be nonnegative")
    manifest = generate_data_dir(out_dir(args), args.seed, sizes, config)
    print(f"wrote {', '.join(f'{k}={n}' for k, n in sizes.items())} to {args.out} "
          f"(config {manifest['config_sha256'][:12]})")
    return 0


def cmd_train(args):
    datasets, matcher, universe = load_data_dir(args.data)
    train_data = split_or_fail(datasets, "train")
    val_data = datasets.get("val")
    config = train_config(args, train_data.visual_dim)
    answers = build_answer_vocabulary(train_data, universe, args.top_k)
    result = train(config, train_data, val_data, matcher, answers)
    out = out_dir(args)
    name = args.name or config.variant
    ckpt_path = Path(args.ckpt) if args.ckpt else out / f"{name}.ckpt"
    save_checkpoint(ckpt_path, Checkpoint(result.model, config, result.best_epoch, result.best_metric))
    write_history_csv(out / f"{name}_history.csv", result.history)
    print(f"checkpoint: {ckpt_path} (best epoch {result.best_epoch})")
    if val_data is not None and len(val_data):
        tables = {"open": evaluate(result.model, val_data, "open")}
        if all(q.choices for q in val_data.samples):
            tables["mc"] = evaluate(result.model, val_data, "mc")
        print(f"validation ({VARIANT_TITLES[config.variant]}):")
        print(format_metrics(tables))
    return 0


def _modes(mode, dataset):
    if mode == "both":
        return ["open", "mc"] if all(q.choices for q in dataset.samples) else ["open"]
    return [mode]


def cmd_eval(args):
    model = load_checkpoint(args.ckpt).model
    datasets, _, _ = load_data_dir(args.data, [args.split])
    data = split_or_fail(datasets, args.split)
    tables = {m: evaluate(model, data, m) for m in _modes(args.mode, data)}
    print(format_metrics(tables))
    path = out_dir(args) / f"eval_{args.split}.csv"
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("split,mode,variant," + ",".join(METRIC_COLUMNS) + ",n\n")
        for mode, m in tables.items():
            cells = ["" if getattr(m, k) is None else f"{getattr(m, k):.6f}" for k in METRIC_COLUMNS]
            f.write(f"{args.split},{mode},{model.variant},{','.join(cells)},{len(data)}\n")
    print(f"wrote {path}")
    return 0


def cmd_predict(args):
    model = load_checkpoint(args.ckpt).model
    datasets, _, _ = load_data_dir(args.data, [args.split])
    data = split_or_fail(datasets, args.split)
    if args.mode == "mc" and not all(q.choices for q in data.samples):
        raise CLIError("multiple-choice prediction needs choices on every sample")
    path = out_dir(args) / f"predictions_{args.split}.jsonl"
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for q, scene in data.pairs():
            if args.mode == "mc":
                ans, p, trace = predict_multiple_choice(model, scene, q.tokens, q.choices)
            else:
                ans, p, trace = predict_open_ended(model, scene, q.tokens)
            rec = {"qa_id": q.id, "answer": ans, "prob": p, "mode": args.mode,
                   "trace": [] if trace is None else trace_rows(trace),
                   "feed": None if trace is None else trace.feed_objects + ["global"]}
            f.write(json.dumps(rec, sort_keys=True) + "\n")
    print(f"wrote {len(data)} predictions to {path}")
    return 0


def cmd_trace(args):
    model = load_checkpoint(args.ckpt).model
    datasets, _, _ = load_data_dir(args.data, [args.split])
    data = split_or_fail(datasets, args.split)
    by_id = {q.id: q for q in data.samples}
    ids = args.qa_id or [q.id for q in data.samples[:args.limit]]
    for qa_id in ids:
        if qa_id not in by_id:
            raise CLIError(f"no sample {qa_id!r} in split {args.split!r}")
        q = by_id[qa_id]
        scene = data.scene(q.scene_id)
        ans, p, trace = predict_open_ended(model, scene, q.tokens)
        print(f"[{qa_id}] answer={ans} ({p:.2f}) truth={q.answer}")
        if trace is None:
            print(" ".join(q.tokens) + "\n(variant ignores the scene)")
        else:
            print(explain_trace(trace, scene, q.tokens))
        print()
    return 0


def cmd_ablate(args):
    out = out_dir(args)
    if args.data:
        datasets, matcher, universe = load_data_dir(args.data)
    else:
        config = SceneConfig.from_dict(load_json(args.scene_config)) if args.scene_config else SceneConfig()
        generate_data_dir(out / "data", args.seed, dict(ABLATE_SIZES), config)
        datasets, matcher, universe = load_data_dir(out / "data")
    train_data = split_or_fail(datasets, "train")
    test_data = split_or_fail(datasets, "test")
    if args.epochs is None:
        args.epochs = ABLATE_EPOCHS
    if args.lr is None:
        args.lr = ABLATE_LR
    config = train_config(args, train_data.visual_dim)
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    answers = build_answer_vocabulary(train_data, universe)
    report = run_ablation(train_data, test_data, config, datasets.get("val"), matcher, answers,
                          variants, seeds, checkpoint_dir=out / "checkpoints")
    report.write(out)
    print(report.to_text(), end="")
    return 0


def cmd_grad_check(args):
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    reports = run_suite(variants, args.seed, args.tolerance)
    ok = True
    for v, r in reports.items():
        print(f"{v}: {'PASS' if r.passed else 'FAIL'} (max rel err {r.worst:.3e})")
        if args.verbose or not r.passed:
            for line in r.lines():
                print("  " + line)
        ok = ok and r.passed
    return 0 if ok else 1


def cmd_plot(args):
    src = Path(args.metrics)
    target = Path(args.svg) if args.svg else out_dir(args) / f"{src.stem}.svg"
    plot_metrics_csv(src, target)
    print(f"wrote {target}")
    return 0


# --- parser -----------------------------------------------------------------


def _training_flags(p):
    p.add_argument("--config", help="JSON file of training config fields")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float, help="learning rate")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--optimizer", choices=("adam", "sgd"))
    p.add_argument("--clip-norm", type=float)
    p.add_argument("--embed-dim", type=int)
    p.add_argument("--state-dim", type=int)
    p.add_argument("--threshold", type=float)


def build_parser() -> argparse.ArgumentParser:
    # Global flags are accepted before or after the command name.
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--seed", type=int, help="random seed (default 0)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV} or .)")

    parser = argparse.ArgumentParser(prog="fdavqa", parents=[common],
                                     description="Question answering with word-matched object attention.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[common], help="generate train/val/test splits")
    p.add_argument("--train", type=int, default=2000)
    p.add_argument("--val", type=int, default=500)
    p.add_argument("--test", type=int, default=500)
    p.add_argument("--config", help="JSON file of scene config fields")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", parents=[common], help="train one variant")
    p.add_argument("--data", required=True)
    p.add_argument("--variant", choices=VARIANTS)
    p.add_argument("--ckpt", help="checkpoint path (default OUT/<variant>.ckpt)")
    p.add_argument("--name", help="basename for outputs")
    p.add_argument("--top-k", type=int, help="keep only the K most frequent answers")
    _training_flags(p)
    p.set_defaults(func=cmd_train)

    for name, func, help_ in (("eval", cmd_eval, "score a checkpoint"),
                              ("predict", cmd_predict, "write predictions with traces"),
                              ("trace", cmd_trace, "show which objects each question attends to")):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("--ckpt", required=True)
        p.add_argument("--data", required=True)
        p.add_argument("--split", default="test")
        if name == "eval":
            p.add_argument("--mode", choices=("open", "mc", "both"), default="both")
        elif name == "predict":
            p.add_argument("--mode", choices=("open", "mc"), default="open")
        else:
            p.add_argument("--qa-id", action="append", help="sample id (repeatable)")
            p.add_argument("--limit", type=int, default=5, help="samples shown without --qa-id")
        p.set_defaults(func=func)

    p = sub.add_parser("ablate", parents=[common], help="train and compare every variant")
    p.add_argument("--data", help="data directory (generated under OUT/data when omitted)")
    p.add_argument("--scene-config", help="JSON scene config used when generating data")
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--variants", default=",".join(VARIANTS))
    _training_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("grad-check", parents=[common], help="finite-difference check at toy dims")
    p.add_argument("--variants", default=",".join(VARIANTS))
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("plot", parents=[common], help="render a metrics CSV as SVG")
    p.add_argument("--metrics", required=True, help="training history or ablation CSV")
    p.add_argument("--svg", help="output file (default OUT/<csv stem>.svg)")
    p.set_defaults(func=cmd_plot)
    return parser


def parse_args(argv=None):
    args = build_parser().parse_args(argv)
    args.seed = getattr(args, "seed", 0)
    args.verbose = getattr(args, "verbose", False)
    args.out = getattr(args, "out", None) or os.environ.get(OUT_ENV) or "."
    for k in ("config", "epochs", "lr", "batch_size", "optimizer", "clip_norm", "embed_dim",
              "state_dim", "threshold", "variant"):
        if not hasattr(args, k):
            setattr(args, k, None)
    return args


def main(argv=None) -> int:
    args = parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (CLIError, CheckpointError, SceneConfigError, EmbeddingFileError, TrainingDiverged,
            ValueError, KeyError, OSError) as e:
        print(f"fdavqa {args.command}: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
