"""Command line entry point: ``jpave <subcommand> [options]``.

Subcommands: synth, train, eval, permute, zeroshot, gradcheck, ablate.
Training options are resolved as built-in defaults < ``--config`` JSON < explicit flags.
Exit status is 0 on success, 1 for user errors (bad flags, missing or malformed
files, schema mismatches) and 2 for internal failures.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import shutil
import sys
import time
from pathlib import Path

from . import __version__
from . import numkit as nk
from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, load_embedding_file, save_checkpoint
from .data import (
    DataError,
    Schema,
    SynthConfig,
    load_jsonl,
    load_schema,
    permute_dataset,
    save_jsonl,
    save_schema,
    synth_generate,
    zero_shot_split,
)
from .metrics import MetricsError, evaluate
from .model import CLS, GEN, model_vocab, predict
from .training import ConfigError, TrainConfig, TrainingError, report_from_predictions, toy_grad_check, train

log = logging.getLogger("jpave")

SPLITS = ("train", "val", "test")

# (row name, run directory, variant, flag); the full models are reference rows
FULL_MODELS = (("JPAVE-GEN", "gen", GEN, None), ("JPAVE-CLS", "cls", CLS, None))
ABLATIONS = (
    ("JPAVE-GEN w/o Copy", "gen-no-copy", GEN, "no_copy"),
    ("JPAVE-GEN w/o APred", "gen-no-apred", GEN, "no_apred"),
    ("JPAVE-GEN frz-AEmb", "gen-freeze-attr-emb", GEN, "freeze_attr_emb"),
    ("JPAVE-GEN rnd-AEmb", "gen-rand-attr-emb", GEN, "rand_attr_emb"),
    ("JPAVE-CLS rnd-ValueEmb", "cls-rand-value-emb", CLS, "rand_value_emb"),
    ("JPAVE-CLS freeze-ValueEmb", "cls-freeze-value-emb", CLS, "freeze_value_emb"),
)
MODEL_FLAGS = ("no_copy", "no_apred", "freeze_attr_emb", "rand_attr_emb", "freeze_value_emb", "rand_value_emb")
TABLE_FIELDS = ("model", "variant", "flag", "attr_f1", "value_precision", "value_recall", "value_f1",
                "jacc", "iacc", "jf1", "best_epoch")


class UsageError(Exception):
    """Bad invocation; reported without a traceback."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _model_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with training config fields")
    p.add_argument("--seed", type=int)
    p.add_argument("--variant", choices=(GEN, CLS))
    p.add_argument("--tokenize", choices=("char", "space"))
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--d-a", dest="d_a", type=int)
    p.add_argument("--l-max", dest="l_max", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--patience", type=int, help="0 disables early stopping")
    p.add_argument("--threshold", type=float)
    p.add_argument("--gate-values", action="store_true", help="keep only values of attributes predicted to exist")
    for flag in MODEL_FLAGS:
        p.add_argument("--" + flag.replace("_", "-"), dest=flag, action="store_true")
    p.add_argument("--embedding-file", help="token embedding file")
    p.add_argument("--attr-embedding-file", help="attribute embedding file (keys are attribute names)")
    p.add_argument("--value-embedding-file", help="value embedding file (keys are 'attribute [SEP] value')")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="jpave", description="Joint attribute prediction and value extraction.")
    parser.add_argument("--version", action="version", version=f"jpave {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="JSON file with synthetic corpus fields")
    p.add_argument("--seed", type=int)
    for name in ("n_attr", "values_per_attr", "n_train", "n_val", "n_test", "l_max"):
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=int)
    p.add_argument("--heldout-frac", dest="heldout_frac", type=float)
    p.add_argument("--cue-prob", dest="cue_prob", type=float)

    p = sub.add_parser("train", help="train a model and write checkpoints")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--out", required=True)
    _model_options(p)

    p = sub.add_parser("eval", help="score a checkpoint on a dataset, or predictions against gold")
    p.add_argument("--out", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--data-dir")
    p.add_argument("--split", default="test")
    p.add_argument("--data", help="JSONL dataset (instead of --data-dir/--split)")
    p.add_argument("--pred", help="predictions JSONL (pred/gold mode)")
    p.add_argument("--gold", help="gold JSONL (pred/gold mode)")
    p.add_argument("--schema", help="schema JSON for pred/gold mode")
    p.add_argument("--tokenize", choices=("char", "space"))
    p.add_argument("--traces", action="store_true", help="also write per-step decode traces")
    p.add_argument("--gate-values", action="store_true")
    p.add_argument("--threshold", type=float)

    p = sub.add_parser("permute", help="write a word-order-permuted copy of a dataset split")
    p.add_argument("--out", required=True)
    p.add_argument("--data-dir")
    p.add_argument("--split", default="test")
    p.add_argument("--input", help="JSONL file (instead of --data-dir/--split)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tokenize", choices=("char", "space"))

    p = sub.add_parser("zeroshot", help="seen/unseen value report for a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--out", required=True)

    p = sub.add_parser("gradcheck", help="finite-difference check of the joint losses on a toy problem")
    p.add_argument("--variant", choices=(GEN, CLS))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--out")

    p = sub.add_parser("ablate", help="train and score the full models and the six ablation variants")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--out", required=True)
    _model_options(p)
    return parser


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------


class _Run:
    """Collects the manifest of one invocation."""

    def __init__(self, command: str, argv: list[str], out: Path):
        self.out = out
        self.manifest = {
            "subcommand": command,
            "argv": list(argv),
            "version": __version__,
            "config_path": None,
            "config": None,
            "dataset_paths": [],
            "checkpoint_path": None,
            "seed": None,
            "out_dir": str(out),
            "started_at": _now(),
            "finished_at": None,
            "outputs": [],
        }

    def wrote(self, path: Path) -> Path:
        self.manifest["outputs"].append(str(Path(path).relative_to(self.out)))
        return path

    def finish(self) -> None:
        self.manifest["finished_at"] = _now()
        (self.out / "manifest.json").write_text(json.dumps(self.manifest, indent=1) + "\n", encoding="utf-8")


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S%z")


def _existing(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} not found: {p}")
    return p


def _read_json(path) -> dict:
    try:
        return json.loads(_existing(path, "file").read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc.msg})") from exc


def _data_mode(data_dir: Path, explicit: str | None) -> str:
    if explicit:
        return explicit
    meta = data_dir / "meta.json"
    if meta.exists():
        return _read_json(meta).get("tokenize", "char")
    return "char"


def _load_data_dir(data_dir, mode: str | None):
    """(splits dict, schema, tokenize mode, loaded paths) for a dataset directory."""
    data_dir = _existing(data_dir, "data directory")
    mode = _data_mode(data_dir, mode)
    schema_path = data_dir / "schema.json"
    schema = load_schema(schema_path) if schema_path.exists() else None
    splits, paths = {}, []
    for name in SPLITS:
        path = data_dir / f"{name}.jsonl"
        if path.exists():
            splits[name] = load_jsonl(path, mode, schema)
            paths.append(str(path))
    if "train" not in splits:
        raise UsageError(f"{data_dir} has no train.jsonl")
    if schema is None:
        schema = Schema.from_instances([i for s in splits.values() for i in s])
    return splits, schema, mode, paths


def _resolve_config(args, data_dir: Path, run: _Run) -> TrainConfig:
    obj: dict = {}
    if args.config:
        obj = _read_json(args.config)
        run.manifest["config_path"] = str(args.config)
    if "tokenize" not in obj:
        obj["tokenize"] = _data_mode(data_dir, None)
    for name in ("seed", "variant", "tokenize", "epochs", "lr", "d_a", "l_max", "batch_size", "threshold"):
        value = getattr(args, name, None)
        if value is not None:
            obj[name] = value
    if args.patience is not None:
        obj["patience"] = args.patience or None
    for flag in MODEL_FLAGS + ("gate_values",):
        if getattr(args, flag, False):
            obj[flag] = True
    return TrainConfig.from_dict(obj)


def _load_embeddings(args) -> dict:
    out = {}
    for key, path in (("tokens", args.embedding_file), ("attributes", args.attr_embedding_file),
                      ("values", args.value_embedding_file)):
        if path:
            out[key] = load_embedding_file(_existing(path, "embedding file"))
    return out


def _report_row(name: str, variant: str, flag, report, epoch: int) -> dict:
    return {
        "model": name, "variant": variant, "flag": flag or "",
        "attr_f1": report.attr_f1, "value_precision": report.value.precision,
        "value_recall": report.value.recall, "value_f1": report.value.f1,
        "jacc": report.jacc, "iacc": report.iacc, "jf1": report.jf1, "best_epoch": epoch,
    }


def _write_table(path: Path, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=TABLE_FIELDS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def _train_to_dir(config: TrainConfig, splits: dict, schema: Schema, embeddings: dict, out: Path, run: _Run) -> Checkpoint:
    out.mkdir(parents=True, exist_ok=True)
    vocab = model_vocab(splits.values(), schema, config.tokenize, config.min_freq)
    result = train(config, splits["train"], splits.get("val", []), schema, vocab=vocab, embeddings=embeddings)
    best = result.checkpoint
    save_checkpoint(best, run.wrote(out / "checkpoint.bin"))
    last = dataclasses.replace(best, params=result.final_params, epoch=len(result.history))
    save_checkpoint(last, run.wrote(out / "last.bin"))
    with open(run.wrote(out / "epochs.jsonl"), "w", encoding="utf-8") as fh:
        for entry in result.history:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
    (run.wrote(out / "config.json")).write_text(json.dumps(config.to_dict(), indent=1) + "\n", encoding="utf-8")
    return best


def _prediction_record(pred, inst, mode: str) -> dict:
    return {
        "id": pred.instance_id,
        "text": (" " if mode == "space" else "").join(inst.tokens),
        "labels": [{"attribute": a, "values": vs} for a, vs in pred.values.items()],
        "attributes": sorted(pred.attributes),
    }


def _write_eval(out: Path, run: _Run, report) -> None:
    (run.wrote(out / "report.json")).write_text(report.to_json() + "\n", encoding="utf-8")
    (run.wrote(out / "per_attribute.csv")).write_text(report.per_attribute_csv(), encoding="utf-8")


def _score_checkpoint(ckpt: Checkpoint, instances, unseen=None, traces: bool = False):
    for inst in instances:
        for a in inst.gold:
            if a not in ckpt.schema.attributes:
                raise DataError(f"instance {inst.id}: attribute {a!r} is not in the checkpoint schema")
    preds = predict(ckpt.params, ckpt.config, ckpt.vocab, ckpt.schema, ckpt.value_space, instances,
                    traces=traces)
    return preds, report_from_predictions(preds, instances, ckpt.schema, unseen)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_synth(args, run: _Run) -> None:
    obj = dataclasses.asdict(SynthConfig())
    if args.config:
        loaded = _read_json(args.config)
        unknown = set(loaded) - set(obj)
        if unknown:
            raise UsageError(f"unknown synthetic config fields: {sorted(unknown)}")
        obj.update(loaded)
        run.manifest["config_path"] = str(args.config)
    for name in obj:
        value = getattr(args, name, None)
        if value is not None:
            obj[name] = value
    cfg = SynthConfig(**obj)
    train_set, val_set, test_set, schema = synth_generate(cfg)
    for name, split in zip(SPLITS, (train_set, val_set, test_set)):
        save_jsonl(split, run.wrote(run.out / f"{name}.jsonl"), mode="space")
    save_schema(schema, run.wrote(run.out / "schema.json"))
    meta = {"tokenize": "space", "synth": dataclasses.asdict(cfg)}
    (run.wrote(run.out / "meta.json")).write_text(json.dumps(meta, indent=1) + "\n", encoding="utf-8")
    run.manifest.update(seed=cfg.seed, config=dataclasses.asdict(cfg))
    print(f"wrote {len(train_set)}/{len(val_set)}/{len(test_set)} instances to {run.out}")


def cmd_train(args, run: _Run) -> None:
    data_dir = _existing(args.data_dir, "data directory")
    config = _resolve_config(args, data_dir, run)
    splits, schema, _, paths = _load_data_dir(data_dir, config.tokenize)
    run.manifest.update(dataset_paths=paths, seed=config.seed, config=config.to_dict())
    best = _train_to_dir(config, splits, schema, _load_embeddings(args), run.out, run)
    run.manifest["checkpoint_path"] = str(run.out / "checkpoint.bin")
    print(f"best epoch {best.epoch}; checkpoint {run.out / 'checkpoint.bin'}")


def cmd_eval(args, run: _Run) -> None:
    if args.pred or args.gold:
        if not (args.pred and args.gold):
            raise UsageError("pred/gold mode needs both --pred and --gold")
        _eval_files(args, run)
        return
    if not args.checkpoint:
        raise UsageError("eval needs --checkpoint (or --pred and --gold)")
    ckpt = load_checkpoint(_existing(args.checkpoint, "checkpoint"))
    overrides = {}
    if args.gate_values:
        overrides["gate_values"] = True
    if args.threshold is not None:
        overrides["threshold"] = args.threshold
    if overrides:
        ckpt.config = dataclasses.replace(ckpt.config, **overrides)
    mode = args.tokenize or ckpt.config.tokenize
    if args.data:
        path = _existing(args.data, "dataset")
    elif args.data_dir:
        path = _existing(Path(args.data_dir) / f"{args.split}.jsonl", "dataset split")
    else:
        raise UsageError("eval needs --data or --data-dir")
    instances = load_jsonl(path, mode)
    run.manifest.update(dataset_paths=[str(path)], checkpoint_path=str(args.checkpoint),
                        seed=ckpt.config.seed, config=ckpt.config.to_dict())
    preds, report = _score_checkpoint(ckpt, instances, traces=args.traces)
    _write_eval(run.out, run, report)
    by_id = {inst.id: inst for inst in instances}
    with open(run.wrote(run.out / "predictions.jsonl"), "w", encoding="utf-8") as fh:
        for p in preds:
            fh.write(json.dumps(_prediction_record(p, by_id[p.instance_id], mode), ensure_ascii=False) + "\n")
    if args.traces and ckpt.config.variant == GEN:
        with open(run.wrote(run.out / "traces.jsonl"), "w", encoding="utf-8") as fh:
            for p in preds:
                for tr in p.traces or []:
                    rec = json.loads(tr.to_json())
                    rec["id"] = p.instance_id
                    rec["attribute_name"] = ckpt.schema.attributes[tr.attribute]
                    fh.write(json.dumps(rec) + "\n")
    print(f"value F1 {report.value.f1:.4f}  attribute F1 {report.attr_f1:.4f}  JACC {report.jacc:.4f}")


def _eval_files(args, run: _Run) -> None:
    mode = args.tokenize or "char"
    gold = load_jsonl(_existing(args.gold, "gold file"), mode)
    pred_records = []
    with open(_existing(args.pred, "prediction file"), encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                try:
                    pred_records.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise DataError(f"{args.pred}:{lineno}: invalid JSON ({exc.msg})") from exc
    try:
        pred_pairs = {str(r["id"]): {(lab["attribute"], v) for lab in r["labels"] for v in lab["values"]}
                      for r in pred_records}
        pred_attrs = {str(r["id"]): set(r.get("attributes", [lab["attribute"] for lab in r["labels"]]))
                      for r in pred_records}
    except (KeyError, TypeError) as exc:
        raise DataError(f"{args.pred}: malformed prediction record ({exc})") from exc
    if args.schema:
        attributes = load_schema(args.schema).attributes
    else:
        attributes = Schema.from_instances(gold).attributes
    report = evaluate(pred_pairs, {g.id: g.pairs() for g in gold}, attributes, pred_attrs,
                      {g.id: set(g.gold) for g in gold})
    run.manifest.update(dataset_paths=[str(args.pred), str(args.gold)])
    _write_eval(run.out, run, report)
    print(f"value F1 {report.value.f1:.4f}  attribute F1 {report.attr_f1:.4f}  JACC {report.jacc:.4f}")


def cmd_permute(args, run: _Run) -> None:
    if args.input:
        src = _existing(args.input, "input file")
        mode = args.tokenize or _data_mode(src.parent, None)
        dest = run.out / src.name
    elif args.data_dir:
        data_dir = _existing(args.data_dir, "data directory")
        src = _existing(data_dir / f"{args.split}.jsonl", "dataset split")
        mode = _data_mode(data_dir, args.tokenize)
        dest = run.out / src.name
        for extra in ("schema.json", "meta.json"):
            if (data_dir / extra).exists() and (data_dir / extra).resolve() != (run.out / extra).resolve():
                shutil.copyfile(data_dir / extra, run.wrote(run.out / extra))
    else:
        raise UsageError("permute needs --input or --data-dir")
    permuted = permute_dataset(load_jsonl(src, mode), args.seed, mode)
    save_jsonl(permuted, run.wrote(dest), mode)
    run.manifest.update(dataset_paths=[str(src)], seed=args.seed)
    print(f"wrote {len(permuted)} permuted instances to {dest}")


def cmd_zeroshot(args, run: _Run) -> None:
    ckpt = load_checkpoint(_existing(args.checkpoint, "checkpoint"))
    splits, _, _, paths = _load_data_dir(args.data_dir, ckpt.config.tokenize)
    if args.split not in splits:
        raise UsageError(f"{args.data_dir} has no {args.split}.jsonl")
    seen, unseen = zero_shot_split(splits["train"], splits[args.split])
    _, report = _score_checkpoint(ckpt, splits[args.split], unseen=unseen)
    run.manifest.update(dataset_paths=paths, checkpoint_path=str(args.checkpoint), seed=ckpt.config.seed,
                        config=ckpt.config.to_dict())
    summary = {
        "n_seen_pairs": len(seen),
        "n_unseen_pairs": len(unseen),
        "overall": dataclasses.asdict(report.value),
        "seen": dataclasses.asdict(report.seen),
        "unseen": dataclasses.asdict(report.unseen),
        "unseen_per_attribute": {a: dataclasses.asdict(r) for a, r in report.unseen_per_attribute.items()},
    }
    (run.wrote(run.out / "zeroshot.json")).write_text(json.dumps(summary, indent=1) + "\n", encoding="utf-8")
    (run.wrote(run.out / "unseen_per_attribute.csv")).write_text(report.unseen_csv(), encoding="utf-8")
    (run.wrote(run.out / "per_attribute.csv")).write_text(report.per_attribute_csv(), encoding="utf-8")
    print(f"seen F1 {report.seen.f1:.4f}  unseen F1 {report.unseen.f1:.4f}  unseen recall {report.unseen.recall:.4f}")


def cmd_gradcheck(args, run: _Run | None) -> int:
    variants = [args.variant] if args.variant else [GEN, CLS]
    results = {}
    for v in variants:
        results[v] = toy_grad_check(v, args.seed, args.eps)
        ok = results[v] <= args.tolerance
        print(f"{v}: max relative error {results[v]:.3e} (tolerance {args.tolerance:.0e}) {'ok' if ok else 'FAILED'}")
    if run is not None:
        out = {"eps": args.eps, "tolerance": args.tolerance, "max_relative_error": results}
        (run.wrote(run.out / "gradcheck.json")).write_text(json.dumps(out, indent=1) + "\n", encoding="utf-8")
        run.manifest["seed"] = args.seed
    return 0 if all(r <= args.tolerance for r in results.values()) else 2


def cmd_ablate(args, run: _Run) -> None:
    data_dir = _existing(args.data_dir, "data directory")
    set_flags = [f for f in MODEL_FLAGS if getattr(args, f)]
    if set_flags or args.variant:
        raise UsageError("ablate sets --variant and the ablation flags itself")
    base = _resolve_config(args, data_dir, run)
    splits, schema, _, paths = _load_data_dir(data_dir, base.tokenize)
    eval_split = "test" if "test" in splits else "val" if "val" in splits else "train"
    embeddings = _load_embeddings(args)
    run.manifest.update(dataset_paths=paths, seed=base.seed, config=base.to_dict())
    rows = {}
    for name, slug, variant, flag in FULL_MODELS + ABLATIONS:
        fields = {f: False for f in MODEL_FLAGS}
        if flag:
            fields[flag] = True
        config = dataclasses.replace(base, variant=variant, **fields)
        log.info("ablate: training %s", name)
        ckpt = _train_to_dir(config, splits, schema, embeddings, run.out / "runs" / slug, run)
        _, report = _score_checkpoint(ckpt, splits[eval_split])
        _write_eval(run.out / "runs" / slug, run, report)
        rows[slug] = _report_row(name, variant, flag, report, ckpt.epoch)
        print(f"{name:28s} attr F1 {report.attr_f1:.4f}  value F1 {report.value.f1:.4f}")
    _write_table(run.wrote(run.out / "full_models.csv"), [rows[s] for _, s, _, _ in FULL_MODELS])
    _write_table(run.wrote(run.out / "ablation.csv"), [rows[s] for _, s, _, _ in ABLATIONS])


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "permute": cmd_permute,
    "zeroshot": cmd_zeroshot,
    "gradcheck": cmd_gradcheck,
    "ablate": cmd_ablate,
}


def _configure_logging() -> None:
    level = os.environ.get("JPAVE_LOG", "WARNING").upper()
    if not isinstance(logging.getLevelName(level), int):
        level = "WARNING"
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def run(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    _configure_logging()
    try:
        args = build_parser().parse_args(argv)
        out = getattr(args, "out", None)
        rec = None
        if out is not None:
            Path(out).mkdir(parents=True, exist_ok=True)
            rec = _Run(args.command, argv, Path(out))
        status = COMMANDS[args.command](args, rec) or 0
        if rec is not None:
            rec.manifest["exit_status"] = status
            rec.finish()
        return status
    except (nk.ContractError, nk.GradCheckError, TrainingError) as exc:
        log.debug("internal failure", exc_info=True)
        print(f"jpave: internal error: {exc}", file=sys.stderr)
        return 2
    except (UsageError, DataError, ConfigError, CheckpointError, MetricsError, OSError) as exc:
        print(f"jpave: error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except Exception as exc:  # noqa: BLE001 - last-resort boundary
        log.debug("internal failure", exc_info=True)
        print(f"jpave: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
