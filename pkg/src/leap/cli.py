"""Command-line surface: reproducible experiment runs driven by a config
file plus one-to-one key overrides.

Full pipelines: ``leap op1|op2|mef --config run.cfg``. Granular stages:
ingest, split, prompts, embed, stats, train-/eval- pairs per task, report.
Every run writes a manifest with the config hash, seed, and input
checksums, enough to reproduce it exactly.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, RunConfig
from .embeddings import EmbedConfig, EmbeddingStore, embed_all, make_hash_provider, read_store_file, write_store_file
from .events import (
    ParsedDataset,
    chronological_split,
    dataset_stats,
    group_by_day,
    parse_dataset,
)
from .forecast import build_labels, daily_embeddings, eval_mef, train_mef
from .generation import (
    BaselineGenerator,
    HttpBridgeClient,
    build_tasks,
    evaluate_generation,
    run_generation,
)
from .nn.checkpoint import read_checkpoint_file, write_checkpoint_file
from .prompts import PromptConfig, query_from_quintuple, render_op_prompt, select_history_examples
from .ranking import Op1State, evaluate_ranking, train_op1
from .rng import substream

BRIDGE_ADDR_ENV = "LEAP_BRIDGE_ADDR"


class PipelineError(RuntimeError):
    pass


def _sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _format_value(value) -> str:
    if isinstance(value, float):
        return f"{value:.10g}"
    return str(value)


def write_metrics_csv(rows: list[dict], path: Path) -> None:
    if not rows:
        raise PipelineError("no metric rows to write")
    fields = list(rows[0])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields)
        for row in rows:
            writer.writerow([_format_value(row[f]) for f in fields])


def write_report(results: dict, layout: str, path: Path) -> None:
    """Emit results as JSON (stable key order) or an aligned 4-decimal table."""
    if not results:
        raise ValueError("refusing to write an empty report")
    if layout == "json":
        path.write_text(json.dumps(results, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return
    if layout != "table":
        raise ValueError(f"unknown report layout {layout!r}")
    lines = []
    keys = sorted(results)
    width = max(len(k) for k in keys)
    for key in keys:
        value = results[key]
        if isinstance(value, float):
            rendered = f"{value:.4f}"
        elif isinstance(value, (list, tuple)):
            rendered = " ".join(f"{v:.4f}" if isinstance(v, float) else str(v) for v in value)
        else:
            rendered = str(value)
        lines.append(f"{key.ljust(width)}  {rendered}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


class Pipeline:
    """Shared stage plumbing: artifact paths, manifest bookkeeping."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out = Path(str(cfg["output"]))
        self.out.mkdir(parents=True, exist_ok=True)
        self.manifest: dict = {
            "version": __version__,
            "seed": cfg.seed,
            "config": json.loads(cfg.canonical_json()),
            "config_hash": cfg.config_hash(),
            "inputs": {},
            "stages": {},
            "artifacts": {},
            "complete": False,
        }

    def record_stage(self, name: str, status: str) -> None:
        self.manifest["stages"][name] = status

    def record_artifact(self, name: str, path: Path) -> None:
        self.manifest["artifacts"][name] = str(path)

    def write_manifest(self) -> None:
        path = self.out / "manifest.json"
        path.write_text(json.dumps(self.manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    def ingest(self) -> ParsedDataset:
        path, fmt = self.cfg.require_dataset()
        self.manifest["inputs"][path] = _sha256_file(path)
        with open(path, "rb") as fh:
            parsed = parse_dataset(fh, fmt)
        self.record_stage("ingest", "ok")
        return parsed

    def split(self, parsed: ParsedDataset):
        split = chronological_split(
            parsed.quintuples,
            ratios=self.cfg["split.ratios"],
            boundaries=self.cfg["split.boundaries"],
        )
        self.record_stage("split", "ok")
        return split

    def embed(self, parsed: ParsedDataset) -> EmbeddingStore:
        store_path = self.cfg["embed.store"]
        if store_path:
            provider = read_store_file(store_path)
            self.manifest["inputs"][str(store_path)] = _sha256_file(store_path)
            dim = provider.dim
            embed_cfg = EmbedConfig(parsed.vocab, self.cfg.prompt_config(parsed.epoch), dim, self.cfg.seed)
            store = embed_all(parsed.quintuples, provider, embed_cfg)
        else:
            dim = int(self.cfg["embed.dim"])
            embed_cfg = EmbedConfig(
                parsed.vocab,
                PromptConfig(variant="simple", epoch=parsed.epoch,
                             date_format=str(self.cfg["prompt.date_format"])),
                dim,
                self.cfg.seed,
            )
            store = embed_all(parsed.quintuples, make_hash_provider(dim, self.cfg.seed), embed_cfg)
        out_path = self.out / "embeddings.leapemb"
        write_store_file(store, out_path)
        self.record_artifact("embeddings", out_path)
        self.record_stage("embed", "ok")
        return store


def run_pipeline(cfg: RunConfig, task: str) -> int:
    """ingest -> split -> (embed) -> train -> eval for one task; returns 0
    iff every stage succeeded. Artifacts land in the output directory."""
    pipeline = Pipeline(cfg)
    try:
        parsed = pipeline.ingest()
        split = pipeline.split(parsed)
        if task == "op1":
            _run_op1(pipeline, parsed, split)
        elif task == "mef":
            _run_mef(pipeline, parsed, split)
        elif task == "op2":
            _run_op2(pipeline, parsed, split)
        else:
            raise PipelineError(f"unknown task {task!r}")
        pipeline.manifest["complete"] = True
        return 0
    except Exception as exc:  # noqa: BLE001 - every stage error must reach the manifest
        pipeline.record_stage("error", f"{type(exc).__name__}: {exc}")
        print(f"error: {exc}", file=sys.stderr)
        return 1
    finally:
        pipeline.write_manifest()


def _run_op1(pipeline: Pipeline, parsed: ParsedDataset, split) -> None:
    cfg = pipeline.cfg
    store = pipeline.embed(parsed)
    op1_cfg = cfg.op1_config(text_dim=store.dim)
    state, logs = train_op1(split, store, op1_cfg, parsed.vocab)
    pipeline.record_stage("train-op1", "ok")
    metrics_path = pipeline.out / "metrics.csv"
    write_metrics_csv(logs, metrics_path)
    pipeline.record_artifact("metrics", metrics_path)
    ckpt_path = pipeline.out / "op1.ckpt"
    write_checkpoint_file(state.named_tensors(), ckpt_path)
    pipeline.record_artifact("checkpoint", ckpt_path)
    daily = {g.day: g for g in group_by_day(parsed.quintuples)}
    test_metrics = evaluate_ranking(state, split.test, daily, store, op1_cfg)
    pipeline.record_stage("eval-op1", "ok")
    report_path = pipeline.out / "report.json"
    write_report({"task": "op1", **test_metrics}, "json", report_path)
    pipeline.record_artifact("report", report_path)


def _run_mef(pipeline: Pipeline, parsed: ParsedDataset, split) -> None:
    cfg = pipeline.cfg
    store = pipeline.embed(parsed)
    mef_cfg = cfg.mef_config(input_dim=store.dim)
    labels = build_labels(parsed.quintuples, parsed.vocab.num_relations)
    model, logs = train_mef(split, store, labels, mef_cfg)
    pipeline.record_stage("train-mef", "ok")
    metrics_path = pipeline.out / "metrics.csv"
    write_metrics_csv(logs, metrics_path)
    pipeline.record_artifact("metrics", metrics_path)
    ckpt_path = pipeline.out / "mef.ckpt"
    write_checkpoint_file(model.named_tensors(), ckpt_path)
    pipeline.record_artifact("checkpoint", ckpt_path)
    # test windows may reach back into valid/train history
    report = eval_mef(model, split.test, store, labels, mef_cfg,
                      daily=daily_embeddings(parsed.quintuples, store))
    pipeline.record_stage("eval-mef", "ok")
    pred_path = pipeline.out / "predictions.csv"
    with open(pred_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["day", "relation_id", "prob", "decision", "label"])
        for day_pred in report.predictions:
            for rel in range(len(day_pred.probs)):
                writer.writerow([
                    day_pred.day, rel, _format_value(float(day_pred.probs[rel])),
                    int(day_pred.decisions[rel]), int(day_pred.labels[rel]),
                ])
    pipeline.record_artifact("predictions", pred_path)
    report_path = pipeline.out / "report.json"
    write_report(
        {
            "task": "mef",
            "variant": mef_cfg.variant,
            "f1": report.f1,
            "recall": report.recall,
            "precision": report.precision,
            "days": len(report.predictions),
            "skipped_days": len(report.skipped_days),
        },
        "json",
        report_path,
    )
    pipeline.record_artifact("report", report_path)


def _make_generator(cfg: RunConfig, parsed: ParsedDataset, prompt_cfg: PromptConfig):
    kind = str(cfg["gen.generator"])
    if kind == "baseline":
        return BaselineGenerator(parsed.quintuples, prompt_cfg, parsed.vocab)
    if kind == "bridge":
        addr = cfg["gen.bridge_addr"] or os.environ.get(BRIDGE_ADDR_ENV)
        if not addr:
            raise PipelineError(f"bridge generator needs gen.bridge_addr or ${BRIDGE_ADDR_ENV}")
        client = HttpBridgeClient(str(addr))
        if not client.ping():
            raise PipelineError(f"bridge at {addr} does not answer ping")
        return client
    raise PipelineError(f"unknown generator {kind!r}")


def _run_op2(pipeline: Pipeline, parsed: ParsedDataset, split) -> None:
    cfg = pipeline.cfg
    prompt_cfg = cfg.prompt_config(parsed.epoch)
    data_sorted = sorted(parsed.quintuples, key=lambda q: (q.day, q.uid))
    tasks = build_tasks(split.test, data_sorted, prompt_cfg, parsed.vocab)
    pipeline.record_stage("gen-op2:tasks", "ok")
    generator = _make_generator(cfg, parsed, prompt_cfg)
    results = run_generation(tasks, generator)
    pipeline.record_stage("gen-op2", "ok")
    report = evaluate_generation(results, tasks)
    pipeline.record_stage("eval-op2", "ok")
    metrics_path = pipeline.out / "metrics.csv"
    write_metrics_csv(
        [
            {"uid": uid, "rouge1": r1, "rouge2": r2, "rougeL": rl}
            for uid, r1, r2, rl in report.per_task
        ],
        metrics_path,
    )
    pipeline.record_artifact("metrics", metrics_path)
    report_path = pipeline.out / "report.json"
    write_report(
        {
            "task": "op2",
            "variant": prompt_cfg.variant,
            "rouge1": report.rouge1,
            "rouge2": report.rouge2,
            "rougeL": report.rougeL,
            "tasks": report.tasks,
            "failures": report.failures,
        },
        "json",
        report_path,
    )
    pipeline.record_artifact("report", report_path)


def _collect_overrides(args) -> dict[str, str]:
    overrides: dict[str, str] = {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    for flag, key in _FLAG_KEYS.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = str(value)
    return overrides


_FLAG_KEYS = {
    "dataset": "dataset.path",
    "format": "dataset.format",
    "out": "output",
    "seed": "seed",
    "ratios": "split.ratios",
    "boundaries": "split.boundaries",
    "threads": "threads",
    "dim": "embed.dim",
    "store": "embed.store",
    "variant": "prompt.variant",
    "shots": "prompt.shots",
    "history_days": "op1.history_days",
    "window_days": "mef.window_days",
}


def _add_common(parser: argparse.ArgumentParser, *flags: str) -> None:
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override any config key (repeatable)")
    if "dataset" in flags:
        parser.add_argument("--dataset", help="event file (tsv or jsonl)")
        parser.add_argument("--format", choices=["tsv", "jsonl"])
    if "out" in flags:
        parser.add_argument("--out", help="output directory")
    if "seed" in flags:
        parser.add_argument("--seed", type=int)
    if "split" in flags:
        parser.add_argument("--ratios", help="train,valid,test day fractions")
        parser.add_argument("--boundaries", help="explicit 'b1,b2' split day boundaries")
    if "embed" in flags:
        parser.add_argument("--dim", type=int, help="hash-encoder embedding dim")
        parser.add_argument("--store", help="read embeddings from this store file")
    if "prompt" in flags:
        parser.add_argument("--variant", choices=["few_shot", "zero_shot", "no_text", "simple"])
        parser.add_argument("--shots", type=int)
    if "op1" in flags:
        parser.add_argument("--history-days", dest="history_days", type=int)
    if "mef" in flags:
        parser.add_argument("--window-days", dest="window_days", type=int)
        parser.add_argument("--no-attention", action="store_true",
                            help="ablation: drop the self-attention layer")
    parser.add_argument("--threads", type=int, help="stage-internal parallelism (default 1)")


def _load_cfg(args) -> RunConfig:
    overrides = _collect_overrides(args)
    if getattr(args, "no_attention", False):
        overrides["mef.use_attention"] = "false"
    return RunConfig.load(args.config, overrides)


def _cmd_ingest(args) -> int:
    cfg = _load_cfg(args)
    pipeline = Pipeline(cfg)
    parsed = pipeline.ingest()
    split = pipeline.split(parsed)
    stats = dataset_stats(split, parsed.vocab)
    out_path = pipeline.out / "stats.json"
    out_path.write_text(stats.to_json() + "\n", encoding="utf-8")
    pipeline.record_artifact("stats", out_path)
    pipeline.manifest["complete"] = True
    pipeline.write_manifest()
    print(stats.to_json())
    return 0


def _cmd_stats(args) -> int:
    return _cmd_ingest(args)


def _cmd_split(args) -> int:
    cfg = _load_cfg(args)
    pipeline = Pipeline(cfg)
    parsed = pipeline.ingest()
    split = pipeline.split(parsed)
    summary = {
        "boundary_days": list(split.boundary_days),
        "train_events": len(split.train),
        "valid_events": len(split.valid),
        "test_events": len(split.test),
    }
    out_path = pipeline.out / "split.json"
    out_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    pipeline.record_artifact("split", out_path)
    pipeline.manifest["complete"] = True
    pipeline.write_manifest()
    print(json.dumps(summary, sort_keys=True))
    return 0


def _cmd_prompts(args) -> int:
    cfg = _load_cfg(args)
    pipeline = Pipeline(cfg)
    parsed = pipeline.ingest()
    split = pipeline.split(parsed)
    prompt_cfg = cfg.prompt_config(parsed.epoch)
    data_sorted = sorted(parsed.quintuples, key=lambda q: (q.day, q.uid))
    part = {"train": split.train, "valid": split.valid, "test": split.test}[args.part]
    out_path = pipeline.out / "prompts.jsonl"
    with open(out_path, "w", encoding="utf-8") as fh:
        for q in part:
            query = query_from_quintuple(q)
            examples = select_history_examples(query, data_sorted, prompt_cfg)
            prompt = render_op_prompt(query, examples, prompt_cfg, parsed.vocab)
            record = {"uid": q.uid, "prompt": prompt, "answer": parsed.vocab.entity(q.object_id)}
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
    pipeline.record_artifact("prompts", out_path)
    pipeline.manifest["complete"] = True
    pipeline.write_manifest()
    print(f"wrote {len(part)} prompts to {out_path}")
    return 0


def _cmd_embed(args) -> int:
    cfg = _load_cfg(args)
    pipeline = Pipeline(cfg)
    parsed = pipeline.ingest()
    store = pipeline.embed(parsed)
    pipeline.manifest["complete"] = True
    pipeline.write_manifest()
    print(f"embedded {len(store)} events at dim {store.dim}")
    return 0


def _cmd_task(task: str):
    def run(args) -> int:
        return run_pipeline(_load_cfg(args), task)

    return run


def _cmd_eval_op1(args) -> int:
    cfg = _load_cfg(args)
    pipeline = Pipeline(cfg)
    try:
        parsed = pipeline.ingest()
        split = pipeline.split(parsed)
        store = read_store_file(pipeline.out / "embeddings.leapemb")
        op1_cfg = cfg.op1_config(text_dim=store.dim)
        state = Op1State(parsed.vocab.num_entities, parsed.vocab.num_relations, op1_cfg,
                         substream(cfg.seed, "op1-init"))
        state.load_named(read_checkpoint_file(pipeline.out / "op1.ckpt"))
        daily = {g.day: g for g in group_by_day(parsed.quintuples)}
        metrics = evaluate_ranking(state, split.test, daily, store, op1_cfg)
        write_report({"task": "op1", **metrics}, "json", pipeline.out / "report.json")
        pipeline.manifest["complete"] = True
        print(json.dumps(metrics, sort_keys=True))
        return 0
    except Exception as exc:  # noqa: BLE001
        pipeline.record_stage("error", str(exc))
        print(f"error: {exc}", file=sys.stderr)
        return 1
    finally:
        pipeline.write_manifest()


def _cmd_report(args) -> int:
    source = Path(args.input)
    results = json.loads(source.read_text(encoding="utf-8"))
    write_report(results, args.layout, Path(args.output_file))
    print(Path(args.output_file).read_text(encoding="utf-8"), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="leap", description=__doc__)
    parser.add_argument("--version", action="version", version=f"leap {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    for task, helptext in (
        ("op1", "full ranking-prediction pipeline"),
        ("op2", "full generative-prediction pipeline"),
        ("mef", "full multi-event forecasting pipeline"),
    ):
        p = sub.add_parser(task, help=helptext)
        _add_common(p, "dataset", "out", "seed", "split", "embed", "prompt", "op1", "mef")
        p.set_defaults(func=_cmd_task(task))

    p = sub.add_parser("ingest", help="parse, split, and report dataset statistics")
    _add_common(p, "dataset", "out", "seed", "split")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("stats", help="alias of ingest")
    _add_common(p, "dataset", "out", "seed", "split")
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("split", help="compute and record the chronological split")
    _add_common(p, "dataset", "out", "seed", "split")
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("prompts", help="dump rendered prompts as JSONL")
    _add_common(p, "dataset", "out", "seed", "split", "prompt")
    p.add_argument("--part", choices=["train", "valid", "test"], default="test")
    p.set_defaults(func=_cmd_prompts)

    p = sub.add_parser("embed", help="embed every event into a binary store")
    _add_common(p, "dataset", "out", "seed", "split", "embed")
    p.set_defaults(func=_cmd_embed)

    for name, task in (("train-op1", "op1"), ("train-mef", "mef"),
                       ("gen-op2", "op2"), ("eval-op2", "op2"), ("eval-mef", "mef")):
        p = sub.add_parser(name, help=f"{task} stage (runs the {task} pipeline)")
        _add_common(p, "dataset", "out", "seed", "split", "embed", "prompt", "op1", "mef")
        p.set_defaults(func=_cmd_task(task))

    p = sub.add_parser("eval-op1", help="evaluate a saved ranking checkpoint on the test split")
    _add_common(p, "dataset", "out", "seed", "split", "op1")
    p.set_defaults(func=_cmd_eval_op1)

    p = sub.add_parser("report", help="re-emit a report JSON as table or JSON")
    p.add_argument("input", help="report JSON file")
    p.add_argument("output_file", help="destination file")
    p.add_argument("--layout", choices=["json", "table"], default="table")
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
