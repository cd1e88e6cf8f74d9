"""Command-line entry points mirroring the four bridge operations:
export-embeddings, serve, finetune-mlm, finetune-seq2seq."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import BridgeConfig, MlmTuning, Seq2SeqTuning
from .embed import export_embeddings, read_prompts_jsonl
from .mlm import finetune_mlm
from .models import ModelLoadError
from .seq2seq import finetune_seq2seq
from .serve import GenerationBackend, make_http_server


def _base_config(args) -> BridgeConfig:
    return BridgeConfig(
        encoder_model=args.encoder,
        generator_model=args.generator,
        pooling=args.pooling,
        representation=args.representation,
        device=args.device,
        max_new_tokens=args.max_new_tokens,
        beam_size=args.beam_size,
        seed=args.seed,
        mlm=MlmTuning(
            lr=args.mlm_lr, epochs=args.mlm_epochs, weight_decay=args.mlm_weight_decay,
            block_size=args.block_size, mask_probability=args.mask_probability,
            batch_size=args.mlm_batch_size,
        ),
        seq2seq=Seq2SeqTuning(
            lr=args.s2s_lr, epochs=args.s2s_epochs, weight_decay=args.s2s_weight_decay,
            batch_size=args.s2s_batch_size,
        ),
    )


def _add_model_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--encoder", default="roberta-large",
                        help="encoder checkpoint, hub name, or tiny-random[:k=v,...]")
    parser.add_argument("--generator", default="google/flan-t5-base",
                        help="generator checkpoint, hub name, or tiny-random[:k=v,...]")
    parser.add_argument("--pooling", choices=["all_tokens", "exclude_special"], default="all_tokens")
    parser.add_argument("--representation", choices=["hidden", "logits"], default="hidden")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--max-new-tokens", type=int, default=16)
    parser.add_argument("--beam-size", type=int, default=1)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--mlm-lr", type=float, default=2e-5)
    parser.add_argument("--mlm-epochs", type=int, default=40)
    parser.add_argument("--mlm-weight-decay", type=float, default=1e-2)
    parser.add_argument("--mlm-batch-size", type=int, default=8)
    parser.add_argument("--block-size", type=int, default=512)
    parser.add_argument("--mask-probability", type=float, default=0.15)
    parser.add_argument("--s2s-lr", type=float, default=3e-4)
    parser.add_argument("--s2s-epochs", type=int, default=5)
    parser.add_argument("--s2s-weight-decay", type=float, default=1e-2)
    parser.add_argument("--s2s-batch-size", type=int, default=2)


def _cmd_export(args) -> int:
    cfg = _base_config(args)
    prompts = read_prompts_jsonl(args.prompts)
    meta = export_embeddings(prompts, cfg, args.out)
    print(json.dumps(meta, sort_keys=True))
    return 0


def _cmd_serve(args) -> int:
    cfg = _base_config(args)
    corpus = None
    if args.corpus:
        corpus = Path(args.corpus).read_text(encoding="utf-8").splitlines()
    backend = GenerationBackend(cfg, corpus=corpus)
    server = make_http_server(backend, args.host, args.port)
    print(f"serving on http://{server.server_address[0]}:{server.server_address[1]}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def _cmd_finetune_mlm(args) -> int:
    cfg = _base_config(args)
    corpus = [line for line in Path(args.corpus).read_text(encoding="utf-8").splitlines() if line.strip()]
    report = finetune_mlm(corpus, cfg, args.out)
    print(json.dumps({
        "perplexity_before": report.perplexity_before,
        "perplexity_after": report.perplexity_after,
        "blocks": report.blocks,
        "checkpoint": report.checkpoint,
    }, sort_keys=True))
    return 0


def _cmd_finetune_seq2seq(args) -> int:
    cfg = _base_config(args)
    pairs = []
    for line in Path(args.pairs).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        record = json.loads(line)
        pairs.append((str(record["prompt"]), str(record["answer"])))
    report = finetune_seq2seq(pairs, cfg, args.out)
    print(json.dumps({
        "rouge1_before": report.before.rouge1,
        "rouge1_after": report.after.rouge1,
        "pairs": report.pairs,
        "checkpoint": report.checkpoint,
    }, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="leap-bridge", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export-embeddings", help="encode a prompts JSONL into a binary store")
    p.add_argument("--prompts", required=True, help="JSONL of {uid, prompt}")
    p.add_argument("--out", required=True, help="output store file")
    _add_model_flags(p)
    p.set_defaults(func=_cmd_export)

    p = sub.add_parser("serve", help="serve generation over HTTP POST /generate")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8750)
    p.add_argument("--corpus", help="text file used to train a tiny-random tokenizer")
    _add_model_flags(p)
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("finetune-mlm", help="masked-LM tuning of the encoder")
    p.add_argument("--corpus", required=True, help="one training text per line")
    p.add_argument("--out", required=True, help="checkpoint directory")
    _add_model_flags(p)
    p.set_defaults(func=_cmd_finetune_mlm)

    p = sub.add_parser("finetune-seq2seq", help="QA tuning of the generator")
    p.add_argument("--pairs", required=True, help="JSONL of {prompt, answer}")
    p.add_argument("--out", required=True, help="checkpoint directory")
    _add_model_flags(p)
    p.set_defaults(func=_cmd_finetune_seq2seq)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ModelLoadError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
