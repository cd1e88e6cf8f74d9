"""Embedding export: encode per-event prompts and emit the binary store.

Pooling is a mean over token positions, either across all tokens or with
special tokens excluded; the representation is the encoder's hidden states
(dim = hidden size) or, behind a flag, the LM-head logits (dim = vocab
size). A sidecar ``<out>.meta.json`` records the provenance: model,
pooling, representation, dim, and seed.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .config import BridgeConfig
from .models import load_encoder
from .storefmt import write_store_file


def read_prompts_jsonl(path) -> list[tuple[int, str]]:
    prompts = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        record = json.loads(line)
        prompts.append((int(record["uid"]), str(record["prompt"])))
    return prompts


def encode_prompt(prompt: str, tokenizer, model, cfg: BridgeConfig) -> np.ndarray:
    encoded = tokenizer(
        prompt,
        return_tensors="pt",
        truncation=True,
        max_length=cfg.mlm.block_size,
        return_special_tokens_mask=True,
    )
    special_mask = encoded.pop("special_tokens_mask")[0].bool()
    encoded = {k: v.to(cfg.device) for k, v in encoded.items()}
    with torch.no_grad():
        if cfg.representation == "logits":
            tokens = model(**encoded).logits[0]
        else:
            base = getattr(model, model.base_model_prefix)
            tokens = base(**encoded).last_hidden_state[0]
    if cfg.pooling == "exclude_special":
        keep = ~special_mask.to(tokens.device)
        if int(keep.sum()) > 0:
            tokens = tokens[keep]
    return tokens.mean(dim=0).cpu().numpy().astype(np.float32)


def export_embeddings(
    prompts: Sequence[tuple[int, str]],
    cfg: BridgeConfig,
    out_path,
    encoder=None,
) -> dict:
    """Encode every (uid, prompt) pair and write the store plus metadata.

    Returns the metadata dict. ``encoder`` may pass a preloaded
    (tokenizer, model) pair, e.g. a fine-tuned checkpoint.
    """
    texts = [prompt for _, prompt in prompts]
    tokenizer, model = encoder if encoder is not None else load_encoder(cfg, corpus=texts)
    torch.manual_seed(cfg.seed)
    records: dict[int, np.ndarray] = {}
    dim = None
    for uid, prompt in prompts:
        if uid in records:
            raise ValueError(f"duplicate uid {uid} in prompts")
        vector = encode_prompt(prompt, tokenizer, model, cfg)
        if dim is None:
            dim = int(vector.shape[0])
        records[uid] = vector
    if dim is None:
        raise ValueError("no prompts to embed")
    write_store_file(records, dim, out_path)
    meta = {
        "model": cfg.encoder_model,
        "pooling": cfg.pooling,
        "representation": cfg.representation,
        "dim": dim,
        "count": len(records),
        "seed": cfg.seed,
    }
    Path(str(out_path) + ".meta.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return meta
