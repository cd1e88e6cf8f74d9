import json
from pathlib import Path

import numpy as np
import pytest

from leap.embeddings import StoreFormatError, read_store_file
from leap_bridge.config import BridgeConfig
from leap_bridge.embed import export_embeddings, read_prompts_jsonl
from leap_bridge.models import load_encoder
from leap_bridge.storefmt import read_store_file as bridge_read

TINY = "tiny-random:hidden=16,layers=1,heads=2"


def sample_prompts(n=5):
    return [
        (
            uid,
            f"Subject: actor-{uid};\nRelation: kind-{uid % 3};\nObject: actor-{(uid + 1) % 4};\n"
            f"Timestamp: 2010-01-{uid + 1:02d};\nText Summary: event number {uid}",
        )
        for uid in range(n)
    ]


class TestExport:
    def test_primary_reader_accepts_exported_file(self, tmp_path):
        out = tmp_path / "vectors.leapemb"
        cfg = BridgeConfig(encoder_model=TINY, seed=0)
        meta = export_embeddings(sample_prompts(), cfg, out)
        store = read_store_file(out)
        assert len(store) == 5
        assert store.dim == meta["dim"] == 16
        for uid in range(5):
            assert np.isfinite(store.vector(uid)).all()

    def test_metadata_records_provenance(self, tmp_path):
        out = tmp_path / "vectors.leapemb"
        cfg = BridgeConfig(encoder_model=TINY, pooling="exclude_special", seed=1)
        export_embeddings(sample_prompts(), cfg, out)
        meta = json.loads(Path(str(out) + ".meta.json").read_text())
        assert meta["pooling"] == "exclude_special"
        assert meta["model"] == TINY
        assert meta["seed"] == 1

    def test_repeat_export_is_identical(self, tmp_path):
        cfg = BridgeConfig(encoder_model=TINY, seed=2)
        a, b = tmp_path / "a.leapemb", tmp_path / "b.leapemb"
        export_embeddings(sample_prompts(), cfg, a)
        export_embeddings(sample_prompts(), cfg, b)
        _, records_a = bridge_read(a)
        _, records_b = bridge_read(b)
        for uid in records_a:
            assert np.abs(records_a[uid] - records_b[uid]).max() <= 1e-5

    def test_pooling_modes_differ(self, tmp_path):
        prompts = sample_prompts(3)
        va = tmp_path / "all.leapemb"
        vx = tmp_path / "nospecial.leapemb"
        export_embeddings(prompts, BridgeConfig(encoder_model=TINY, seed=0), va)
        export_embeddings(
            prompts, BridgeConfig(encoder_model=TINY, pooling="exclude_special", seed=0), vx
        )
        _, all_tokens = bridge_read(va)
        _, exclude = bridge_read(vx)
        assert any(np.abs(all_tokens[uid] - exclude[uid]).max() > 1e-6 for uid in all_tokens)

    def test_logits_representation_uses_vocab_dim(self, tmp_path):
        prompts = sample_prompts(3)
        cfg = BridgeConfig(encoder_model=TINY, representation="logits", seed=0)
        out = tmp_path / "logits.leapemb"
        meta = export_embeddings(prompts, cfg, out)
        tokenizer, _ = load_encoder(cfg, corpus=[p for _, p in prompts])
        assert meta["dim"] == len(tokenizer)
        assert read_store_file(out).dim == len(tokenizer)

    def test_duplicate_uid_rejected(self, tmp_path):
        prompts = sample_prompts(2) + [(0, "again")]
        with pytest.raises(ValueError, match="duplicate uid"):
            export_embeddings(prompts, BridgeConfig(encoder_model=TINY, seed=0), tmp_path / "x")

    def test_truncated_file_fails_primary_validation(self, tmp_path):
        out = tmp_path / "vectors.leapemb"
        export_embeddings(sample_prompts(), BridgeConfig(encoder_model=TINY, seed=0), out)
        clipped = tmp_path / "clipped.leapemb"
        clipped.write_bytes(out.read_bytes()[:-2])
        with pytest.raises(StoreFormatError):
            read_store_file(clipped)


class TestPromptIngestion:
    def test_reads_jsonl(self, tmp_path):
        path = tmp_path / "prompts.jsonl"
        path.write_text(
            '{"uid": 3, "prompt": "alpha"}\n\n{"uid": 5, "prompt": "beta"}\n', encoding="utf-8"
        )
        assert read_prompts_jsonl(path) == [(3, "alpha"), (5, "beta")]
