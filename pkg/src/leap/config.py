"""Run configuration: a flat key-value file with dotted section keys,
mirrored one-to-one by ``--set key=value`` overrides on the command line.

Unknown keys are rejected so typos fail loudly. All randomness in a run
flows from the single ``seed`` through named substreams.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .forecast import MefConfig
from .prompts import PromptConfig
from .ranking import Op1Config


def _parse_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {raw!r}")


def _parse_ratios(raw: str) -> tuple[float, float, float]:
    parts = [float(p) for p in raw.split(",")]
    if len(parts) != 3:
        raise ValueError(f"expected three comma-separated ratios, got {raw!r}")
    return (parts[0], parts[1], parts[2])


def _parse_boundaries(raw: str):
    if raw.strip().lower() in ("", "none"):
        return None
    parts = [int(p) for p in raw.split(",")]
    if len(parts) != 2:
        raise ValueError(f"expected two comma-separated day indices, got {raw!r}")
    return (parts[0], parts[1])


def _parse_str(raw: str) -> str:
    raw = raw.strip()
    if len(raw) >= 2 and raw[0] == raw[-1] and raw[0] in "'\"":
        raw = raw[1:-1]
    return raw


def _parse_optional_str(raw: str):
    value = _parse_str(raw)
    return None if value.lower() in ("", "none") else value


# key -> (default, parser); the single source of truth for the run surface
KNOWN_KEYS: dict[str, tuple[object, object]] = {
    "dataset.path": (None, _parse_optional_str),
    "dataset.format": ("tsv", _parse_str),
    "split.ratios": ((0.8, 0.1, 0.1), _parse_ratios),
    "split.boundaries": (None, _parse_boundaries),
    "seed": (0, int),
    "output": ("leap-out", _parse_str),
    "threads": (1, int),
    "embed.dim": (64, int),
    "embed.store": (None, _parse_optional_str),
    "prompt.variant": ("few_shot", _parse_str),
    "prompt.shots": (5, int),
    "prompt.history_scope": ("same_subject_first", _parse_str),
    "prompt.date_format": ("%Y-%m-%d", _parse_str),
    "op1.history_days": (7, int),
    "op1.entity_dim": (200, int),
    "op1.rgcn_layers": (2, int),
    "op1.rgcn_dropout": (0.2, float),
    "op1.conv_kernels": (32, int),
    "op1.conv_width": (3, int),
    "op1.lr": (1e-3, float),
    "op1.weight_decay": (1e-6, float),
    "op1.epochs": (40, int),
    "op1.patience": (5, int),
    "op1.grad_clip": (1.0, float),
    "op1.use_text": (True, _parse_bool),
    "mef.window_days": (7, int),
    "mef.model_dim": (1024, int),
    "mef.lr": (5e-5, float),
    "mef.weight_decay": (1e-2, float),
    "mef.batch_days": (2, int),
    "mef.grad_clip": (1.0, float),
    "mef.epochs": (40, int),
    "mef.patience": (5, int),
    "mef.threshold": (0.5, float),
    "mef.use_attention": (True, _parse_bool),
    "mef.per_day_mean": (False, _parse_bool),
    "gen.generator": ("baseline", _parse_str),
    "gen.bridge_addr": (None, _parse_optional_str),
}


class ConfigError(ValueError):
    pass


def parse_config_file(path: str | Path) -> dict[str, str]:
    """Read ``key = value`` lines; '#' starts a comment, blanks are skipped."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = stripped.split("=", 1)
        key = key.strip()
        if key not in KNOWN_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        raw[key] = value.strip()
    return raw


@dataclass
class RunConfig:
    """Typed view over the flat key-value map."""

    values: dict[str, object]

    @classmethod
    def load(cls, config_path: str | None, overrides: dict[str, str]) -> "RunConfig":
        values = {key: default for key, (default, _) in KNOWN_KEYS.items()}
        staged: dict[str, str] = {}
        if config_path:
            staged.update(parse_config_file(config_path))
        for key, value in overrides.items():
            if key not in KNOWN_KEYS:
                raise ConfigError(f"unknown config key {key!r}")
            staged[key] = value
        for key, raw in staged.items():
            _, parser = KNOWN_KEYS[key]
            try:
                values[key] = parser(raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key}: {exc}") from None
        return cls(values)

    def __getitem__(self, key: str):
        return self.values[key]

    @property
    def seed(self) -> int:
        return int(self.values["seed"])

    def require_dataset(self) -> tuple[str, str]:
        path = self.values["dataset.path"]
        if not path:
            raise ConfigError("dataset.path is required")
        if not Path(path).exists():
            raise ConfigError(f"dataset.path {path!r} does not exist")
        fmt = str(self.values["dataset.format"])
        if fmt not in ("tsv", "jsonl"):
            raise ConfigError(f"dataset.format must be tsv or jsonl, got {fmt!r}")
        return str(path), fmt

    def prompt_config(self, epoch) -> PromptConfig:
        return PromptConfig(
            variant=str(self.values["prompt.variant"]),
            shots=int(self.values["prompt.shots"]),
            history_scope=str(self.values["prompt.history_scope"]),
            date_format=str(self.values["prompt.date_format"]),
            epoch=epoch,
        )

    def op1_config(self, text_dim: int) -> Op1Config:
        v = self.values
        return Op1Config(
            history_days=int(v["op1.history_days"]),
            entity_dim=int(v["op1.entity_dim"]),
            rgcn_layers=int(v["op1.rgcn_layers"]),
            rgcn_dropout=float(v["op1.rgcn_dropout"]),
            text_dim=text_dim,
            conv_kernels=int(v["op1.conv_kernels"]),
            conv_width=int(v["op1.conv_width"]),
            lr=float(v["op1.lr"]),
            weight_decay=float(v["op1.weight_decay"]),
            epochs=int(v["op1.epochs"]),
            patience=int(v["op1.patience"]),
            grad_clip=float(v["op1.grad_clip"]),
            use_text=bool(v["op1.use_text"]),
            seed=self.seed,
        )

    def mef_config(self, input_dim: int) -> MefConfig:
        v = self.values
        return MefConfig(
            window_days=int(v["mef.window_days"]),
            input_dim=input_dim,
            model_dim=int(v["mef.model_dim"]),
            lr=float(v["mef.lr"]),
            weight_decay=float(v["mef.weight_decay"]),
            batch_days=int(v["mef.batch_days"]),
            grad_clip=float(v["mef.grad_clip"]),
            epochs=int(v["mef.epochs"]),
            patience=int(v["mef.patience"]),
            threshold=float(v["mef.threshold"]),
            use_attention=bool(v["mef.use_attention"]),
            per_day_mean=bool(v["mef.per_day_mean"]),
            seed=self.seed,
        )

    def canonical_json(self) -> str:
        def encode(value):
            if isinstance(value, tuple):
                return list(value)
            return value

        return json.dumps({k: encode(v) for k, v in sorted(self.values.items())}, sort_keys=True)

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()
