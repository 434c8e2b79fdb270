"""INI-style pipeline config with dotted-key overrides and labeled seed derivation."""

from __future__ import annotations

import configparser
import hashlib
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .node2vec import SgnsConfig, WalkConfig
from .recommender import ModelConfig, TrainConfig

DEFAULTS: dict[str, dict[str, str]] = {
    "paths": {
        "train_news": "",
        "train_behaviors": "",
        "dev_news": "",
        "dev_behaviors": "",
        "keywords": "",
        "embeddings": "",
        "work_dir": "work",
    },
    "run": {"seed": "0", "strict": "false", "skip_bad_rows": "false", "threads": "0"},
    "prompts": {"echo": "true"},
    "graphs": {"window": "2", "intra_per_distinct_item": "false", "per_impression_histories": "false"},
    "node2vec": {
        "p": "1.0",
        "q": "1.0",
        "walk_length": "40",
        "walks_per_node": "10",
        "context_window": "5",
        "negatives": "5",
        "epochs": "5",
        "learning_rate": "0.025",
        "min_learning_rate": "0.0001",
    },
    "fusion": {"dims": "100,100,100", "segments": "id,item_item_kw,intra_item_kw", "strict_llm": "true"},
    "model": {"d_llm": "4096", "heads": "15", "head_dim": "20", "attn_dim": "200"},
    "train": {
        "negatives": "4",
        "batch_size": "512",
        "learning_rate": "0.0002",
        "epochs": "5",
        "max_history": "50",
        "freeze_projection": "false",
    },
    "embedding_service": {"endpoint": "", "batch_size": "32", "token": "", "attempts": "3"},
}

SEGMENTS = ("id", "item_item_kw", "intra_item_kw")


class ConfigError(ValueError):
    pass


def derive_seed(seed: int, label: str) -> int:
    """Stable 32-bit seed for a named stage."""
    digest = hashlib.sha256(f"{seed}:{label}".encode()).digest()
    return int.from_bytes(digest[:4], "little")


@dataclass
class PipelineConfig:
    parser: configparser.ConfigParser
    base_dir: Path

    def get(self, section: str, key: str) -> str:
        return self.parser.get(section, key)

    def getint(self, section: str, key: str) -> int:
        return self.parser.getint(section, key)

    def getfloat(self, section: str, key: str) -> float:
        return self.parser.getfloat(section, key)

    def getbool(self, section: str, key: str) -> bool:
        return self.parser.getboolean(section, key)

    def path(self, key: str, required: bool = True) -> Path | None:
        raw = self.get("paths", key).strip()
        if not raw:
            if required:
                raise ConfigError(f"paths.{key} is not set")
            return None
        p = Path(raw)
        return p if p.is_absolute() else self.base_dir / p

    def require_existing(self, *keys: str) -> list[Path]:
        out = []
        for key in keys:
            p = self.path(key)
            if not p.exists():
                raise FileNotFoundError(f"paths.{key}: {p} does not exist")
            out.append(p)
        return out

    @property
    def work_dir(self) -> Path:
        return self.path("work_dir")

    def workdir(self, sub: str) -> Path:
        d = self.work_dir / sub
        d.mkdir(parents=True, exist_ok=True)
        return d

    @property
    def seed(self) -> int:
        return self.getint("run", "seed")

    def stage_seed(self, label: str) -> int:
        return derive_seed(self.seed, label)

    @property
    def strict(self) -> bool:
        return self.getbool("run", "strict")

    @property
    def dims(self) -> tuple[int, int, int]:
        parts = [int(x) for x in self.get("fusion", "dims").split(",")]
        if len(parts) != 3 or min(parts) < 1:
            raise ConfigError(f"fusion.dims must be three positive ints, got {parts}")
        return tuple(parts)  # type: ignore[return-value]

    @property
    def segments(self) -> tuple[bool, bool, bool]:
        names = {s.strip() for s in self.get("fusion", "segments").split(",") if s.strip()}
        unknown = names - set(SEGMENTS)
        if unknown:
            raise ConfigError(f"unknown fusion segments {sorted(unknown)}")
        return tuple(s in names for s in SEGMENTS)  # type: ignore[return-value]

    def walk_config(self, label: str) -> WalkConfig:
        s = "node2vec"
        return WalkConfig(
            p=self.getfloat(s, "p"),
            q=self.getfloat(s, "q"),
            walk_length=self.getint(s, "walk_length"),
            walks_per_node=self.getint(s, "walks_per_node"),
            seed=self.stage_seed(f"walks:{label}"),
        )

    def sgns_config(self, label: str, dim: int) -> SgnsConfig:
        s = "node2vec"
        return SgnsConfig(
            dim=dim,
            context_window=self.getint(s, "context_window"),
            negatives=self.getint(s, "negatives"),
            epochs=self.getint(s, "epochs"),
            learning_rate=self.getfloat(s, "learning_rate"),
            min_learning_rate=self.getfloat(s, "min_learning_rate"),
            seed=self.stage_seed(f"sgns:{label}"),
        )

    def model_config(self) -> ModelConfig:
        s = "model"
        return ModelConfig(
            d_llm=self.getint(s, "d_llm"),
            d_out=sum(self.dims),
            heads=self.getint(s, "heads"),
            head_dim=self.getint(s, "head_dim"),
            attn_dim=self.getint(s, "attn_dim"),
        )

    def train_config(self) -> TrainConfig:
        s = "train"
        return TrainConfig(
            negatives=self.getint(s, "negatives"),
            batch_size=self.getint(s, "batch_size"),
            learning_rate=self.getfloat(s, "learning_rate"),
            epochs=self.getint(s, "epochs"),
            max_history=self.getint(s, "max_history"),
            seed=self.stage_seed("train"),
        )

    def dump(self) -> str:
        lines = []
        for section in self.parser.sections():
            lines.append(f"[{section}]")
            for key, value in self.parser.items(section):
                lines.append(f"{key} = {value}")
            lines.append("")
        return "\n".join(lines)


def load_config(path: str | os.PathLike | None, overrides: Iterable[str] = ()) -> PipelineConfig:
    """Defaults, then the file (relative paths resolve against its directory), then ``section.key=value`` overrides."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.read_dict(DEFAULTS)
    base = Path.cwd()
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"config file {path} does not exist")
        parser.read(path, encoding="utf-8")
        base = path.resolve().parent
    for item in overrides:
        key, sep, value = item.partition("=")
        section, dot, option = key.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(f"override {item!r} is not section.key=value")
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, option, value.strip())
    return PipelineConfig(parser, base)


def write_config(path: str | os.PathLike, values: dict[str, dict[str, object]]) -> None:
    parser = configparser.ConfigParser(interpolation=None)
    for section, items in values.items():
        parser[section] = {k: str(v) for k, v in items.items()}
    with open(path, "w", encoding="utf-8") as fh:
        parser.write(fh)
