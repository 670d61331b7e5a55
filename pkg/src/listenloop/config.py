"""Single-file YAML configuration for the service and CLI.

Environment variables LISTENLOOP_PORT and LISTENLOOP_STORAGE override the
file values, so deployments can relocate the store without editing config.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

ENV_PORT = "LISTENLOOP_PORT"
ENV_STORAGE = "LISTENLOOP_STORAGE"


@dataclass(frozen=True)
class LabelerConfig:
    labeler_id: str
    token: str
    group: str


@dataclass
class AppConfig:
    storage: str = "listenloop.db"
    port: int = 8080
    budget: int = 400
    n_smax: int = 15000
    n_mmax: int = 5000
    seed: int = 0
    audio_root: str | None = None
    console_dir: str | None = None
    sidecars: list[str] = field(default_factory=list)
    manifests: list[str] = field(default_factory=list)
    operator_token: str = "operator-token"
    labelers: list[LabelerConfig] = field(default_factory=list)
    auto_approve_suggestions: bool = True
    seed_classes: list[str] = field(default_factory=list)

    @property
    def group_ids(self) -> list[str]:
        return sorted({l.group for l in self.labelers})


def load_config(path: str | Path | None) -> AppConfig:
    """Read the YAML config (missing path gives defaults), then apply
    environment overrides."""
    data: dict = {}
    if path is not None:
        text = Path(path).read_text()
        data = yaml.safe_load(text) or {}
    labelers = [
        LabelerConfig(
            labeler_id=str(entry["labeler_id"]),
            token=str(entry["token"]),
            group=str(entry["group"]),
        )
        for entry in data.get("labelers", [])
    ]
    config = AppConfig(
        storage=str(data.get("storage", AppConfig.storage)),
        port=int(data.get("port", AppConfig.port)),
        budget=int(data.get("budget", AppConfig.budget)),
        n_smax=int(data.get("n_smax", AppConfig.n_smax)),
        n_mmax=int(data.get("n_mmax", AppConfig.n_mmax)),
        seed=int(data.get("seed", AppConfig.seed)),
        audio_root=data.get("audio_root"),
        console_dir=data.get("console_dir"),
        sidecars=[str(p) for p in data.get("sidecars", [])],
        manifests=[str(p) for p in data.get("manifests", [])],
        operator_token=str(data.get("operator_token", AppConfig.operator_token)),
        labelers=labelers,
        auto_approve_suggestions=bool(data.get("auto_approve_suggestions", True)),
        seed_classes=[str(c) for c in data.get("seed_classes", [])],
    )
    if os.environ.get(ENV_PORT):
        config.port = int(os.environ[ENV_PORT])
    if os.environ.get(ENV_STORAGE):
        config.storage = os.environ[ENV_STORAGE]
    return config
