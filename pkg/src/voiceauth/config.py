"""Pipeline configuration: versioned INI file pointing at trained artifacts."""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path

from .exceptions import ConfigError

CONFIG_VERSION = 1


@dataclass
class PipelineConfig:
    """Paths of trained artifacts plus service settings.

    All paths are stored relative to the config file and resolved on load.
    """

    root: Path
    embedder_path: Path
    spoof_scorer_path: Path
    liveness_scorer_path: Path
    fusion_path: Path
    codebook_path: Path
    templates_path: Path
    credentials_path: Path
    endpoint: str = "http://127.0.0.1:8799"
    service_id: str = "default"
    seed: int = 0

    def validate(self) -> None:
        for name in ("embedder_path", "spoof_scorer_path",
                     "liveness_scorer_path", "fusion_path", "codebook_path"):
            path = getattr(self, name)
            if not path.exists():
                raise ConfigError(f"artifact missing: {name} -> {path}")


def save_config(cfg: PipelineConfig, path: str | Path) -> None:
    parser = configparser.ConfigParser()
    parser["voiceauth"] = {"version": str(CONFIG_VERSION)}
    parser["artifacts"] = {
        "embedder": cfg.embedder_path.name,
        "spoof_scorer": cfg.spoof_scorer_path.name,
        "liveness_scorer": cfg.liveness_scorer_path.name,
        "fusion": cfg.fusion_path.name,
        "codebook": cfg.codebook_path.name,
        "templates": cfg.templates_path.name,
        "credentials": cfg.credentials_path.name,
    }
    parser["service"] = {"endpoint": cfg.endpoint, "service_id": cfg.service_id}
    parser["runtime"] = {"seed": str(cfg.seed)}
    with open(path, "w") as fh:
        parser.write(fh)


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    parser.read(path)
    try:
        version = parser.getint("voiceauth", "version")
        if version != CONFIG_VERSION:
            raise ConfigError(f"config version {version} != {CONFIG_VERSION}")
        art = parser["artifacts"]
        root = path.parent
        cfg = PipelineConfig(
            root=root,
            embedder_path=root / art["embedder"],
            spoof_scorer_path=root / art["spoof_scorer"],
            liveness_scorer_path=root / art["liveness_scorer"],
            fusion_path=root / art["fusion"],
            codebook_path=root / art["codebook"],
            templates_path=root / art["templates"],
            credentials_path=root / art["credentials"],
            endpoint=parser.get("service", "endpoint"),
            service_id=parser.get("service", "service_id"),
            seed=parser.getint("runtime", "seed", fallback=0),
        )
    except (configparser.Error, KeyError) as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    return cfg
