"""Workspace configuration: flat ``section.key = value`` text, overridable
through ``VULNCURE_<SECTION>_<KEY>`` environment variables."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

ENV_PREFIX = "VULNCURE_"

DEFAULTS = {
    "paths.feeds_dir": "feeds",
    "paths.fixtures_dir": "pages",
    "paths.decisions_file": "decisions.tsv",
    "paths.mapping_file": "out/mapping.tsv",
    "paths.model_file": "out/model.json",
    "paths.output_dir": "out",
    "paths.cwe_catalog": "cwe_catalog.tsv",
    "paths.vendor_lists": "",
    "run.seed": "0",
    "dates.use_min": "false",
    "severity.model": "dnn",
    "severity.split_stratify_on": "v3",
    "severity.split_ratio": "0.8",
    "severity.aer_zero_policy": "exclude",
    "severity.epochs": "100",
    "severity.batch_size": "128",
    "severity.learning_rate": "0.001",
}


class ConfigError(ValueError):
    pass


def parse_config_text(text: str) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = line.split("=", 1)
        out[key.strip().lower()] = value.strip()
    return out


def _env_key(key: str) -> str:
    return ENV_PREFIX + key.upper().replace(".", "_")


def _as_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off", ""):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


@dataclass
class WorkspaceConfig:
    root: Path
    feeds_dir: Path
    fixtures_dir: Path
    decisions_file: Path
    mapping_file: Path
    model_file: Path
    output_dir: Path
    cwe_catalog: Path
    vendor_lists: list[Path]
    seed: int
    use_min_page_date: bool = False
    model: str = "dnn"
    split_stratify_on: str = "v3"
    split_ratio: float = 0.8
    aer_zero_policy: str = "exclude"
    epochs: int = 100
    batch_size: int = 128
    learning_rate: float = 0.001
    raw: dict = field(default_factory=dict)

    @classmethod
    def load(
        cls,
        path: Optional[str | Path] = None,
        env: Optional[Mapping[str, str]] = None,
        seed: Optional[int] = None,
    ) -> "WorkspaceConfig":
        env = os.environ if env is None else env
        values = dict(DEFAULTS)
        root = Path.cwd()
        if path is not None:
            path = Path(path)
            values.update(parse_config_text(path.read_text(encoding="utf-8")))
            root = path.resolve().parent
        for key in DEFAULTS:
            if _env_key(key) in env:
                values[key] = env[_env_key(key)]
        unknown = sorted(set(values) - set(DEFAULTS))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        if seed is not None:
            values["run.seed"] = str(seed)

        def p(key: str) -> Path:
            return (root / values[key]).resolve()

        try:
            cfg = cls(
                root=root,
                feeds_dir=p("paths.feeds_dir"),
                fixtures_dir=p("paths.fixtures_dir"),
                decisions_file=p("paths.decisions_file"),
                mapping_file=p("paths.mapping_file"),
                model_file=p("paths.model_file"),
                output_dir=p("paths.output_dir"),
                cwe_catalog=p("paths.cwe_catalog"),
                vendor_lists=[
                    (root / s.strip()).resolve()
                    for s in values["paths.vendor_lists"].split(",")
                    if s.strip()
                ],
                seed=int(values["run.seed"]),
                use_min_page_date=_as_bool(values["dates.use_min"]),
                model=values["severity.model"].lower(),
                split_stratify_on=values["severity.split_stratify_on"].lower(),
                split_ratio=float(values["severity.split_ratio"]),
                aer_zero_policy=values["severity.aer_zero_policy"].lower(),
                epochs=int(values["severity.epochs"]),
                batch_size=int(values["severity.batch_size"]),
                learning_rate=float(values["severity.learning_rate"]),
                raw=values,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if cfg.model not in ("dnn", "linear"):
            raise ConfigError("severity.model must be dnn or linear")
        if cfg.split_stratify_on not in ("v3", "v2"):
            raise ConfigError("severity.split_stratify_on must be v3 or v2")
        if cfg.aer_zero_policy != "exclude":
            raise ConfigError("severity.aer_zero_policy supports only 'exclude'")
        return cfg

    def rel(self, path: Path) -> str:
        """Workspace-relative POSIX path, for manifests."""
        try:
            return path.resolve().relative_to(self.root).as_posix()
        except ValueError:
            return path.as_posix()
