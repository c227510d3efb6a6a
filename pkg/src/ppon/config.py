"""Declarative run configuration: a plain `key = value` file with flag
overrides layered on top (flags win).  Unknown keys are rejected before any
work starts."""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path


class ConfigError(ValueError):
    """Bad key, bad value, or failed validation in a run config."""


def _parse_alpha_list(text: str):
    try:
        values = [float(v) for v in str(text).split(",") if v.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"alpha_list: {exc}") from exc
    for v in values:
        if not 0.0 <= v <= 1.0:
            raise ConfigError(f"alpha values must be in [0, 1], got {v}")
    return values


@dataclass
class RunConfig:
    profile: str = "test"
    stage: str = "content"
    seed: int = 0
    manifest: str | None = None
    lr_dir: str | None = None
    out_dir: str = "runs/out"
    checkpoint: str | None = None
    init_checkpoint: str | None = None
    extractor_weights: str | None = None
    iters: int | None = None
    batch_size: int | None = None
    hr_patch: int | None = None
    degradation: str = "bicubic"
    noise_seed: int = 0
    alpha_list: list = field(default_factory=lambda: [1.0])
    shave: int = 4
    ms_scales: int | None = None
    emit: str = "all"
    log_every: int = 100

    _INT_KEYS = {"seed", "iters", "batch_size", "hr_patch", "shave", "ms_scales",
                 "noise_seed", "log_every"}

    def validate(self) -> "RunConfig":
        if self.profile not in ("full", "test"):
            raise ConfigError(f"profile must be 'full' or 'test', got {self.profile!r}")
        if self.stage not in ("content", "structure", "perception"):
            raise ConfigError(f"unknown stage {self.stage!r}")
        if self.emit not in ("c", "s", "p", "all"):
            raise ConfigError(f"emit must be one of c/s/p/all, got {self.emit!r}")
        if self.shave < 0:
            raise ConfigError(f"shave must be >= 0, got {self.shave}")
        for v in self.alpha_list:
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"alpha values must be in [0, 1], got {v}")
        from .data import DegradationSpec

        DegradationSpec.parse(self.degradation)  # raises on nonsense
        return self

    def set_key(self, key: str, raw):
        names = {f.name for f in fields(self) if not f.name.startswith("_")}
        if key not in names:
            raise ConfigError(f"unknown config key {key!r}")
        if raw is None:
            return
        if key == "alpha_list":
            value = raw if isinstance(raw, list) else _parse_alpha_list(raw)
        elif key in self._INT_KEYS:
            try:
                value = int(raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{key}: expected an integer, got {raw!r}") from exc
        else:
            value = str(raw)
        setattr(self, key, value)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        cfg = cls()
        for lineno, line in enumerate(path.read_text().splitlines(), 1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = stripped.partition("=")
            cfg.set_key(key.strip(), value.strip())
        return cfg

    def apply_overrides(self, overrides: dict) -> "RunConfig":
        for key, value in overrides.items():
            if value is not None:
                self.set_key(key, value)
        return self

    def snapshot(self) -> dict:
        return {
            f.name: getattr(self, f.name)
            for f in fields(self)
            if not f.name.startswith("_")
        }
