"""Flat dotted-key run configuration.

Config files are plain text, one `key = value` assignment per line, with
`#` comments.  JSON files holding the same flat mapping are accepted too,
so a run.json echo can be replayed directly.  Unknown keys fail fast and
name the closest valid key.
"""

from __future__ import annotations

import difflib
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError
from .lbp import LBPConfig
from .descriptors import SamplingGrid
from .scalespace import ScaleStackConfig

DEFAULTS: dict[str, object] = {
    "framework": "bow",
    "seed": 0,
    "jobs": 1,
    "image.enhance": False,
    "image.color": "reject",
    "gss.base": 1.5,
    "gss.count": 7,
    "gss.border": "replicate",
    "lbp.scales": "8:1,16:2,24:3",
    "load.radius": 13,
    "load.stride_x": 1,
    "load.stride_y": 2,
    "encode.pca_dim": 100,
    "encode.gmm_k": 256,
    "encode.codebooks": 1,
    "encode.pool_cap": 1_000_000,
    "encode.power": 0.5,
    "encode.em_tol": 1e-5,
    "encode.em_iters": 100,
    "svm.c": 1.0,
    "svm.standardize": False,
    "svm.tol": 1e-4,
    "svm.epochs": 1000,
}

_CHOICES = {
    "framework": ("lbp", "bow"),
    "image.color": ("reject", "luminance"),
    "gss.border": ("replicate",),
}


def _parse_scalar(text: str):
    text = text.strip()
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "'\"":
        return text[1:-1]
    low = text.lower()
    if low == "true":
        return True
    if low == "false":
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def _coerce(key: str, value: object) -> object:
    default = DEFAULTS[key]
    if isinstance(value, str) and not isinstance(default, str):
        value = _parse_scalar(value)
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
        raise ConfigError(f"{key} expects true/false, got {value!r}")
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} expects an integer, got {value!r}")
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(f"{key} expects an integer, got {value!r}")
        return int(value)
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} expects a number, got {value!r}")
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"{key} expects a string, got {value!r}")
    if key in _CHOICES and value not in _CHOICES[key]:
        raise ConfigError(
            f"{key} must be one of {', '.join(_CHOICES[key])}, got {value!r}"
        )
    return value


def _reject_unknown(key: str):
    close = difflib.get_close_matches(key, DEFAULTS.keys(), n=1)
    hint = f"; did you mean '{close[0]}'?" if close else ""
    raise ConfigError(f"unknown config key '{key}'{hint}")


def _parse_scales(text: str) -> tuple[tuple[int, float], ...]:
    scales = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        pieces = part.split(":")
        if len(pieces) != 2:
            raise ConfigError(
                f"bad LBP scale '{part}': expected neighbors:radius, e.g. 8:1"
            )
        try:
            scales.append((int(pieces[0]), float(pieces[1])))
        except ValueError:
            raise ConfigError(f"bad LBP scale '{part}': non-numeric field") from None
    if not scales:
        raise ConfigError("lbp.scales is empty")
    return tuple(scales)


@dataclass(frozen=True)
class RunConfig:
    """Fully-resolved configuration; construct via from_file/from_overrides."""

    entries: tuple[tuple[str, object], ...]

    @classmethod
    def from_mapping(cls, mapping: dict[str, object]) -> "RunConfig":
        merged = dict(DEFAULTS)
        for key, value in mapping.items():
            if key not in DEFAULTS:
                _reject_unknown(key)
            merged[key] = _coerce(key, value)
        cfg = cls(entries=tuple(sorted(merged.items())))
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"no such config file: {path}")
        text = path.read_text(encoding="utf-8")
        if path.suffix.lower() == ".json":
            try:
                mapping = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON config: {exc}") from None
            if not isinstance(mapping, dict):
                raise ConfigError(f"{path}: JSON config must be a flat object")
            return cls.from_mapping(mapping)
        mapping = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            key, _, value = line.partition("=")
            mapping[key.strip()] = _parse_scalar(value)
        return cls.from_mapping(mapping)

    def override(self, **updates) -> "RunConfig":
        mapping = dict(self.entries)
        for key, value in updates.items():
            key = key.replace("__", ".")
            if key not in DEFAULTS:
                _reject_unknown(key)
            mapping[key] = _coerce(key, value)
        cfg = RunConfig(entries=tuple(sorted(mapping.items())))
        cfg.validate()
        return cfg

    def __getitem__(self, key: str):
        for k, v in self.entries:
            if k == key:
                return v
        _reject_unknown(key)

    def resolved(self) -> dict[str, object]:
        """Flat mapping with every default filled in, safe to re-load."""
        return dict(self.entries)

    def validate(self) -> None:
        if self["seed"] < 0:
            raise ConfigError(f"seed must be >= 0, got {self['seed']}")
        if self["jobs"] < 1:
            raise ConfigError(f"jobs must be >= 1, got {self['jobs']}")
        for key in ("encode.pca_dim", "encode.gmm_k", "encode.codebooks",
                    "encode.pool_cap", "encode.em_iters", "svm.epochs"):
            if self[key] < 1:
                raise ConfigError(f"{key} must be >= 1, got {self[key]}")
        for key in ("encode.power", "encode.em_tol", "svm.c", "svm.tol"):
            if not self[key] > 0:
                raise ConfigError(f"{key} must be > 0, got {self[key]}")
        # Constructors check their own ranges.
        self.scale_config()
        self.lbp_config()
        self.sampling_grid()

    def scale_config(self) -> ScaleStackConfig:
        return ScaleStackConfig(base=self["gss.base"], count=self["gss.count"])

    def lbp_config(self) -> LBPConfig:
        return LBPConfig(scales=_parse_scales(self["lbp.scales"]))

    def sampling_grid(self) -> SamplingGrid:
        return SamplingGrid(radius=self["load.radius"],
                            stride_x=self["load.stride_x"],
                            stride_y=self["load.stride_y"])


def default_config() -> RunConfig:
    return RunConfig.from_mapping({})
