"""INI-style run configuration with typed sections and ``section.key=value`` overrides.

Sections and their keys::

    [data]    fields of SyntheticTaskSpec
    [model]   kind, d_embed, init_seed, and encoder.* / decoder.* / baseline.* keys
    [train]   fields of TrainConfig
    [eval]    beam_size, max_len, alpha, percents
    [ablate]  configs, seeds

Lists are comma separated. Unknown sections and keys are rejected by name.
"""
from __future__ import annotations

import configparser
import dataclasses
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .data import SyntheticTaskSpec
from .decoder import DecoderConfig
from .encoder import EncoderConfig
from .errors import ConfigError
from .models import MODEL_KINDS, BaselineConfig, ModelSpec
from .training import TrainConfig

SECTIONS = ("data", "model", "train", "eval", "ablate")
ABLATION_CONFIGS = ("S2VT", "IMGD", "SA", "SA+SRE", "SA+SRE+CMSA")


def _convert(raw, tp, key: str):
    if not isinstance(raw, str):
        return raw
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    try:
        if origin in (typing.Union, types.UnionType):
            if raw.strip().lower() in ("", "none"):
                return None
            return _convert(raw, next(a for a in args if a is not type(None)), key)
        if origin in (tuple, list):
            items = [s.strip() for s in raw.split(",") if s.strip()]
            return origin(_convert(s, args[0], key) for s in items)
        if tp is bool:
            low = raw.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if tp in (int, float, str):
            return tp(raw.strip())
    except (ValueError, StopIteration) as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {tp}") from exc
    raise ConfigError(f"{key}: unsupported field type {tp}")


def coerce_dataclass(cls, values: dict, section: str):
    """Instantiate ``cls`` from a mapping of (possibly string) values."""
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, raw in values.items():
        if key not in names:
            raise ConfigError(f"unknown key {section}.{key}")
        kwargs[key] = _convert(raw, hints[key], f"{section}.{key}")
    try:
        obj = cls(**kwargs)
        if hasattr(obj, "validate"):
            obj.validate()
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"[{section}] {exc}") from exc
    return obj


@dataclass
class ModelSettings:
    """Model choices that do not depend on the dataset's sizes."""

    kind: str = "srcmsa"
    d_embed: int = 32
    init_seed: int = 0
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)

    def validate(self) -> None:
        if self.kind not in MODEL_KINDS:
            raise ConfigError(f"model.kind: unknown kind {self.kind!r}; expected one of {MODEL_KINDS}")

    def spec_for(self, dataset, **changes) -> ModelSpec:
        values = dict(
            kind=self.kind,
            frame_dim=dataset.clips[0].frames.shape[1] if dataset.clips else dataset.spec.frame_dim,
            n_objects=len(dataset.object_vocab),
            n_subtitle_tokens=len(dataset.subtitle_vocab),
            vocab_size=len(dataset.question_vocab),
            d_embed=self.d_embed,
            encoder=dataclasses.replace(self.encoder),
            decoder=dataclasses.replace(self.decoder),
            baseline=dataclasses.replace(self.baseline),
            init_seed=self.init_seed,
        )
        values.update(changes)
        return ModelSpec(**values)


@dataclass
class EvalConfig:
    beam_size: int = 1
    max_len: int = 20
    alpha: float = 0.0
    percents: tuple[float, ...] = (0.1, 1.0, 10.0)

    def validate(self) -> None:
        if self.beam_size < 1 or self.max_len < 1:
            raise ConfigError("eval.beam_size and eval.max_len must be >= 1")
        if any(not 0 < p <= 100 for p in self.percents):
            raise ConfigError("eval.percents must lie in (0, 100]")


@dataclass
class AblationConfig:
    configs: tuple[str, ...] = ABLATION_CONFIGS
    seeds: tuple[int, ...] = (0, 1, 2)

    def validate(self) -> None:
        bad = [c for c in self.configs if c not in ABLATION_CONFIGS]
        if bad:
            raise ConfigError(f"ablate.configs: unknown configuration {bad[0]!r}; expected {ABLATION_CONFIGS}")
        if not self.configs or not self.seeds:
            raise ConfigError("ablate.configs and ablate.seeds must be non-empty")


def _model_settings(values: dict) -> ModelSettings:
    top, sub = {}, {"encoder": {}, "decoder": {}, "baseline": {}}
    for key, raw in values.items():
        head, dot, rest = key.partition(".")
        if dot:
            if head not in sub:
                raise ConfigError(f"unknown key model.{key}")
            sub[head][rest] = raw
        else:
            top[key] = raw
    settings = coerce_dataclass(ModelSettings, top, "model")
    settings.encoder = coerce_dataclass(EncoderConfig, sub["encoder"], "model.encoder")
    settings.decoder = coerce_dataclass(DecoderConfig, sub["decoder"], "model.decoder")
    settings.baseline = coerce_dataclass(BaselineConfig, sub["baseline"], "model.baseline")
    return settings


@dataclass
class RunConfig:
    data: SyntheticTaskSpec = field(default_factory=SyntheticTaskSpec)
    model: ModelSettings = field(default_factory=ModelSettings)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    ablate: AblationConfig = field(default_factory=AblationConfig)


def parse_overrides(items) -> dict[str, dict[str, str]]:
    """``["train.learning_rate=0.01", ...]`` -> ``{"train": {"learning_rate": "0.01"}}``."""
    out: dict[str, dict[str, str]] = {}
    for item in items or ():
        key, eq, value = item.partition("=")
        section, dot, name = key.strip().partition(".")
        if not eq or not dot or not name:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        out.setdefault(section, {})[name] = value.strip()
    return out


def read_sections(path: str | Path | None) -> dict[str, dict[str, str]]:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keep key case
    if path is not None:
        try:
            with open(path, encoding="utf-8") as f:
                parser.read_file(f)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return {s: dict(parser[s]) for s in parser.sections()}


def load_config(path: str | Path | None = None, overrides=None) -> RunConfig:
    """Read ``path`` (optional), apply overrides (flags win), return typed sections."""
    sections = read_sections(path)
    for section, values in parse_overrides(overrides).items():
        sections.setdefault(section, {}).update(values)
    for section in sections:
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]; expected one of {SECTIONS}")
    return RunConfig(
        data=coerce_dataclass(SyntheticTaskSpec, sections.get("data", {}), "data"),
        model=_model_settings(sections.get("model", {})),
        train=coerce_dataclass(TrainConfig, sections.get("train", {}), "train"),
        eval=coerce_dataclass(EvalConfig, sections.get("eval", {}), "eval"),
        ablate=coerce_dataclass(AblationConfig, sections.get("ablate", {}), "ablate"),
    )
