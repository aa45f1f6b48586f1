"""Run configuration: one strict JSON document with every default materialised.

Unknown keys are rejected at every level. Command-line overrides use dotted
paths (``sweep.n_bins=64``); values are parsed as JSON and fall back to plain
strings.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .evalbench import EvalConfig, PriorConfig
from .fusion import FusionConfig
from .pipeline import PipelineConfig
from .plane_sweep import SweepConfig
from .pose_bench import DEFAULT_LEVELS, NoiseLevel

SEED_ENV = "MVSFUSE_SEED"

_CHOICES = {
    ("sweep", "cost"): ("ssd", "ncc"),
    ("prior", "source"): ("synthetic", "file"),
    ("prior", "align"): ("auto", "always", "never"),
    ("fusion", "reduce"): ("mean", "min"),
}


@dataclass
class NoiseConfig:
    levels: list = field(default_factory=lambda: list(DEFAULT_LEVELS))
    seed: int | None = None  # derived from the run seed when null


@dataclass
class RunConfig:
    scene: dict | None = None
    sweep: SweepConfig = field(default_factory=SweepConfig)
    prior: PriorConfig = field(default_factory=PriorConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    output_dir: str | None = None
    seed: int = 0
    jobs: int | None = None  # null: hardware parallelism

    def pipeline(self) -> PipelineConfig:
        return PipelineConfig(
            sweep=self.sweep,
            fusion=self.fusion,
            align=self.prior.align,
            conf_threshold=self.prior.conf_threshold,
        )

    def levels(self) -> list:
        return [NoiseLevel.parse(x) for x in self.noise.levels]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def write_resolved(self, out_dir) -> Path:
        path = Path(out_dir) / "config.resolved"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


def _build(cls, doc, where: str):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where or 'config'}: expected an object, got {type(doc).__name__}")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(doc) - set(known))
    if unknown:
        raise ConfigError(f"{where or 'config'}: unknown key(s) {unknown}")
    kwargs = {}
    for name, value in doc.items():
        f = known[name]
        path = f"{where}.{name}" if where else name
        default = f.default_factory() if f.default_factory is not dataclasses.MISSING else f.default
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, path)
        else:
            kwargs[name] = value
    return cls(**kwargs)


def _check(cfg: RunConfig) -> None:
    for (block, key), allowed in _CHOICES.items():
        value = getattr(getattr(cfg, block), key)
        if value not in allowed:
            raise ConfigError(f"{block}.{key}: {value!r} not in {list(allowed)}")
    t = cfg.sweep.temperature
    if not (t == "auto" or (isinstance(t, (int, float)) and not isinstance(t, bool) and t > 0)):
        raise ConfigError(f"sweep.temperature: expected 'auto' or a positive number, got {t!r}")
    if cfg.scene is not None and not isinstance(cfg.scene, dict):
        raise ConfigError("scene: expected an object")
    if not isinstance(cfg.seed, int) or isinstance(cfg.seed, bool):
        raise ConfigError(f"seed: expected an integer, got {cfg.seed!r}")
    if cfg.jobs is not None and (not isinstance(cfg.jobs, int) or cfg.jobs < 1):
        raise ConfigError(f"jobs: expected a positive integer or null, got {cfg.jobs!r}")
    if not isinstance(cfg.noise.levels, list) or not cfg.noise.levels:
        raise ConfigError("noise.levels: expected a non-empty list")
    try:
        cfg.levels()
    except ValueError as exc:
        raise ConfigError(f"noise.levels: {exc}") from None


def parse_override(text: str) -> tuple:
    """Split ``a.b=value`` into (["a", "b"], parsed value)."""
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise ConfigError(f"override {text!r} is not of the form key.path=value")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.split("."), value


def _apply_override(doc: dict, path: list, value) -> None:
    node = doc
    for part in path[:-1]:
        child = node.get(part)
        if child is None:
            child = node[part] = {}
        if not isinstance(child, dict):
            raise ConfigError(f"override {'.'.join(path)}: {part} is not a block")
        node = child
    node[path[-1]] = value


def resolve(doc: dict | None = None, overrides=(), seed: int | None = None, env=None) -> RunConfig:
    """Merge a config document, dotted overrides and the seed sources.

    Seed priority, highest first: ``seed`` argument (``--seed``), an explicit
    ``seed`` in the document or overrides, then the ``MVSFUSE_SEED`` variable.
    """
    env = os.environ if env is None else env
    doc = json.loads(json.dumps(doc or {}))
    for text in overrides:
        _apply_override(doc, *parse_override(text))
    if seed is None and "seed" not in doc and env.get(SEED_ENV):
        try:
            seed = int(env[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV}={env[SEED_ENV]!r} is not an integer") from None
    if seed is not None:
        doc["seed"] = seed
    try:
        cfg = _build(RunConfig, doc, "")
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    _check(cfg)
    return cfg


def load_config(path=None, overrides=(), seed: int | None = None, env=None) -> RunConfig:
    doc = None
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return resolve(doc, overrides, seed, env)
