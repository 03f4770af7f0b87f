"""Flat ``section.key = value`` configuration with dotted command-line overrides."""

from __future__ import annotations

import os
from dataclasses import dataclass

from .audioproc import FeatureConfig, SegmentationPolicy
from .augment import AugmentConfig
from .lm import LmConfig

CONDITIONS = ("original", "distorted", "more_data", "synthetic")


class ConfigError(ValueError):
    pass


# key -> default; the default's type is the value type
SCHEMA = {
    "run.seed": 0,
    "run.jobs": 1,
    "paths.manifest": "",
    "paths.out": "out",
    "paths.rules": "",
    "paths.suffixes": "",
    "paths.lexicon": "",
    "paths.bilingual": "",
    "paths.pivot_frames": "",
    "split.train": 0.8,
    "split.dev": 0.1,
    "split.test": 0.1,
    "split.by_speaker": False,
    "segment.max_s": 30.0,
    "segment.window_s": 2.0,
    "segment.silence_rms": 0.01,
    "segment.frame_s": 0.025,
    "vad.floor": 0.2,
    "preprocess.max_error_fraction": 0.10,
    "features.enabled": False,
    "features.n_mfcc": 13,
    "features.derivative_orders": 2,
    "features.normalize": True,
    "delex.top_k": 3,
    "augment.candidates": 10,
    "augment.keep": 1,
    "augment.similarity": "jaccard",
    "augment.engine": "perturb",
    "augment.engine_command": "",
    "synth.engine": "tone",
    "synth.engine_command": "",
    "engine.timeout_s": 30.0,
    "lm.order": 4,
    "lm.pruning_k": 0.04,
    "lm.heldout_fraction": 0.2,
    "distort.min": 0.85,
    "distort.max": 1.15,
    "eval.conditions": ",".join(CONDITIONS),
    "eval.hypotheses": "stub:0.25",
}

PATH_KEYS = ("paths.manifest", "paths.out", "paths.rules", "paths.suffixes", "paths.lexicon",
             "paths.bilingual", "paths.pivot_frames")


def _coerce(key: str, raw, source: str):
    default = SCHEMA[key]
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        raise ConfigError(f"{source}: bad value {raw!r} for {key} "
                          f"(expected {type(default).__name__})") from None
    return text


def parse_config_text(text: str, source: str = "<config>") -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"{source}:{lineno}: expected 'section.key = value'")
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        values[key] = _coerce(key, value, f"{source}:{lineno}")
    return values


def load_config(path=None, overrides: dict | None = None) -> dict:
    """Defaults, then the file, then overrides.

    Relative paths in the file, and the default output directory when a file
    is given, are taken from the file's directory; relative override paths
    from the current directory.
    """
    cfg = dict(SCHEMA)
    if path is not None:
        try:
            with open(path, encoding="utf-8") as f:
                text = f.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        base = os.path.dirname(os.path.abspath(path))
        cfg["paths.out"] = os.path.join(base, SCHEMA["paths.out"])
        for key, value in parse_config_text(text, str(path)).items():
            if key in PATH_KEYS and value and not os.path.isabs(value):
                value = os.path.normpath(os.path.join(base, value))
            cfg[key] = value
    for key, value in (overrides or {}).items():
        if key not in SCHEMA:
            raise ConfigError(f"unknown option --{key}")
        value = _coerce(key, value, f"--{key}")
        if key in PATH_KEYS and value:
            value = os.path.abspath(value)
        cfg[key] = value
    return cfg


def parse_overrides(argv: list[str]) -> dict:
    """``--section.key value`` or ``--section.key=value`` pairs."""
    out = {}
    i = 0
    while i < len(argv):
        arg = argv[i]
        if not arg.startswith("--") or "." not in arg:
            raise ConfigError(f"unrecognized argument {arg!r}")
        key, sep, value = arg[2:].partition("=")
        if not sep:
            if i + 1 >= len(argv):
                raise ConfigError(f"option {arg} needs a value")
            value = argv[i + 1]
            i += 1
        out[key] = value
        i += 1
    return out


@dataclass(frozen=True)
class PipelineConfig:
    values: dict

    def __getitem__(self, key):
        return self.values[key]

    @property
    def seed(self) -> int:
        return self.values["run.seed"]

    @property
    def out(self) -> str:
        return self.values["paths.out"]

    def path(self, key: str) -> str | None:
        return self.values[key] or None

    @property
    def fractions(self) -> tuple:
        return (self["split.train"], self["split.dev"], self["split.test"])

    @property
    def segmentation(self) -> SegmentationPolicy:
        return SegmentationPolicy(self["segment.max_s"], self["segment.window_s"],
                                  self["segment.silence_rms"], self["segment.frame_s"])

    @property
    def features(self) -> FeatureConfig:
        return FeatureConfig(n_mfcc=self["features.n_mfcc"],
                             derivative_orders=self["features.derivative_orders"],
                             normalize_per_sequence=self["features.normalize"])

    @property
    def augment(self) -> AugmentConfig:
        return AugmentConfig(self["augment.candidates"], self["augment.keep"],
                             self["augment.similarity"], self["augment.engine"], self.seed)

    @property
    def lm(self) -> LmConfig:
        return LmConfig(order=self["lm.order"], pruning_k=self["lm.pruning_k"], seed=self.seed)

    @property
    def conditions(self) -> list[str]:
        return [c.strip() for c in self["eval.conditions"].split(",") if c.strip()]

    def validate(self) -> None:
        """Type-level checks plus existence of every referenced input path."""
        try:
            self.segmentation, self.features, self.augment, self.lm
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        for c in self.conditions:
            if c not in CONDITIONS:
                raise ConfigError(f"unknown condition {c!r}; expected one of {', '.join(CONDITIONS)}")
        if self["augment.engine"] not in ("perturb", "external"):
            raise ConfigError(f"unknown augment.engine {self['augment.engine']!r}")
        if self["synth.engine"] not in ("tone", "external"):
            raise ConfigError(f"unknown synth.engine {self['synth.engine']!r}")
        for kind in ("augment", "synth"):
            if self[f"{kind}.engine"] == "external" and not self[f"{kind}.engine_command"]:
                raise ConfigError(f"{kind}.engine = external needs {kind}.engine_command")
        if not 0 <= self["lm.heldout_fraction"] < 1:
            raise ConfigError("lm.heldout_fraction must be in [0, 1)")
        if not 0.0 <= self["vad.floor"] <= 1.0:
            raise ConfigError("vad.floor must be in [0, 1]")
        if not 0 < self["distort.min"] <= self["distort.max"]:
            raise ConfigError("distort.min must be positive and <= distort.max")
        if self["run.jobs"] < 1:
            raise ConfigError("run.jobs must be >= 1")
        if not self.out:
            raise ConfigError("paths.out must be set")
        for key in PATH_KEYS:
            if key == "paths.out":
                continue
            p = self.values[key]
            if p and not os.path.exists(p):
                raise ConfigError(f"{key}: no such file {p}")


def write_config(values: dict, path) -> None:
    """Write only the keys that differ from the defaults."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for key in SCHEMA:
            if key in values and values[key] != SCHEMA[key]:
                v = values[key]
                f.write(f"{key} = {str(v).lower() if isinstance(v, bool) else v}\n")
