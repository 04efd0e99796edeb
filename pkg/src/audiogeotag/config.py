"""Pipeline configuration: one JSON document drives every subcommand.

Manifest paths inside the file are resolved relative to the config file's
directory. Unknown keys are rejected at every level so typos fail fast.
All randomness derives from the single top-level seed; per-stage seeds
are derived internally, which is why the nested sections carry no seed
fields of their own.
"""

import json
import os
from dataclasses import dataclass, field, fields as dc_fields

from .features import MfccConfig
from .gmm import EmOptions
from .seminmf import FactorizationOptions
from .svm import CvConfig

FEATURIZERS = ("h", "v", "boaw", "supervector")
FUSIONS = ("average", "product", "none")
INPUT_KINDS = ("wav", "features")


class ConfigError(ValueError):
    """Raised for unreadable or invalid pipeline configuration."""


@dataclass
class PipelineConfig:
    sound_class_manifest: str
    city_manifest: str
    featurizer: str = "h"
    fusion: str = "average"
    k: int = 20
    G: int = 8
    input_kind: str = "wav"
    min_examples: int = 1
    relevance: float = 16.0
    output_dir: str = "out"
    seed: int = 0
    jobs: int = 1
    mfcc: MfccConfig = field(default_factory=MfccConfig)
    factorization: FactorizationOptions = field(default_factory=FactorizationOptions)
    em: EmOptions = field(default_factory=EmOptions)
    cv: CvConfig = field(default_factory=CvConfig)

    def validate(self):
        if self.featurizer not in FEATURIZERS:
            raise ConfigError(f"unknown featurizer {self.featurizer!r}")
        if self.fusion not in FUSIONS:
            raise ConfigError(f"unknown fusion {self.fusion!r}")
        if self.featurizer in ("boaw", "supervector"):
            if self.fusion != "none":
                raise ConfigError(
                    f"featurizer {self.featurizer!r} uses a single kernel; "
                    "set fusion to 'none'"
                )
        elif self.fusion == "none":
            raise ConfigError(
                f"featurizer {self.featurizer!r} needs per-class kernel fusion; "
                "set fusion to 'average' or 'product'"
            )
        if self.input_kind not in INPUT_KINDS:
            raise ConfigError(f"unknown input_kind {self.input_kind!r}")
        if self.k < 1 or self.G < 1:
            raise ConfigError("k and G must be positive")
        if self.min_examples < 1:
            raise ConfigError("min_examples must be at least 1")
        if self.relevance <= 0:
            raise ConfigError("relevance must be positive")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")
        try:
            self.mfcc.validate()
            self.factorization.validate()
            self.em.validate()
            self.cv.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self

    def semantic_dict(self):
        """Fields that affect results (paths and worker counts excluded)."""
        return {
            "featurizer": self.featurizer,
            "fusion": self.fusion,
            "k": self.k,
            "G": self.G,
            "input_kind": self.input_kind,
            "min_examples": self.min_examples,
            "relevance": "%.17g" % self.relevance,
            "seed": self.seed,
            "mfcc": _section_dict(self.mfcc),
            "factorization": _section_dict(self.factorization),
            "em": _section_dict(self.em),
            "cv": _section_dict(self.cv),
        }


def _section_dict(section):
    out = {}
    for f in dc_fields(section):
        if f.name == "seed":
            continue
        value = getattr(section, f.name)
        if isinstance(value, float):
            value = "%.17g" % value
        elif isinstance(value, (list, tuple)):
            value = ["%.17g" % v if isinstance(v, float) else v for v in value]
        out[f.name] = value
    return out


_SECTION_TYPES = {
    "mfcc": MfccConfig,
    "factorization": FactorizationOptions,
    "em": EmOptions,
    "cv": CvConfig,
}

# seeds derive from the top-level seed; never configured per section
_SECTION_EXCLUDED = {"seed"}


def _build_section(name, cls, doc):
    if not isinstance(doc, dict):
        raise ConfigError(f"section {name!r} must be an object")
    allowed = {f.name for f in dc_fields(cls)} - _SECTION_EXCLUDED
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in section {name!r}: {sorted(unknown)}")
    if name == "cv" and "c_grid" in doc:
        doc = dict(doc)
        doc["c_grid"] = tuple(float(c) for c in doc["c_grid"])
    return cls(**doc)


def load_config(path, seed=None, output_dir=None, jobs=None):
    """Parse and validate a pipeline config file.

    seed, output_dir and jobs can be overridden (the CLI flags map here).
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")

    simple = {f.name for f in dc_fields(PipelineConfig)} - set(_SECTION_TYPES)
    unknown = set(doc) - simple - set(_SECTION_TYPES)
    if unknown:
        raise ConfigError(f"{path}: unknown config keys: {sorted(unknown)}")
    for key in ("sound_class_manifest", "city_manifest"):
        if key not in doc:
            raise ConfigError(f"{path}: missing required key {key!r}")

    kwargs = {k: v for k, v in doc.items() if k in simple}
    for name, cls in _SECTION_TYPES.items():
        if name in doc:
            kwargs[name] = _build_section(name, cls, doc[name])

    base = os.path.dirname(os.path.abspath(path))
    for key in ("sound_class_manifest", "city_manifest"):
        if not os.path.isabs(kwargs[key]):
            kwargs[key] = os.path.join(base, kwargs[key])

    config = PipelineConfig(**kwargs)
    if seed is not None:
        config.seed = int(seed)
    if output_dir is not None:
        config.output_dir = str(output_dir)
    elif not os.path.isabs(config.output_dir):
        config.output_dir = os.path.join(base, config.output_dir)
    if jobs is not None:
        config.jobs = int(jobs)
    config.validate()
    return config
