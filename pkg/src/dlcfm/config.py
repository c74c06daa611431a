"""Run configuration: one JSON document, validated against a strict schema.

Sections and their keys (all optional; defaults fill the gaps):

    data    n, side, seed, halo{...HaloConfig fields}
    model   d, d_Z, enc_widths, vf_width, vf_blocks, temb_dim, emb_dim
    train   steps, batch, lr, beta, lambda1, lambda2, K, sigma, tau2, seed,
            checkpoint_interval, holdout
    sample  n_ode, method, K, seed, tail_quantile
    eval    repeats, subsample, reg, seed, n_report

``train.tau2`` is either the string ``"inv-batch"`` (tau^2 = 1 / batch) or a
number in (0, 1]. ``eval.reg`` is relative to the median pairwise cost.
Unknown keys anywhere are rejected.
"""

import json
from dataclasses import asdict, dataclass, field, fields

import jsonschema

from .flow import ModelConfig, TrainConfig
from .halos import HaloConfig
from .sampler import METHODS, SampleConfig


class ConfigError(ValueError):
    pass


_INT = {"type": "integer"}
_NUM = {"type": "number"}


def _obj(props, **extra):
    return {"type": "object", "properties": props, "additionalProperties": False, **extra}


SCHEMA = _obj({
    "data": _obj({
        "n": {"type": "integer", "minimum": 2},
        "side": {"type": "integer", "minimum": 4},
        "seed": {"type": "integer", "minimum": 0},
        "halo": _obj({f.name: _NUM for f in fields(HaloConfig)}),
    }),
    "model": _obj({
        "d": {"type": "integer", "minimum": 1},
        "d_Z": {"type": "integer", "minimum": 2},
        "enc_widths": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        "vf_width": {"type": "integer", "minimum": 1},
        "vf_blocks": {"type": "integer", "minimum": 0},
        "temb_dim": {"type": "integer", "minimum": 2, "multipleOf": 2},
        "emb_dim": {"type": "integer", "minimum": 1},
    }),
    "train": _obj({
        "steps": {"type": "integer", "minimum": 0},
        "batch": {"type": "integer", "minimum": 3},
        "lr": {"type": "number", "exclusiveMinimum": 0},
        "beta": {"type": "number", "minimum": 0},
        "lambda1": {"type": "number", "minimum": 0},
        "lambda2": {"type": "number", "minimum": 0},
        "K": {"type": "integer", "minimum": 1},
        "sigma": {"type": "number", "minimum": 0},
        "tau2": {"oneOf": [{"const": "inv-batch"},
                           {"type": "number", "exclusiveMinimum": 0, "maximum": 1}]},
        "seed": {"type": "integer", "minimum": 0},
        "checkpoint_interval": {"type": "integer", "minimum": 0},
        "holdout": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
    }),
    "sample": _obj({
        "n_ode": {"type": "integer", "minimum": 1},
        "method": {"enum": list(METHODS)},
        "K": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "tail_quantile": {"type": "number", "exclusiveMinimum": 0.5, "exclusiveMaximum": 1},
    }),
    "eval": _obj({
        "repeats": {"type": "integer", "minimum": 1},
        "subsample": {"type": "integer", "minimum": 2},
        "reg": {"type": "number", "exclusiveMinimum": 0},
        "seed": {"type": "integer", "minimum": 0},
        "n_report": {"type": "integer", "minimum": 1},
    }),
})


@dataclass
class DataConfig:
    n: int = 2000
    side: int = 16
    seed: int = 7
    halo: HaloConfig = field(default_factory=HaloConfig)


@dataclass
class EvalConfig:
    repeats: int = 10
    subsample: int = 256
    reg: float = 0.05
    seed: int = 0
    n_report: int = 5


@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    sample: SampleConfig = field(default_factory=SampleConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def to_dict(self):
        return {
            "data": asdict(self.data),
            "model": self.model.to_dict(),
            "train": asdict(self.train),
            "sample": self.sample.to_dict(),
            "eval": asdict(self.eval),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _path(err):
    parts = [str(p) for p in err.absolute_path]
    return "/".join(parts) if parts else "<root>"


def validate(doc):
    """Raise ``ConfigError`` naming the offending field path on the first schema violation."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = _path(err)
        if err.validator == "additionalProperties":
            extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
            raise ConfigError(f"{where}: unknown key(s) {extra}")
        raise ConfigError(f"{where}: {err.message}")
    return doc


def from_dict(doc):
    validate(doc)
    try:
        data = dict(doc.get("data", {}))
        halo = HaloConfig.from_dict(data.pop("halo", {}))
        return RunConfig(
            data=DataConfig(halo=halo, **data),
            model=ModelConfig.from_dict(doc.get("model", {})),
            train=TrainConfig.from_dict(doc.get("train", {})),
            sample=SampleConfig.from_dict(doc.get("sample", {})),
            eval=EvalConfig(**doc.get("eval", {})),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load(path):
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return from_dict(doc)
