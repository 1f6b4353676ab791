"""Experiment configuration: one declarative `key = value` text format.

The same format is embedded in checkpoints, so serialization is canonical:
fields are written in declaration order, floats with repr (shortest exact
round trip), tuples comma-separated, booleans as true/false.
"""

import dataclasses
from dataclasses import dataclass

from .loss import LossWeights
from .model import ModelConfig


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 3000
    batch_size: int = 1
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    k: int = 8
    sphere_points: int = 0  # 0 means: match each target cloud's size
    w_chamfer: float = 1.0
    w_deform: float = 0.1
    w_backward: float = 1.0
    deform_loss_form: str = "squared"
    seed: int = 0
    checkpoint_interval: int = 500
    latent_dim: int = 256
    num_blocks: int = 3
    encoder_widths: tuple = (64, 128, 256)
    head_widths: tuple = (256,)
    block_widths: tuple = (128, 128)
    backward_conditioned: bool = True
    fixed_sphere: bool = False

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be > 0")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.sphere_points < 0 or self.checkpoint_interval < 0:
            raise ValueError("sphere_points and checkpoint_interval must be >= 0")
        if not 0.0 <= self.adam_beta1 < 1.0 or not 0.0 <= self.adam_beta2 < 1.0:
            raise ValueError("adam betas must lie in [0, 1)")
        if self.adam_epsilon <= 0.0:
            raise ValueError("adam_epsilon must be > 0")
        if self.deform_loss_form not in ("squared", "absolute"):
            raise ValueError("deform_loss_form must be 'squared' or 'absolute'")

    def model_config(self):
        return ModelConfig(
            latent_dim=self.latent_dim,
            num_blocks=self.num_blocks,
            encoder_widths=tuple(self.encoder_widths),
            head_widths=tuple(self.head_widths),
            block_widths=tuple(self.block_widths),
            backward_conditioned=self.backward_conditioned,
        )

    def loss_weights(self):
        return LossWeights(self.w_chamfer, self.w_deform, self.w_backward)

    def to_text(self):
        lines = []
        for f in dataclasses.fields(self):
            lines.append(f"{f.name} = {_format_value(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    def with_overrides(self, overrides):
        """Apply {field: string-value} overrides, e.g. from the CLI."""
        values = {}
        types = {f.name: f.type for f in dataclasses.fields(self)}
        for key, raw in overrides.items():
            name = key.replace("-", "_")  # accept hyphenated spellings
            if name not in types:
                raise ValueError(f"unknown config key: {key!r}")
            values[name] = _parse_value(types[name], name, raw)
        return dataclasses.replace(self, **values)

    @classmethod
    def from_text(cls, text, source="<config>"):
        overrides = {}
        for line_no, line in enumerate(text.splitlines(), start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ValueError(f"{source}:{line_no}: expected 'key = value', got {line!r}")
            key, _, raw = stripped.partition("=")
            overrides[key.strip()] = raw.strip()
        return cls().with_overrides(overrides)

    @classmethod
    def from_file(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_text(fh.read(), source=str(path))


def _format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def _parse_value(ftype, key, raw):
    # dataclass field types arrive as strings under `from __future__`-free code
    name = ftype if isinstance(ftype, str) else ftype.__name__
    try:
        if name == "bool":
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError
        if name == "int":
            return int(raw)
        if name == "float":
            return float(raw)
        if name == "tuple":
            return tuple(int(v) for v in raw.split(",") if v.strip())
        return raw
    except ValueError:
        raise ValueError(f"config key {key!r}: cannot parse {raw!r} as {name}") from None
