"""Run configuration: defaults, TOML loading, and flag overrides.

Defaults reproduce the reference training recipe: batch 32, 35 epochs,
Adam at 1e-3 decayed x0.1 every 10 epochs, weight decay 1e-4, dropout 0.5,
24576 input points, eval sampling R=65/p=0, train dithering R in (50, 80)
and p in (-0.2, 0.2).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

try:
    import tomllib
except ModuleNotFoundError:              # python < 3.11
    import tomli as tomllib

from ..errors import InvalidInput
from ..geometry.cloud import SamplingParams
from ..morphable import GenParams
from ..network import NetworkSpec, micro_spec, nano_spec, full_scale_spec
from ..training import FitConfig

_SECTIONS = {
    "run": ("seed", "out_dir"),
    "dataset": ("identities", "expressions", "sigma_alpha", "sigma_beta",
                "sigma_delta", "rotation_limits"),
    "network": ("arch", "dropout", "n0", "normals_k", "micro_radii",
                "train_radius_range", "train_exponent_range",
                "eval_radius", "eval_exponent"),
    "training": ("epochs", "batch_size", "lr", "lr_decay", "lr_decay_every",
                 "weight_decay"),
    "eval": ("far_target",),
}


@dataclass
class RunConfig:
    seed: int = 0
    out_dir: str = "runs"
    # dataset
    identities: int = 30
    expressions: int = 20
    sigma_alpha: float = 1.0
    sigma_beta: float = 1.0
    sigma_delta: float = 0.3
    rotation_limits: tuple = (20.0, 20.0, 20.0)
    # network
    arch: str = "full"                  # full | micro | nano
    dropout: float = 0.5
    n0: int | None = None                 # override of the arch default
    normals_k: int = 16
    micro_radii: tuple = (4.0, 9.0, 20.0, 45.0)
    train_radius_range: tuple = (50.0, 80.0)
    train_exponent_range: tuple = (-0.2, 0.2)
    eval_radius: float = 65.0
    eval_exponent: float = 0.0
    # training
    epochs: int = 35
    batch_size: int = 32
    lr: float = 1e-3
    lr_decay: float = 0.1
    lr_decay_every: int = 10
    weight_decay: float = 1e-4
    # evaluation
    far_target: float = 1e-3

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for key in ("rotation_limits", "micro_radii", "train_radius_range",
                    "train_exponent_range"):
            d[key] = list(d[key])
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidInput(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(data)
        for key in ("rotation_limits", "micro_radii", "train_radius_range",
                    "train_exponent_range"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)

    @classmethod
    def from_toml(cls, path) -> "RunConfig":
        with open(path, "rb") as f:
            try:
                raw = tomllib.load(f)
            except tomllib.TOMLDecodeError as exc:
                raise InvalidInput(f"{path}: {exc}") from exc
        flat = {}
        for section, keys in _SECTIONS.items():
            body = raw.pop(section, {})
            if not isinstance(body, dict):
                raise InvalidInput(f"{path}: [{section}] must be a table")
            for key, value in body.items():
                if key not in keys:
                    raise InvalidInput(f"{path}: unknown key {key!r} in [{section}]")
                flat[key] = value
        if raw:
            raise InvalidInput(f"{path}: unknown sections {sorted(raw)}")
        return cls.from_dict(flat)

    # ------------------------------------------------------------- factories

    def gen_params(self, guided_pool=None) -> GenParams:
        return GenParams(
            sigma_alpha=self.sigma_alpha,
            sigma_beta=self.sigma_beta,
            sigma_delta=self.sigma_delta,
            rotation_limits=self.rotation_limits,
            guided_pool=guided_pool,
        )

    def fit_config(self) -> FitConfig:
        return FitConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            lr=self.lr,
            lr_decay=self.lr_decay,
            lr_decay_every=self.lr_decay_every,
            weight_decay=self.weight_decay,
            seed=self.seed,
            far_target=self.far_target,
        )

    def network_spec(self, n_classes: int) -> NetworkSpec:
        train_sampling = SamplingParams(
            dither=True,
            radius_range=tuple(self.train_radius_range),
            exponent_range=tuple(self.train_exponent_range),
        )
        eval_sampling = SamplingParams(radius=self.eval_radius,
                                       exponent=self.eval_exponent)
        if self.arch == "full":
            spec = full_scale_spec(n_classes)
            spec = dataclasses.replace(spec, train_sampling=train_sampling,
                                       eval_sampling=eval_sampling)
        elif self.arch == "micro":
            spec = micro_spec(n_classes, radii=tuple(self.micro_radii),
                              eval_sampling=eval_sampling,
                              train_sampling=train_sampling)
        elif self.arch == "nano":
            spec = nano_spec(n_classes, eval_sampling=eval_sampling,
                             train_sampling=train_sampling)
        else:
            raise InvalidInput(f"unknown arch {self.arch!r} (full, micro, or nano)")
        spec = dataclasses.replace(spec, dropout_rate=self.dropout,
                                   normals_k=self.normals_k)
        if self.n0 is not None:
            spec = dataclasses.replace(spec, n0=self.n0)
        return spec
