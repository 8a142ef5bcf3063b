"""Experiment configuration: defaults, config-file parsing, overrides.

Config files are plain text, one ``key = value`` per line, ``#`` starts
a comment.  Keys are dotted paths into the sections below; values are
parsed as int, float, bool (true/false), or left as strings.

    seed = 0
    schedule.sigma = 25.0
    schedule.T = 1.0
    network.point_feat_dim = 256
    network.hidden_dim = 256
    network.time_embed_dim = 128
    network.fourier_scale = 16.0
    network.message_rounds = 3
    train.epochs = 2000
    train.batch_size = 16
    train.lr = 1e-4
    train.t_min = 1e-3
    train.checkpoint_every = 0
    sampler.n_steps = 250
    sampler.corrector_steps = 1
    sampler.final_corrector_steps = 50
    sampler.snr = 0.16
    sampler.decay_exponent = 2.0
    sampler.snr_squared = false
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

from .errors import ConfigError
from .network import ScoreNetConfig
from .sampling import SamplerConfig
from .sde import DiffusionSchedule
from .training import TrainConfig

_SCHEMA: dict[str, type] = {
    "seed": int,
    "schedule.sigma": float,
    "schedule.T": float,
    "network.point_feat_dim": int,
    "network.hidden_dim": int,
    "network.time_embed_dim": int,
    "network.fourier_scale": float,
    "network.message_rounds": int,
    "train.epochs": int,
    "train.batch_size": int,
    "train.lr": float,
    "train.t_min": float,
    "train.checkpoint_every": int,
    "sampler.n_steps": int,
    "sampler.corrector_steps": int,
    "sampler.final_corrector_steps": int,
    "sampler.snr": float,
    "sampler.decay_exponent": float,
    "sampler.snr_squared": bool,
}

_DEFAULTS: dict[str, object] = {
    "seed": 0,
    "schedule.sigma": 25.0,
    "schedule.T": 1.0,
    "network.point_feat_dim": 256,
    "network.hidden_dim": 256,
    "network.time_embed_dim": 128,
    "network.fourier_scale": 16.0,
    "network.message_rounds": 3,
    "train.epochs": 2000,
    "train.batch_size": 16,
    "train.lr": 1e-4,
    "train.t_min": 1e-3,
    "train.checkpoint_every": 0,
    "sampler.n_steps": 250,
    "sampler.corrector_steps": 1,
    "sampler.final_corrector_steps": 50,
    "sampler.snr": 0.16,
    "sampler.decay_exponent": 2.0,
    "sampler.snr_squared": False,
}


def _parse_value(key: str, raw: str):
    want = _SCHEMA[key]
    raw = raw.strip()
    try:
        if want is bool:
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if want is int:
            return int(raw)
        if want is float:
            return float(raw)
    except ValueError as e:
        raise ConfigError(f"config key {key!r}: cannot parse {raw!r} as "
                          f"{want.__name__}") from e
    return raw


def parse_config_file(path) -> dict[str, object]:
    values: dict[str, object] = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    for lineno, line in enumerate(lines, start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in stripped.split("=", 1))
        if key not in _SCHEMA:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = _parse_value(key, raw)
    return values


@dataclass
class ExperimentConfig:
    """Resolved experiment settings; echoed verbatim into every artifact."""

    values: dict[str, object] = field(default_factory=dict)

    @classmethod
    def resolve(cls, config_path=None, overrides: dict | None = None):
        values = dict(_DEFAULTS)
        if config_path is not None:
            values.update(parse_config_file(config_path))
        for key, val in (overrides or {}).items():
            if val is None:
                continue
            if key not in _SCHEMA:
                raise ConfigError(f"unknown override key {key!r}")
            values[key] = _parse_value(key, val) if isinstance(val, str) else val
        return cls(values)

    def _section(self, prefix: str) -> dict:
        plen = len(prefix) + 1
        return {
            k[plen:]: v for k, v in self.values.items() if k.startswith(prefix + ".")
        }

    @property
    def seed(self) -> int:
        return int(self.values["seed"])

    def schedule(self) -> DiffusionSchedule:
        sec = self._section("schedule")
        return DiffusionSchedule(sigma=sec["sigma"], T=sec["T"])

    def network(self) -> ScoreNetConfig:
        return ScoreNetConfig(**self._section("network"))

    def train(self) -> TrainConfig:
        sec = self._section("train")
        return TrainConfig(schedule=self.schedule(), seed=self.seed, **sec)

    def sampler(self, schedule: DiffusionSchedule | None = None,
                **replacements) -> SamplerConfig:
        sec = self._section("sampler")
        sec.update(replacements)
        return SamplerConfig(schedule=schedule or self.schedule(), **sec)

    def echo(self) -> dict:
        """Stable nested dict of every resolved value, for artifacts."""
        nested: dict = {}
        for key in sorted(self.values):
            parts = key.split(".")
            node = nested
            for p in parts[:-1]:
                node = node.setdefault(p, {})
            node[parts[-1]] = self.values[key]
        return nested
