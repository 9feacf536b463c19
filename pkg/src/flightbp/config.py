"""Run configuration: JSON file plus command-line overrides.

Example (every key optional; these are the defaults)::

    {
      "data": null,
      "out_dir": "run",
      "features": {"numeric": ["latitude", "longitude", "number_of_engines"],
                   "categorical": ["make", "engine_type", "amateur_built"]},
      "split": {"train": 0.7, "val": 0.15, "test": 0.15, "seed": 0, "stratified": true},
      "network": {"hidden": [8], "hidden_activation": "tanh",
                  "output_activation": "tanh", "init_seed": 0},
      "train": {"learning_rate": 0.05, "max_epochs": 200, "batch_mode": "per_sample",
                "seed": 0, "early_stop_patience": 0, "shuffle": true}
    }
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Optional

from flightbp.data_pipeline import FeatureConfig, SplitSpec
from flightbp.errors import ConfigError
from flightbp.nn_core import ActivationKind
from flightbp.training import BatchMode, TrainConfig


@dataclass(frozen=True)
class NetworkConfig:
    hidden: tuple[int, ...] = (8,)
    hidden_activation: ActivationKind = ActivationKind.TANH
    output_activation: ActivationKind = ActivationKind.TANH
    init_seed: int = 0


@dataclass(frozen=True)
class RunConfig:
    data: Optional[str] = None
    out_dir: str = "run"
    features: FeatureConfig = field(default_factory=FeatureConfig)
    split: SplitSpec = field(default_factory=SplitSpec)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def to_dict(self) -> dict:
        return {
            "data": self.data,
            "out_dir": self.out_dir,
            "features": self.features.to_dict(),
            "split": {
                "train": self.split.train_fraction,
                "val": self.split.val_fraction,
                "test": self.split.test_fraction,
                "seed": self.split.seed,
                "stratified": self.split.stratified,
            },
            "network": {
                "hidden": list(self.network.hidden),
                "hidden_activation": self.network.hidden_activation.value,
                "output_activation": self.network.output_activation.value,
                "init_seed": self.network.init_seed,
            },
            "train": {
                "learning_rate": self.train.learning_rate,
                "max_epochs": self.train.max_epochs,
                "batch_mode": self.train.batch_mode.value,
                "seed": self.train.seed,
                "early_stop_patience": self.train.early_stop_patience,
                "shuffle": self.train.shuffle,
            },
        }

    def digest(self) -> str:
        """SHA-256 of the settings that determine results (paths excluded)."""
        d = self.to_dict()
        del d["data"], d["out_dir"]
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


_SECTIONS = {
    "features": {"numeric", "categorical"},
    "split": {"train", "val", "test", "seed", "stratified"},
    "network": {"hidden", "hidden_activation", "output_activation", "init_seed"},
    "train": {"learning_rate", "max_epochs", "batch_mode", "seed", "early_stop_patience", "shuffle"},
}


class _Collector:
    def __init__(self):
        self.problems: list[str] = []

    def typed(self, section: Mapping, key: str, kind, default, where: str):
        if key not in section:
            return default
        value = section[key]
        ok = isinstance(value, kind) and not (kind in (int, float, (int, float)) and isinstance(value, bool))
        if not ok:
            names = kind.__name__ if isinstance(kind, type) else "/".join(k.__name__ for k in kind)
            self.problems.append(f"{where}.{key}: expected {names}, got {value!r}")
            return default
        return value

    def build(self, what: str, factory, **kwargs):
        try:
            return factory(**kwargs)
        except (ValueError, TypeError) as exc:
            self.problems.append(f"{what}: {exc}")
            return None


def config_from_dict(data: Mapping[str, Any]) -> RunConfig:
    """Validate a decoded config mapping; all problems are reported together."""
    c = _Collector()
    if not isinstance(data, Mapping):
        raise ConfigError([f"configuration must be a JSON object, got {type(data).__name__}"])
    for key in data:
        if key not in _SECTIONS and key not in ("data", "out_dir"):
            c.problems.append(f"unknown key {key!r}")
    sections = {}
    for name, keys in _SECTIONS.items():
        sec = data.get(name, {})
        if not isinstance(sec, Mapping):
            c.problems.append(f"{name}: expected an object, got {sec!r}")
            sec = {}
        for key in sec:
            if key not in keys:
                c.problems.append(f"{name}: unknown key {key!r}")
        sections[name] = sec

    defaults = RunConfig()
    data_path = data.get("data")
    if data_path is not None and not isinstance(data_path, str):
        c.problems.append(f"data: expected a path string, got {data_path!r}")
        data_path = None
    out_dir = data.get("out_dir", defaults.out_dir)
    if not isinstance(out_dir, str):
        c.problems.append(f"out_dir: expected a path string, got {out_dir!r}")
        out_dir = defaults.out_dir

    f = sections["features"]
    numeric = c.typed(f, "numeric", list, list(defaults.features.numeric), "features")
    categorical = c.typed(f, "categorical", list, list(defaults.features.categorical), "features")
    features = None
    if all(isinstance(v, str) for v in numeric + categorical):
        probe = FeatureConfig.__new__(FeatureConfig)
        object.__setattr__(probe, "numeric", tuple(numeric))
        object.__setattr__(probe, "categorical", tuple(categorical))
        c.problems.extend(f"features: {p}" for p in probe.problems())
        if not probe.problems():
            features = FeatureConfig(tuple(numeric), tuple(categorical))
    else:
        c.problems.append("features: column names must be strings")

    s = sections["split"]
    split = c.build(
        "split",
        SplitSpec,
        train_fraction=c.typed(s, "train", (int, float), defaults.split.train_fraction, "split"),
        val_fraction=c.typed(s, "val", (int, float), defaults.split.val_fraction, "split"),
        test_fraction=c.typed(s, "test", (int, float), defaults.split.test_fraction, "split"),
        seed=c.typed(s, "seed", int, defaults.split.seed, "split"),
        stratified=c.typed(s, "stratified", bool, defaults.split.stratified, "split"),
    )

    n = sections["network"]
    hidden = c.typed(n, "hidden", list, list(defaults.network.hidden), "network")
    if not hidden or not all(isinstance(h, int) and not isinstance(h, bool) and h > 0 for h in hidden):
        c.problems.append(f"network.hidden: expected a non-empty list of positive integers, got {hidden!r}")
        hidden = list(defaults.network.hidden)
    acts = {}
    for key in ("hidden_activation", "output_activation"):
        raw = c.typed(n, key, str, getattr(defaults.network, key).value, "network")
        try:
            acts[key] = ActivationKind.parse(raw)
        except ValueError as exc:
            c.problems.append(f"network.{key}: {exc}")
            acts[key] = getattr(defaults.network, key)
    network = NetworkConfig(
        tuple(hidden), acts["hidden_activation"], acts["output_activation"],
        c.typed(n, "init_seed", int, defaults.network.init_seed, "network"),
    )

    t = sections["train"]
    batch_mode = c.typed(t, "batch_mode", str, defaults.train.batch_mode.value, "train")
    try:
        batch_mode = BatchMode.parse(batch_mode)
    except ValueError:
        c.problems.append(f"train.batch_mode: expected per_sample or full_batch, got {batch_mode!r}")
        batch_mode = defaults.train.batch_mode
    train = c.build(
        "train",
        TrainConfig,
        learning_rate=float(c.typed(t, "learning_rate", (int, float), defaults.train.learning_rate, "train")),
        max_epochs=c.typed(t, "max_epochs", int, defaults.train.max_epochs, "train"),
        batch_mode=batch_mode,
        seed=c.typed(t, "seed", int, defaults.train.seed, "train"),
        early_stop_patience=c.typed(t, "early_stop_patience", int, defaults.train.early_stop_patience, "train"),
        shuffle=c.typed(t, "shuffle", bool, defaults.train.shuffle, "train"),
    )

    if c.problems:
        raise ConfigError(c.problems)
    return RunConfig(data_path, out_dir, features, split, network, train)


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError([f"cannot read config {path}: {exc.strerror}"]) from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: invalid JSON ({exc})"]) from None
    return config_from_dict(data)


def with_overrides(
    cfg: RunConfig,
    *,
    data=None,
    out_dir=None,
    seed=None,
    hidden=None,
    learning_rate=None,
    epochs=None,
    batch_mode=None,
) -> RunConfig:
    """Apply command-line flags; ``seed`` reseeds the split, initialisation and shuffling."""
    problems = []
    if data is not None:
        cfg = replace(cfg, data=str(data))
    if out_dir is not None:
        cfg = replace(cfg, out_dir=str(out_dir))
    if seed is not None:
        cfg = replace(
            cfg,
            split=replace(cfg.split, seed=seed),
            network=replace(cfg.network, init_seed=seed),
            train=replace(cfg.train, seed=seed),
        )
    if hidden is not None:
        if not hidden or any(h < 1 for h in hidden):
            problems.append(f"--hidden: widths must be positive, got {hidden}")
        else:
            cfg = replace(cfg, network=replace(cfg.network, hidden=tuple(hidden)))
    train_kwargs = {}
    if learning_rate is not None:
        train_kwargs["learning_rate"] = learning_rate
    if epochs is not None:
        train_kwargs["max_epochs"] = epochs
    if batch_mode is not None:
        train_kwargs["batch_mode"] = batch_mode
    if train_kwargs:
        try:
            cfg = replace(cfg, train=replace(cfg.train, **train_kwargs))
        except ValueError as exc:
            problems.append(f"train: {exc}")
    if problems:
        raise ConfigError(problems)
    return cfg
