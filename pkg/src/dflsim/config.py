"""Scenario configuration: schema, YAML parsing, validation, stable ids.

A scenario file is a key-value tree (YAML). Every validation error names the
offending key path. Defaults mirror the benchmark setup this harness
reproduces: 10 clients, 10 rounds, 3 epochs per round, IID data.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field, replace

import yaml

from .aggregators import AGGREGATOR_NAMES, AggregatorParams
from .attacks import ATTACK_KINDS, AttackSpec, TriggerSpec

PARADIGMS = ("cfl", "dfl")
TOPOLOGY_NAMES = ("fully_connected", "ring", "star", "watts_strogatz")
DATASET_NAMES = ("mnist", "fashion_mnist", "synthetic")


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        self.key_path = path
        super().__init__(f"{path}: {message}")


@dataclass(frozen=True)
class DatasetConfig:
    name: str = "mnist"
    train_images: str | None = None
    train_labels: str | None = None
    test_images: str | None = None
    test_labels: str | None = None
    subsample: float = 1.0
    # synthetic-only knobs
    classes: int = 10
    per_class: int = 100
    test_per_class: int = 50
    dim: int = 16
    spread: float = 0.05


@dataclass(frozen=True)
class TopologyConfig:
    name: str = "fully_connected"
    hub: int = 0            # star only
    k: int = 4              # watts_strogatz only
    p: float = 0.3          # watts_strogatz only


@dataclass(frozen=True)
class TrainParams:
    learning_rate: float = 0.1
    batch_size: int = 64


@dataclass(frozen=True)
class VoyagerConfig:
    enable: bool = False
    tau: float = 0.3


@dataclass(frozen=True)
class ScenarioConfig:
    paradigm: str = "dfl"
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    n_clients: int = 10
    rounds: int = 10
    epochs_per_round: int = 3
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    hidden_sizes: tuple[int, ...] = (256, 128)
    train: TrainParams = field(default_factory=TrainParams)
    holdout_frac: float = 0.1
    attack: AttackSpec = field(default_factory=AttackSpec)
    pnr_percent: int = 0
    aggregator: str = "fedavg"
    aggregator_params: AggregatorParams = field(default_factory=AggregatorParams)
    voyager: VoyagerConfig = field(default_factory=VoyagerConfig)
    master_seed: int = 0
    workers: int = 1
    bandwidth_mbps: float = 1.0

    def to_canonical_dict(self) -> dict:
        return {
            "paradigm": self.paradigm,
            "topology": {"name": self.topology.name, "hub": self.topology.hub,
                         "k": self.topology.k, "p": self.topology.p},
            "n_clients": self.n_clients,
            "rounds": self.rounds,
            "epochs_per_round": self.epochs_per_round,
            "dataset": {
                "name": self.dataset.name,
                "train_images": self.dataset.train_images,
                "train_labels": self.dataset.train_labels,
                "test_images": self.dataset.test_images,
                "test_labels": self.dataset.test_labels,
                "subsample": self.dataset.subsample,
                "classes": self.dataset.classes,
                "per_class": self.dataset.per_class,
                "test_per_class": self.dataset.test_per_class,
                "dim": self.dataset.dim,
                "spread": self.dataset.spread,
            },
            "hidden_sizes": list(self.hidden_sizes),
            "train": {"learning_rate": self.train.learning_rate,
                      "batch_size": self.train.batch_size},
            "holdout_frac": self.holdout_frac,
            "attack": {
                "kind": self.attack.kind,
                "noise_ratio": self.attack.noise_ratio,
                "source_label": self.attack.source_label,
                "target_label": self.attack.target_label,
                "trigger": {"size": self.attack.trigger.size,
                            "shape": self.attack.trigger.shape,
                            "corner": self.attack.trigger.corner,
                            "intensity": self.attack.trigger.intensity},
            },
            "pnr_percent": self.pnr_percent,
            "aggregator": self.aggregator,
            "aggregator_params": {"krum_f": self.aggregator_params.krum_f,
                                  "trim_beta": self.aggregator_params.trim_beta,
                                  "sentinel_sim_threshold": self.aggregator_params.sentinel_sim_threshold},
            "voyager": {"enable": self.voyager.enable, "tau": self.voyager.tau},
            "master_seed": self.master_seed,
            "bandwidth_mbps": self.bandwidth_mbps,
        }

    def scenario_id(self) -> str:
        # workers is execution detail, not identity: excluded from the hash.
        text = json.dumps(self.to_canonical_dict(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:12]


def _expect(condition: bool, path: str, message: str) -> None:
    if not condition:
        raise ConfigError(path, message)


def _check_keys(d: dict, allowed: set[str], path: str) -> None:
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"{path}.{sorted(unknown)[0]}" if path else sorted(unknown)[0],
                          f"unknown key (allowed: {sorted(allowed)})")


def _get(d: dict, key: str, default, types, path: str):
    value = d.get(key, default)
    if value is None and default is None:
        return None
    if not isinstance(value, types) or isinstance(value, bool) and bool not in (
            types if isinstance(types, tuple) else (types,)):
        raise ConfigError(f"{path}.{key}" if path else key,
                          f"expected {types}, got {type(value).__name__}")
    return value


def validate(cfg: ScenarioConfig, base_dir: str = ".") -> ScenarioConfig:
    """Full semantic validation; returns the config with paths resolved."""
    _expect(cfg.paradigm in PARADIGMS, "paradigm", f"must be one of {PARADIGMS}")
    _expect(cfg.topology.name in TOPOLOGY_NAMES, "topology.name",
            f"must be one of {TOPOLOGY_NAMES}")
    _expect(cfg.n_clients >= 1, "n_clients", "must be >= 1")
    _expect(cfg.rounds >= 0, "rounds", "must be >= 0")
    _expect(cfg.epochs_per_round >= 1, "epochs_per_round", "must be >= 1")
    _expect(0 < cfg.holdout_frac < 1, "holdout_frac", "must be in (0, 1)")
    _expect(cfg.pnr_percent % 10 == 0 and 0 <= cfg.pnr_percent <= 90, "pnr_percent",
            "must be a multiple of 10 in 0..90")
    _expect(cfg.aggregator in AGGREGATOR_NAMES, "aggregator",
            f"unknown aggregator (allowed: {AGGREGATOR_NAMES})")
    _expect(cfg.attack.kind in ATTACK_KINDS, "attack.kind",
            f"must be one of {ATTACK_KINDS}")
    _expect(cfg.workers >= 1, "workers", "must be >= 1")
    _expect(cfg.bandwidth_mbps > 0, "bandwidth_mbps", "must be > 0")
    _expect(cfg.dataset.name in DATASET_NAMES, "dataset.name",
            f"must be one of {DATASET_NAMES}")
    _expect(0 < cfg.dataset.subsample <= 1, "dataset.subsample", "must be in (0, 1]")
    _expect(all(s > 0 for s in cfg.hidden_sizes), "hidden_sizes", "sizes must be positive")

    if cfg.pnr_percent > 0:
        _expect(cfg.attack.kind != "none", "attack.kind",
                "poisoned nodes configured but attack is 'none'")
    if cfg.paradigm == "cfl":
        _expect(cfg.aggregator not in ("sentinel", "voyager"), "aggregator",
                f"{cfg.aggregator} is a decentralized defense; use paradigm: dfl")
        _expect(not cfg.voyager.enable, "voyager.enable", "voyager requires paradigm: dfl")
    if cfg.topology.name == "watts_strogatz":
        _expect(cfg.topology.k >= 2 and cfg.topology.k % 2 == 0, "topology.k",
                "must be even and >= 2")
        _expect(cfg.topology.k < cfg.n_clients, "topology.k", "must be < n_clients")
        _expect(0 <= cfg.topology.p <= 1, "topology.p", "must be in [0, 1]")
    if cfg.topology.name == "star":
        _expect(0 <= cfg.topology.hub < cfg.n_clients, "topology.hub",
                "must be a valid client id")

    ds = cfg.dataset
    if ds.name in ("mnist", "fashion_mnist"):
        resolved = {}
        for key in ("train_images", "train_labels", "test_images", "test_labels"):
            value = getattr(ds, key)
            _expect(value is not None, f"dataset.{key}", "required for IDX datasets")
            path = value if os.path.isabs(value) else os.path.join(base_dir, value)
            _expect(os.path.exists(path), f"dataset.{key}", f"file not found: {path}")
            resolved[key] = path
        ds = replace(ds, **resolved)
    else:
        _expect(ds.classes >= 2, "dataset.classes", "must be >= 2")
        _expect(ds.per_class >= 1, "dataset.per_class", "must be >= 1")
        _expect(ds.test_per_class >= 1, "dataset.test_per_class", "must be >= 1")
        _expect(ds.dim >= ds.classes, "dataset.dim", "must be >= classes")
        if cfg.attack.kind == "backdoor":
            raise ConfigError("attack.kind", "backdoor needs image-shaped data "
                                             "(synthetic blobs have no image_shape)")
    return replace(cfg, dataset=ds)


def config_from_dict(raw: dict, base_dir: str = ".") -> ScenarioConfig:
    """Build and validate a ScenarioConfig from a parsed key-value tree."""
    _expect(isinstance(raw, dict), "<root>", "config must be a mapping")
    _check_keys(raw, {"paradigm", "topology", "n_clients", "rounds", "epochs_per_round",
                      "dataset", "hidden_sizes", "train", "holdout_frac", "attack",
                      "pnr_percent", "aggregator", "aggregator_params", "voyager",
                      "master_seed", "workers", "bandwidth_mbps"}, "")

    topo_raw = _get(raw, "topology", {}, dict, "")
    _check_keys(topo_raw, {"name", "hub", "k", "p"}, "topology")
    topology = TopologyConfig(
        name=_get(topo_raw, "name", "fully_connected", str, "topology"),
        hub=_get(topo_raw, "hub", 0, int, "topology"),
        k=_get(topo_raw, "k", 4, int, "topology"),
        p=float(_get(topo_raw, "p", 0.3, (int, float), "topology")),
    )

    ds_raw = _get(raw, "dataset", {}, dict, "")
    _check_keys(ds_raw, {"name", "train_images", "train_labels", "test_images",
                         "test_labels", "subsample", "classes", "per_class",
                         "test_per_class", "dim", "spread"}, "dataset")
    dataset = DatasetConfig(
        name=_get(ds_raw, "name", "mnist", str, "dataset"),
        train_images=_get(ds_raw, "train_images", None, str, "dataset"),
        train_labels=_get(ds_raw, "train_labels", None, str, "dataset"),
        test_images=_get(ds_raw, "test_images", None, str, "dataset"),
        test_labels=_get(ds_raw, "test_labels", None, str, "dataset"),
        subsample=float(_get(ds_raw, "subsample", 1.0, (int, float), "dataset")),
        classes=_get(ds_raw, "classes", 10, int, "dataset"),
        per_class=_get(ds_raw, "per_class", 100, int, "dataset"),
        test_per_class=_get(ds_raw, "test_per_class", 50, int, "dataset"),
        dim=_get(ds_raw, "dim", 16, int, "dataset"),
        spread=float(_get(ds_raw, "spread", 0.05, (int, float), "dataset")),
    )

    train_raw = _get(raw, "train", {}, dict, "")
    _check_keys(train_raw, {"learning_rate", "batch_size"}, "train")
    train = TrainParams(
        learning_rate=float(_get(train_raw, "learning_rate", 0.1, (int, float), "train")),
        batch_size=_get(train_raw, "batch_size", 64, int, "train"),
    )

    attack_raw = _get(raw, "attack", {}, dict, "")
    _check_keys(attack_raw, {"kind", "noise_ratio", "source_label", "target_label",
                             "trigger"}, "attack")
    trigger_raw = _get(attack_raw, "trigger", {}, dict, "attack")
    _check_keys(trigger_raw, {"size", "shape", "corner", "intensity"}, "attack.trigger")
    try:
        trigger = TriggerSpec(
            size=_get(trigger_raw, "size", 10, int, "attack.trigger"),
            shape=_get(trigger_raw, "shape", "x", str, "attack.trigger"),
            corner=_get(trigger_raw, "corner", "top_right", str, "attack.trigger"),
            intensity=float(_get(trigger_raw, "intensity", 1.0, (int, float), "attack.trigger")),
        )
        attack = AttackSpec(
            kind=_get(attack_raw, "kind", "none", str, "attack"),
            noise_ratio=float(_get(attack_raw, "noise_ratio", 0.3, (int, float), "attack")),
            source_label=_get(attack_raw, "source_label", 7, int, "attack"),
            target_label=_get(attack_raw, "target_label", 4, int, "attack"),
            trigger=trigger,
        )
    except ValueError as exc:
        raise ConfigError("attack", str(exc)) from exc

    agg_raw = _get(raw, "aggregator_params", {}, dict, "")
    _check_keys(agg_raw, {"krum_f", "trim_beta", "sentinel_sim_threshold"}, "aggregator_params")
    agg_params = AggregatorParams(
        krum_f=_get(agg_raw, "krum_f", None, int, "aggregator_params"),
        trim_beta=float(_get(agg_raw, "trim_beta", 0.2, (int, float), "aggregator_params")),
        sentinel_sim_threshold=float(_get(agg_raw, "sentinel_sim_threshold", 0.5,
                                          (int, float), "aggregator_params")),
    )

    voy_raw = _get(raw, "voyager", {}, dict, "")
    _check_keys(voy_raw, {"enable", "tau"}, "voyager")
    voyager = VoyagerConfig(
        enable=_get(voy_raw, "enable", False, bool, "voyager"),
        tau=float(_get(voy_raw, "tau", 0.3, (int, float), "voyager")),
    )

    hidden = _get(raw, "hidden_sizes", [256, 128], list, "")
    aggregator = _get(raw, "aggregator", "fedavg", str, "")
    cfg = ScenarioConfig(
        paradigm=_get(raw, "paradigm", "dfl", str, ""),
        topology=topology,
        n_clients=_get(raw, "n_clients", 10, int, ""),
        rounds=_get(raw, "rounds", 10, int, ""),
        epochs_per_round=_get(raw, "epochs_per_round", 3, int, ""),
        dataset=dataset,
        hidden_sizes=tuple(hidden),
        train=train,
        holdout_frac=float(_get(raw, "holdout_frac", 0.1, (int, float), "")),
        attack=attack,
        pnr_percent=_get(raw, "pnr_percent", 0, int, ""),
        aggregator=aggregator,
        aggregator_params=agg_params,
        voyager=voyager if aggregator != "voyager" else VoyagerConfig(True, voyager.tau),
        master_seed=_get(raw, "master_seed", 0, int, ""),
        workers=_get(raw, "workers", 1, int, ""),
        bandwidth_mbps=float(_get(raw, "bandwidth_mbps", 1.0, (int, float), "")),
    )
    return validate(cfg, base_dir)


def parse_config(path: str) -> ScenarioConfig:
    """Read, parse, and fully validate a scenario file."""
    with open(path, "r", encoding="utf-8") as f:
        try:
            raw = yaml.safe_load(f)
        except yaml.YAMLError as exc:
            raise ConfigError("<file>", f"not valid YAML: {exc}") from exc
    if raw is None:
        raw = {}
    return config_from_dict(raw, base_dir=os.path.dirname(os.path.abspath(path)))
