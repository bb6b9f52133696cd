"""Experiment configuration: JSON schema, validation, defaults.

Every field is validated with an error naming its path; unknown keys are
rejected. Omitting the whole file section falls back to desk-scale
defaults (the trainable micro zoo under its calibrated budget).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .budget import Budget, CostCoefficients, ModelSpec
from .dataset import DEFAULT_NOISE_SIGMA, SPLIT_NAMES, split_path
from .errors import ConfigError
from .nn import arch_param_count, validate_arch
from .precision import Precision
from .zoo import MICRO_MEMORY_BYTES, MICRO_TRAIN_SECONDS, micro_zoo

_COST_KEYS = ("fixed_bytes", "activation_bytes_per_pixel", "param_byte_multiplier",
              "step_seconds", "pixel_seconds", "amp_time_factor", "amp_activation_factor")


@dataclass(frozen=True)
class OptimizerConfig:
    lr_ref: float = 8e-3
    b_ref: int = 64
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    min_lr: float = 1e-6


@dataclass(frozen=True)
class DatasetConfig:
    path: str = "data"
    num_classes: int = 10
    base_resolution: int = 32
    channels: int = 3
    train_count: int = 400
    val_count: int = 200
    test_count: int = 200
    noise_sigma: float = DEFAULT_NOISE_SIGMA

    def counts(self) -> dict:
        return {"train": self.train_count, "val": self.val_count,
                "test": self.test_count}


@dataclass
class ExperimentConfig:
    seed: int = 0
    clock_mode: str = "virtual"
    predicate_mode: str = "analytic"
    budget: Budget = field(default_factory=lambda: Budget(
        memory_bytes=MICRO_MEMORY_BYTES, train_seconds=MICRO_TRAIN_SECONDS))
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    loss_scale: float = 1024.0
    size_grid: tuple = (16, 24)
    precisions: tuple = (Precision.FP32, Precision.AMP)
    batch_cap: int = 512
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    zoo: list = field(default_factory=list)  # filled with micro_zoo when empty

    def __post_init__(self):
        if not self.zoo:
            self.zoo = micro_zoo(self.dataset.num_classes)

    def dataset_dir(self) -> Path:
        return Path(self.dataset.path)

    def require_dataset_files(self) -> None:
        for name in SPLIT_NAMES:
            p = split_path(self.dataset.path, name)
            if not p.exists():
                raise ConfigError("dataset.path", f"missing dataset file {p}; "
                                  f"run gen-data first")


def _expect_mapping(value, where: str) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(where, f"expected a mapping, got {type(value).__name__}")
    return value


def _reject_unknown(d: dict, allowed, where: str) -> None:
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}.{unknown[0]}" if where else unknown[0],
                          "unknown key")


def _get_number(d: dict, key: str, where: str, default, *, minimum=None,
                exclusive_minimum=None, maximum=None, integer=False):
    if key not in d:
        if default is None:
            raise ConfigError(f"{where}.{key}", "required key is missing")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}.{key}", f"expected a number, got {v!r}")
    if integer:
        if isinstance(v, float) and not v.is_integer():
            raise ConfigError(f"{where}.{key}", f"expected an integer, got {v!r}")
        v = int(v)
    if minimum is not None and v < minimum:
        raise ConfigError(f"{where}.{key}", f"must be >= {minimum}, got {v}")
    if exclusive_minimum is not None and v <= exclusive_minimum:
        raise ConfigError(f"{where}.{key}", f"must be > {exclusive_minimum}, got {v}")
    if maximum is not None and v > maximum:
        raise ConfigError(f"{where}.{key}", f"must be <= {maximum}, got {v}")
    return v


def _parse_budget(d) -> Budget:
    d = _expect_mapping(d, "budget")
    _reject_unknown(d, ("memory_bytes", "train_seconds", "time_scale"), "budget")
    return Budget(
        memory_bytes=_get_number(d, "memory_bytes", "budget", MICRO_MEMORY_BYTES,
                                 minimum=1, integer=True),
        train_seconds=_get_number(d, "train_seconds", "budget", MICRO_TRAIN_SECONDS,
                                  exclusive_minimum=0.0),
        time_scale=_get_number(d, "time_scale", "budget", 1.0, exclusive_minimum=0.0))


def _parse_optimizer(d) -> OptimizerConfig:
    d = _expect_mapping(d, "optimizer")
    _reject_unknown(d, ("lr_ref", "b_ref", "beta1", "beta2", "eps",
                        "weight_decay", "min_lr"), "optimizer")
    return OptimizerConfig(
        lr_ref=_get_number(d, "lr_ref", "optimizer", OptimizerConfig.lr_ref,
                           exclusive_minimum=0.0),
        b_ref=_get_number(d, "b_ref", "optimizer", OptimizerConfig.b_ref,
                          minimum=1, integer=True),
        beta1=_get_number(d, "beta1", "optimizer", OptimizerConfig.beta1,
                          minimum=0.0, maximum=0.9999),
        beta2=_get_number(d, "beta2", "optimizer", OptimizerConfig.beta2,
                          minimum=0.0, maximum=0.999999),
        eps=_get_number(d, "eps", "optimizer", OptimizerConfig.eps,
                        exclusive_minimum=0.0),
        weight_decay=_get_number(d, "weight_decay", "optimizer",
                                 OptimizerConfig.weight_decay, minimum=0.0),
        min_lr=_get_number(d, "min_lr", "optimizer", OptimizerConfig.min_lr,
                           minimum=0.0))


def _parse_dataset(d) -> DatasetConfig:
    d = _expect_mapping(d, "dataset")
    _reject_unknown(d, ("path", "num_classes", "base_resolution", "channels",
                        "train_count", "val_count", "test_count", "noise_sigma"),
                    "dataset")
    path = d.get("path", DatasetConfig.path)
    if not isinstance(path, str) or not path:
        raise ConfigError("dataset.path", "expected a non-empty string")
    k = _get_number(d, "num_classes", "dataset", DatasetConfig.num_classes,
                    minimum=2, integer=True)
    cfg = DatasetConfig(
        path=path, num_classes=k,
        base_resolution=_get_number(d, "base_resolution", "dataset",
                                    DatasetConfig.base_resolution, minimum=1,
                                    integer=True),
        channels=_get_number(d, "channels", "dataset", DatasetConfig.channels,
                             minimum=1, integer=True),
        train_count=_get_number(d, "train_count", "dataset",
                                DatasetConfig.train_count, minimum=k, integer=True),
        val_count=_get_number(d, "val_count", "dataset", DatasetConfig.val_count,
                              minimum=k, integer=True),
        test_count=_get_number(d, "test_count", "dataset", DatasetConfig.test_count,
                               minimum=k, integer=True),
        noise_sigma=_get_number(d, "noise_sigma", "dataset",
                                DatasetConfig.noise_sigma, minimum=0.0))
    return cfg


def _parse_cost(d, where: str) -> CostCoefficients:
    d = _expect_mapping(d, where)
    _reject_unknown(d, _COST_KEYS, where)
    kwargs = {}
    for key in _COST_KEYS:
        default = getattr(CostCoefficients, key, None)
        if key in ("fixed_bytes", "activation_bytes_per_pixel"):
            kwargs[key] = _get_number(d, key, where, None, minimum=0.0)
        else:
            kwargs[key] = _get_number(d, key, where, default, minimum=0.0)
    try:
        return CostCoefficients(**kwargs)
    except ValueError as err:
        raise ConfigError(where, str(err)) from None


def _parse_zoo(entries, dataset_cfg: DatasetConfig) -> list:
    if not isinstance(entries, list) or not entries:
        raise ConfigError("zoo", "expected a non-empty list of model entries")
    specs, seen = [], set()
    for i, entry in enumerate(entries):
        where = f"zoo[{i}]"
        entry = _expect_mapping(entry, where)
        _reject_unknown(entry, ("id", "param_count", "cost", "layers"), where)
        model_id = entry.get("id")
        if not isinstance(model_id, str) or not model_id:
            raise ConfigError(f"{where}.id", "expected a non-empty string")
        if model_id in seen:
            raise ConfigError(f"{where}.id", f"duplicate model id {model_id!r}")
        seen.add(model_id)
        if "cost" not in entry:
            raise ConfigError(f"{where}.cost", "required key is missing")
        cost = _parse_cost(entry["cost"], f"{where}.cost")
        layers = entry.get("layers")
        trainable = None
        if layers is not None:
            if not isinstance(layers, list):
                raise ConfigError(f"{where}.layers", "expected a list of layer descriptors")
            try:
                validate_arch(layers)
            except ValueError as err:
                raise ConfigError(f"{where}.layers", str(err)) from None
            trainable = tuple(tuple(l) for l in layers)
            head_out = trainable[-1][2]
            if head_out != dataset_cfg.num_classes:
                raise ConfigError(f"{where}.layers",
                                  f"classifier head emits {head_out} classes but "
                                  f"dataset.num_classes is {dataset_cfg.num_classes}")
            first = next(l for l in trainable if l[0] in ("conv3x3", "pointwise"))
            if first[1] != dataset_cfg.channels:
                raise ConfigError(f"{where}.layers",
                                  f"first layer takes {first[1]} channels but "
                                  f"dataset.channels is {dataset_cfg.channels}")
        if "param_count" in entry:
            pc = _get_number(entry, "param_count", where, None, minimum=0, integer=True)
            if trainable is not None and pc != arch_param_count(trainable):
                raise ConfigError(f"{where}.param_count",
                                  f"{pc} does not match the layer stack's "
                                  f"{arch_param_count(trainable)} parameters")
        elif trainable is not None:
            pc = arch_param_count(trainable)
        else:
            raise ConfigError(f"{where}.param_count",
                              "required for models without layers")
        specs.append(ModelSpec(id=model_id, param_count=pc, cost=cost,
                               trainable=trainable))
    return specs


_TOP_KEYS = ("seed", "clock_mode", "predicate_mode", "budget", "optimizer",
             "loss_scale", "size_grid", "precisions", "batch_cap", "dataset", "zoo")


def config_from_dict(raw: dict) -> ExperimentConfig:
    raw = _expect_mapping(raw, "<config>")
    _reject_unknown(raw, _TOP_KEYS, "")
    seed = _get_number(raw, "seed", "<config>", 0, minimum=0, integer=True)

    clock_mode = raw.get("clock_mode", "virtual")
    if clock_mode not in ("virtual", "wall"):
        raise ConfigError("clock_mode", f"must be 'virtual' or 'wall', got {clock_mode!r}")
    predicate_mode = raw.get("predicate_mode", "analytic")
    if predicate_mode not in ("analytic", "instrumented"):
        raise ConfigError("predicate_mode",
                          f"must be 'analytic' or 'instrumented', got {predicate_mode!r}")

    try:
        budget = _parse_budget(raw.get("budget", {}))
    except ValueError as err:
        raise ConfigError("budget", str(err)) from None
    optimizer = _parse_optimizer(raw.get("optimizer", {}))
    loss_scale = _get_number(raw, "loss_scale", "<config>", 1024.0,
                             exclusive_minimum=0.0)
    dataset_cfg = _parse_dataset(raw.get("dataset", {}))

    grid = raw.get("size_grid", [16, 24])
    if (not isinstance(grid, list) or not grid
            or any(not isinstance(s, int) or isinstance(s, bool) for s in grid)):
        raise ConfigError("size_grid", "expected a non-empty list of integers")
    if len(set(grid)) != len(grid):
        raise ConfigError("size_grid", "sizes must be distinct")
    size_grid = tuple(sorted(grid))

    precisions_raw = raw.get("precisions", ["fp32", "amp"])
    if not isinstance(precisions_raw, list) or not precisions_raw:
        raise ConfigError("precisions", "expected a non-empty list")
    precisions = []
    for p in precisions_raw:
        try:
            q = Precision(p)
        except ValueError:
            raise ConfigError("precisions", f"unknown precision {p!r}") from None
        if q in precisions:
            raise ConfigError("precisions", f"duplicate precision {p!r}")
        precisions.append(q)

    batch_cap = _get_number(raw, "batch_cap", "<config>", 512, minimum=1, integer=True)

    if "zoo" in raw:
        zoo = _parse_zoo(raw["zoo"], dataset_cfg)
    else:
        zoo = micro_zoo(dataset_cfg.num_classes)

    min_input = max((3 for spec in zoo if spec.trainable is not None), default=1)
    if size_grid[0] < min_input:
        raise ConfigError("size_grid",
                          f"size {size_grid[0]} is below the minimum input "
                          f"size {min_input} of the trainable models")
    if predicate_mode == "instrumented" and any(s.trainable is None for s in zoo):
        bad = next(s.id for s in zoo if s.trainable is None)
        raise ConfigError("predicate_mode",
                          f"instrumented profiling needs trainable layers, but "
                          f"zoo entry {bad!r} has none")

    return ExperimentConfig(seed=seed, clock_mode=clock_mode,
                            predicate_mode=predicate_mode, budget=budget,
                            optimizer=optimizer, loss_scale=loss_scale,
                            size_grid=size_grid, precisions=tuple(precisions),
                            batch_cap=batch_cap, dataset=dataset_cfg, zoo=zoo)


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(str(path), "config file does not exist")
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as err:
        raise ConfigError(str(path), f"not valid JSON: {err}") from None
    return config_from_dict(raw)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Full echo of the effective configuration, defaults included."""
    return {
        "seed": cfg.seed,
        "clock_mode": cfg.clock_mode,
        "predicate_mode": cfg.predicate_mode,
        "budget": {"memory_bytes": cfg.budget.memory_bytes,
                   "train_seconds": cfg.budget.train_seconds,
                   "time_scale": cfg.budget.time_scale},
        "optimizer": {"lr_ref": cfg.optimizer.lr_ref, "b_ref": cfg.optimizer.b_ref,
                      "beta1": cfg.optimizer.beta1, "beta2": cfg.optimizer.beta2,
                      "eps": cfg.optimizer.eps,
                      "weight_decay": cfg.optimizer.weight_decay,
                      "min_lr": cfg.optimizer.min_lr},
        "loss_scale": cfg.loss_scale,
        "size_grid": list(cfg.size_grid),
        "precisions": [p.value for p in cfg.precisions],
        "batch_cap": cfg.batch_cap,
        "dataset": {"path": cfg.dataset.path, "num_classes": cfg.dataset.num_classes,
                    "base_resolution": cfg.dataset.base_resolution,
                    "channels": cfg.dataset.channels,
                    "train_count": cfg.dataset.train_count,
                    "val_count": cfg.dataset.val_count,
                    "test_count": cfg.dataset.test_count,
                    "noise_sigma": cfg.dataset.noise_sigma},
        "zoo": [{"id": s.id, "param_count": s.param_count,
                 "cost": {k: getattr(s.cost, k) for k in _COST_KEYS},
                 "layers": [list(l) for l in s.trainable] if s.trainable else None}
                for s in cfg.zoo],
    }
