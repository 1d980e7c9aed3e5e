"""
Run configuration models and the flat key-value config loader.

Config files are flat JSON objects of dotted keys, e.g.

    {"train.epochs": 15, "train.loss.family": "df_margin", "train.strategy.kind": "dfo"}

Every key must name an existing field; unknown keys are errors.
"""

import json
import logging
import os
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from distance_forward.core.layers import LayerSpec
from distance_forward.exceptions import ConfigurationError

logger = logging.getLogger(__name__)

CONFIG_DIR = Path(__file__).parent.parent / "config"
DATASET_ROOT_ENV = "DF_DATASET_ROOT"
MAX_DEFAULT_PAIRS = 9

# relative gradient-noise sigma per level (level 0 = clean)
GRAD_NOISE_SIGMAS = {1: 0.1, 2: 0.25, 3: 0.5, 4: 1.0, 5: 2.0}


class LossFamily(str, Enum):
    FF = "ff"
    SYMBA = "symba"
    DF_MARGIN = "df_margin"


class Aggregation(str, Enum):
    MAX = "max"
    AVG = "avg"


class StrategyKind(str, Enum):
    GREEDY = "greedy"
    DFO = "dfo"
    DFR = "dfr"
    BP = "bp"


class LabelMode(str, Enum):
    LEARNABLE_CHANNEL = "learnable_channel"
    PIXEL_REPLACE = "pixel_replace"


class NoiseKind(str, Enum):
    NONE = "none"
    POISSON_SHOT = "poisson_shot"
    IMPULSE = "impulse"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True, use_enum_values=False)


class LossConfig(_Section):
    """Goodness loss family and its scalars"""
    family: LossFamily = LossFamily.DF_MARGIN
    theta: float = Field(2.0, description="FF threshold")
    margin: float = Field(1.0, ge=0.0, description="Margin m+ of the DF margin loss")
    lambda_reg: float = Field(0.1, ge=0.0, alias="lambda", description="Weight of the negative-goodness penalty")
    n_pairs: Optional[int] = Field(None, ge=1, description="Negatives per positive; None = min(K-1, 9)")
    aggregation: Aggregation = Aggregation.MAX
    mean_goodness: bool = Field(False, description="Divide goodness by the unit width")

    def resolve_n_pairs(self, num_classes: int) -> int:
        if num_classes < 2:
            raise ConfigurationError(f"Need at least 2 classes to build negatives, got {num_classes}")
        n = self.n_pairs if self.n_pairs is not None else min(num_classes - 1, MAX_DEFAULT_PAIRS)
        if not 1 <= n <= num_classes - 1:
            raise ConfigurationError(f"n_pairs={n} must lie in [1, {num_classes - 1}] for {num_classes} classes")
        return n


class StrategyConfig(_Section):
    """Local update scheme"""
    kind: StrategyKind = StrategyKind.DFO
    group_size: Optional[int] = Field(None, ge=1, description="Window size in units; greedy forces 1, default 2")
    feedback_seed: int = 0
    feedback_scale: float = Field(1.0, gt=0.0)

    @model_validator(mode="after")
    def _resolve_group_size(self):
        if self.kind == StrategyKind.GREEDY:
            if self.group_size not in (None, 1):
                raise ValueError("greedy strategy requires group_size = 1")
            self.group_size = 1
        elif self.group_size is None:
            self.group_size = 2
        return self


class TrainConfig(_Section):
    epochs: int = Field(15, ge=0)
    batch_size: int = Field(100, ge=1)
    base_lr: float = Field(1e-3, gt=0.0)
    loss: LossConfig = Field(default_factory=LossConfig)
    strategy: StrategyConfig = Field(default_factory=StrategyConfig)
    grad_noise_sigma: float = Field(0.0, ge=0.0, description="Relative gradient-noise sigma; overrides grad_noise_level")
    grad_noise_level: int = Field(0, ge=0, le=5, description="Gradient-noise grid level, 0 = clean")
    seed: int = 0
    eval_every: int = Field(1, ge=0, description="Evaluate on the test split every n epochs; 0 = never")
    eval_samples: Optional[int] = Field(1000, ge=1, description="Test samples per evaluation; None = all")

    @property
    def effective_grad_noise_sigma(self) -> float:
        if self.grad_noise_sigma > 0:
            return self.grad_noise_sigma
        return GRAD_NOISE_SIGMAS.get(self.grad_noise_level, 0.0)


class DecodeConfig(_Section):
    layer_set: Optional[List[int]] = Field(None, description="Units whose goodness is summed; None = default")

    @field_validator("layer_set")
    @classmethod
    def _non_empty(cls, v):
        if v is not None and len(v) == 0:
            raise ValueError("layer_set must not be empty")
        return v

    def resolve(self, depth: int, strategy: StrategyKind = StrategyKind.DFO) -> List[int]:
        """
        Units to decode from. Defaults to every unit but the first; the BP
        baseline only carries a loss on its top unit and decodes from it.
        """
        if self.layer_set is not None:
            bad = [u for u in self.layer_set if not 0 <= u < depth]
            if bad:
                raise ConfigurationError(f"layer_set entries {bad} outside [0, {depth})")
            return sorted(set(self.layer_set))
        if strategy == StrategyKind.BP:
            return [depth - 1]
        return list(range(1, depth)) if depth > 1 else [0]


class NoiseSpec(_Section):
    kind: NoiseKind = NoiseKind.NONE
    level: int = Field(1, ge=1, le=5)


class ModelConfig(_Section):
    preset: str = Field("mlp", description="mlp | cnn | custom")
    width: int = Field(1000, ge=1)
    depth: int = Field(3, ge=1)
    channels: List[int] = Field(default_factory=lambda: [32, 32, 64, 64, 128, 128])
    pool_after: List[int] = Field(default_factory=lambda: [1, 3, 5])
    batchnorm: bool = True
    layers: Optional[List[LayerSpec]] = Field(None, description="Explicit layer chain for preset=custom")

    @model_validator(mode="after")
    def _check_preset(self):
        if self.preset not in ("mlp", "cnn", "custom"):
            raise ValueError(f"unknown model preset '{self.preset}'")
        if self.preset == "custom" and not self.layers:
            raise ValueError("preset=custom requires model.layers")
        return self


class DataConfig(_Section):
    dataset: str = Field("mnist", description="mnist | fmnist | cifar10 | raw")
    root: Optional[str] = Field(None, description="Dataset root; falls back to $DF_DATASET_ROOT")
    subdir: Optional[str] = Field(None, description="Directory under the root; defaults to the dataset name")
    label_mode: LabelMode = LabelMode.LEARNABLE_CHANNEL
    augment: bool = Field(False, description="Random crop/flip (CIFAR-10)")
    num_classes: int = Field(10, ge=1)
    train_limit: Optional[int] = Field(None, ge=1, description="Use only the first n training samples")

    @field_validator("dataset")
    @classmethod
    def _known_dataset(cls, v):
        if v not in ("mnist", "fmnist", "cifar10", "raw"):
            raise ValueError(f"unknown dataset '{v}'")
        return v


class RobustnessConfig(_Section):
    kinds: List[NoiseKind] = Field(
        default_factory=lambda: [NoiseKind.NONE, NoiseKind.POISSON_SHOT, NoiseKind.IMPULSE]
    )
    levels: List[int] = Field(default_factory=lambda: [1, 2, 3, 4, 5])
    quant_bits: List[int] = Field(default_factory=lambda: [16, 8, 6, 4, 3, 2])
    samples: Optional[int] = Field(None, ge=1)
    seed: int = 0

    @field_validator("levels")
    @classmethod
    def _levels_in_grid(cls, v):
        if any(not 1 <= lv <= 5 for lv in v):
            raise ValueError("noise levels must lie in [1, 5]")
        return v

    @field_validator("quant_bits")
    @classmethod
    def _bits_in_range(cls, v):
        if any(not 2 <= b <= 16 for b in v):
            raise ValueError("quantization bits must lie in [2, 16]")
        return v


class ProfileConfig(_Section):
    width: int = Field(256, ge=1)
    input_features: int = Field(256, ge=1)
    depths: List[int] = Field(default_factory=lambda: [1, 5, 11, 15, 20, 25])
    strategies: List[StrategyKind] = Field(
        default_factory=lambda: [StrategyKind.BP, StrategyKind.DFO, StrategyKind.DFR, StrategyKind.GREEDY]
    )
    batch: int = Field(64, ge=2)
    repetitions: int = Field(50, ge=1)
    warmup: int = Field(10, ge=0)
    measure_memory: bool = True


class RunConfig(_Section):
    """Everything a CLI run needs"""
    model: ModelConfig = Field(default_factory=ModelConfig)
    data: DataConfig = Field(default_factory=DataConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    decode: DecodeConfig = Field(default_factory=DecodeConfig)
    robustness: RobustnessConfig = Field(default_factory=RobustnessConfig)
    profile: ProfileConfig = Field(default_factory=ProfileConfig)


# ---------------------------------------------------------------------------
# Flat key-value loading
# ---------------------------------------------------------------------------

def flatten_config(config: BaseModel) -> Dict[str, Any]:
    """Dotted-key view of a config model (JSON-compatible values)"""
    flat: Dict[str, Any] = {}

    def walk(node: Dict[str, Any], prefix: str):
        for key, value in node.items():
            name = f"{prefix}{key}"
            if isinstance(value, dict):
                walk(value, f"{name}.")
            else:
                flat[name] = value

    walk(config.model_dump(mode="json", by_alias=True), "")
    return flat


def _unflatten(flat: Dict[str, Any]) -> Dict[str, Any]:
    nested: Dict[str, Any] = {}
    for key, value in flat.items():
        node = nested
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    return nested


def parse_override_value(raw: str) -> Any:
    """Parse a --set value as JSON, falling back to the raw string"""
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def resolve_config_path(path: str) -> Path:
    """Accept a filesystem path or the name of a file shipped in config/"""
    candidate = Path(path)
    if candidate.exists():
        return candidate
    shipped = CONFIG_DIR / path
    if shipped.exists():
        return shipped
    shipped = CONFIG_DIR / f"{path}.json"
    if shipped.exists():
        return shipped
    raise ConfigurationError(f"Config file not found: {path}")


def load_run_config(path: Optional[str] = None, overrides: Iterable[str] = (),
                    base: Optional[Dict[str, Any]] = None) -> RunConfig:
    """
    Build a RunConfig from defaults, an optional flat JSON file and
    key=value overrides (applied in that order).

    base, a flat snapshot such as the one stored in a checkpoint, replaces
    the defaults.
    """
    flat = flatten_config(RunConfig())
    known = set(flat)
    for key, value in (base or {}).items():
        if key not in known:
            raise ConfigurationError(f"Unknown config key '{key}' in snapshot")
        flat[key] = value

    if path:
        config_path = resolve_config_path(path)
        with open(config_path) as f:
            try:
                data = json.load(f)
            except json.JSONDecodeError as e:
                raise ConfigurationError(f"Config file {config_path} is not valid JSON: {e}") from e
        if not isinstance(data, dict):
            raise ConfigurationError(f"Config file {config_path} must hold a flat JSON object")
        for key, value in data.items():
            if key not in known:
                raise ConfigurationError(f"Unknown config key '{key}' in {config_path}")
            flat[key] = value
        logger.info(f"Loaded config from {config_path}")

    for override in overrides:
        key, sep, raw = override.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigurationError(f"Override '{override}' is not of the form key=value")
        if key not in known:
            raise ConfigurationError(f"Unknown config key '{key}'")
        flat[key] = parse_override_value(raw)

    try:
        return RunConfig.model_validate(_unflatten(flat))
    except ValidationError as e:
        raise ConfigurationError(f"Invalid configuration: {e}") from e


def dataset_root(config: DataConfig, cli_root: Optional[str] = None) -> Path:
    """Dataset root from the CLI flag, the config, or $DF_DATASET_ROOT (in that order)"""
    root = cli_root or config.root or os.environ.get(DATASET_ROOT_ENV)
    if not root:
        raise ConfigurationError(
            f"No dataset root: pass --dataset-root, set data.root or export {DATASET_ROOT_ENV}"
        )
    return Path(root)
