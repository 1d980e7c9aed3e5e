"""
Dataset selection from the data config
"""
import logging
from pathlib import Path
from typing import Tuple

from distance_forward.config import DataConfig
from distance_forward.data.cifar import load_cifar10
from distance_forward.data.dataset import Dataset
from distance_forward.data.idx import load_mnist
from distance_forward.data.normalize import NormalizationStats, compute_stats, normalize
from distance_forward.data.raw import load_raw_directory

logger = logging.getLogger(__name__)

DEFAULT_SUBDIRS = {
    "mnist": "mnist",
    "fmnist": "fashion-mnist",
    "cifar10": "cifar-10-batches-bin",
    "raw": "raw",
}


def dataset_directory(config: DataConfig, root: Path) -> Path:
    return Path(root) / (config.subdir or DEFAULT_SUBDIRS[config.dataset])


def load_dataset(config: DataConfig, root: Path, split: str) -> Dataset:
    """One raw (un-normalized) split of the configured dataset"""
    directory = dataset_directory(config, root)
    if config.dataset in ("mnist", "fmnist"):
        dataset = load_mnist(directory, split)
    elif config.dataset == "cifar10":
        dataset = load_cifar10(directory, split)
    else:
        dataset = load_raw_directory(directory, split, config.num_classes)
    if split == "train" and config.train_limit is not None:
        dataset = dataset.subset(limit=config.train_limit)
    return dataset


def load_normalized(config: DataConfig, root: Path) -> Tuple[Dataset, Dataset, NormalizationStats]:
    """Train and test splits standardized with the training statistics"""
    train_raw = load_dataset(config, root, "train")
    test_raw = load_dataset(config, root, "test")
    stats = compute_stats(train_raw)
    return normalize(train_raw, stats), normalize(test_raw, stats), stats
