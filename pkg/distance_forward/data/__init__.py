"""
Dataset ingestion, normalization and metrics persistence.

Checkpoints and manifests live in distance_forward.data.checkpoint and
distance_forward.data.manifest.
"""
from distance_forward.data.cifar import load_cifar10, load_cifar10_binary, write_cifar10_binary
from distance_forward.data.dataset import Dataset
from distance_forward.data.idx import load_idx, load_mnist, read_idx, write_idx
from distance_forward.data.metrics import write_metrics
from distance_forward.data.normalize import NormalizationStats, compute_stats, normalize
from distance_forward.data.raw import load_raw_directory
from distance_forward.data.transforms import random_crop_flip

__all__ = [
    'load_cifar10', 'load_cifar10_binary', 'write_cifar10_binary', 'Dataset', 'load_idx',
    'load_mnist', 'read_idx', 'write_idx', 'write_metrics', 'NormalizationStats', 'compute_stats',
    'normalize', 'load_raw_directory', 'random_crop_flip',
]
