"""
Fixed random feedback matrices for the DF-R strategy
"""

import logging
from typing import Dict, Iterator, Tuple

import numpy as np

from distance_forward.core.model import Model
from distance_forward.exceptions import ConfigurationError

logger = logging.getLogger(__name__)

LARGE_FEEDBACK_ELEMENTS = 50_000_000

Key = Tuple[int, int]


class FeedbackMatrices:
    """
    One fixed matrix per (window top unit, interior unit) pair.

    Matrix (top, i) has shape (d_top, d_i) and maps the loss gradient at the
    top unit's output straight to unit i's output space. Entries are drawn
    once from uniform(-s, s), s = scale / sqrt(d_top), and never trained.
    """

    def __init__(self, model: Model, group_size: int, seed: int = 0, scale: float = 1.0):
        self.group_size = int(group_size)
        self.shapes = {u: model.unit_output_shape(u) for u in range(model.depth)}
        self.matrices: Dict[Key, np.ndarray] = {}
        rng = np.random.default_rng(seed)
        for top in range(model.depth):
            d_top = int(np.prod(self.shapes[top]))
            bound = scale / np.sqrt(d_top)
            for i in range(max(0, top - self.group_size + 1), top):
                d_i = int(np.prod(self.shapes[i]))
                mat = rng.uniform(-bound, bound, size=(d_top, d_i)).astype(model.dtype)
                mat.setflags(write=False)
                self.matrices[(top, i)] = mat
        if self.elements > LARGE_FEEDBACK_ELEMENTS:
            logger.warning(f"Feedback matrices hold {self.elements} elements; consider a smaller group_size")

    @classmethod
    def from_arrays(cls, arrays: Dict[Key, np.ndarray], shapes: Dict[int, Tuple[int, ...]],
                    group_size: int) -> "FeedbackMatrices":
        obj = object.__new__(cls)
        obj.group_size = int(group_size)
        obj.shapes = dict(shapes)
        obj.matrices = {}
        for key, mat in arrays.items():
            mat = np.array(mat)
            mat.setflags(write=False)
            obj.matrices[tuple(key)] = mat
        return obj

    @property
    def elements(self) -> int:
        return int(sum(m.size for m in self.matrices.values()))

    def items(self) -> Iterator[Tuple[Key, np.ndarray]]:
        return iter(sorted(self.matrices.items()))

    def get(self, top: int, interior: int) -> np.ndarray:
        try:
            return self.matrices[(top, interior)]
        except KeyError:
            raise ConfigurationError(f"No feedback matrix for window top {top}, interior unit {interior}")

    def project(self, top: int, interior: int, signal: np.ndarray) -> np.ndarray:
        """Map the top-unit loss gradient (B, ...) to unit `interior`'s output shape"""
        mat = self.get(top, interior)
        flat = signal.reshape(signal.shape[0], -1)
        if flat.shape[1] != mat.shape[0]:
            raise ConfigurationError(
                f"Feedback matrix ({top}, {interior}) expects a {mat.shape[0]}-wide signal, got {flat.shape[1]}"
            )
        return (flat @ mat).reshape((signal.shape[0],) + tuple(self.shapes[interior]))

    def astype(self, dtype) -> "FeedbackMatrices":
        return FeedbackMatrices.from_arrays(
            {k: m.astype(dtype) for k, m in self.matrices.items()}, self.shapes, self.group_size
        )
