"""
Sample-builder construction checks
"""
import numpy as np

from distance_forward.config import LabelMode
from distance_forward.samples.builder import make_batch
from distance_forward.samples.embedding import LabelEmbedding
from distance_forward.verification.base import BaseCheck, CheckCategory, CheckMetadata

CLASSES = 5
IMAGE = (2, 3, 4)


class LabelRegionCheck(BaseCheck):
    def get_metadata(self):
        return CheckMetadata(
            name="pos_neg_differ_only_in_label",
            module="sample-builder",
            op="make_batch",
            description="Each negative equals its positive outside the label channel or label pixels",
            category=CheckCategory.LOCALITY,
        )

    def run(self, rng):
        images = rng.random((6,) + IMAGE)
        labels = rng.integers(0, CLASSES, size=6)
        for mode in LabelMode:
            emb = LabelEmbedding(CLASSES, IMAGE, mode, rng=rng, dtype=np.float64)
            batch = make_batch(images, labels, CLASSES - 1, emb, rng)
            b, n = batch.neg_labels.shape
            pos = np.repeat(batch.pos, n, axis=0)
            negs = batch.negs.reshape((b * n,) + batch.pos.shape[1:])
            if mode == LabelMode.LEARNABLE_CHANNEL:
                outside = np.ones(pos.shape[1:], dtype=bool)
                outside[-1] = False
            else:
                outside = np.ones(int(np.prod(pos.shape[1:])), dtype=bool)
                outside[:CLASSES] = False
                outside = outside.reshape(pos.shape[1:])
            self.require(np.array_equal(pos[:, outside], negs[:, outside]),
                         f"{mode.value}: negatives differ from their positive outside the label region")
            self.require(not np.array_equal(pos[:, ~outside], negs[:, ~outside]),
                         f"{mode.value}: the label region does not distinguish negatives")
        return f"{len(LabelMode)} label modes"
