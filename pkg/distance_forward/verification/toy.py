"""
Tiny 64-bit models and batches for property checks, plus the full-chain
backward reference.
"""
from typing import Dict, Tuple

import numpy as np

from distance_forward.config import LabelMode
from distance_forward.core.model import Model, cnn_specs, mlp_specs
from distance_forward.losses.families import GoodnessLoss
from distance_forward.losses.goodness import goodness, goodness_backward
from distance_forward.samples.builder import SampleBatch, make_batch
from distance_forward.samples.embedding import LabelEmbedding

TOY_CLASSES = 4
TOY_IMAGE = (1, 4, 4)


def toy_mlp(rng: np.random.Generator, depth: int = 3, width: int = 6,
            mode: LabelMode = LabelMode.LEARNABLE_CHANNEL) -> Tuple[Model, LabelEmbedding]:
    emb = LabelEmbedding(TOY_CLASSES, TOY_IMAGE, mode, rng=rng, dtype=np.float64)
    model = Model(mlp_specs(width=width, depth=depth), emb.output_shape, rng=rng, dtype=np.float64)
    return model, emb


def toy_cnn(rng: np.random.Generator, image_shape=(1, 6, 6)) -> Tuple[Model, LabelEmbedding]:
    emb = LabelEmbedding(TOY_CLASSES, image_shape, rng=rng, dtype=np.float64)
    model = Model(cnn_specs(channels=(2, 3), pool_after=(1,)), emb.output_shape, rng=rng, dtype=np.float64)
    return model, emb


def toy_batch(emb: LabelEmbedding, rng: np.random.Generator, batch: int = 5, n_pairs: int = 3) -> SampleBatch:
    images = rng.random((batch,) + emb.image_shape)
    labels = rng.integers(0, emb.num_classes, size=batch)
    return make_batch(images, labels, n_pairs, emb, rng)


def full_chain_gradients(model: Model, loss_fn: GoodnessLoss, batch: SampleBatch) -> Dict[str, np.ndarray]:
    """
    Reference gradients of the sum of every unit's loss, backpropagated
    through the whole network in one reverse sweep.
    """
    b, n = batch.batch_size, batch.n_pairs
    mean_square = loss_fn.cfg.mean_goodness
    model.zero_grad()
    x, _ = batch.stacked()
    caches, outputs = [], []
    h = x
    for u in range(model.depth):
        h, cache = model.forward_unit(u, h, train=True)
        caches.append(cache)
        outputs.append(h)

    upstream = None
    for u in range(model.depth - 1, -1, -1):
        h = outputs[u]
        g = goodness(h, mean_square)
        d_pos, d_negs = loss_fn.gradients(g[:b], g[b:].reshape(b, n))
        local = goodness_backward(h, np.concatenate([d_pos, d_negs.reshape(-1)]), mean_square)
        total = local if upstream is None else local + upstream
        upstream = model.backward_unit(u, total, caches[u], need_input_grad=u > 0)

    grads = {name: p.grad.copy() for name, p in model.named_params()}
    model.zero_grad()
    return grads
