"""
Build a model and label embedding from the run configuration
"""
import logging
from typing import List, Sequence, Tuple

from distance_forward.config import LabelMode, ModelConfig, RunConfig
from distance_forward.core.layers import LayerSpec
from distance_forward.core.model import Model, cnn_specs, mlp_specs
from distance_forward.samples.embedding import LabelEmbedding
from distance_forward.seeding import named_rng

logger = logging.getLogger(__name__)


def architecture(config: ModelConfig) -> List[LayerSpec]:
    if config.preset == "mlp":
        return mlp_specs(width=config.width, depth=config.depth, batchnorm=config.batchnorm)
    if config.preset == "cnn":
        return cnn_specs(channels=config.channels, pool_after=config.pool_after, batchnorm=config.batchnorm)
    return list(config.layers)


def build_model_and_embedding(config: RunConfig, image_shape: Sequence[int]) -> Tuple[Model, LabelEmbedding]:
    """
    Label embedding first (it fixes the network input shape), then the model.
    Both draw their initial values from the "init" stream of train.seed.
    """
    rng = named_rng(config.train.seed, "init")
    emb = LabelEmbedding(config.data.num_classes, image_shape, LabelMode(config.data.label_mode), rng=rng)
    model = Model(architecture(config.model), emb.output_shape, rng=rng)
    logger.info(f"Built {config.model.preset} model: {model.depth} units, input {emb.output_shape}")
    return model, emb
