"""
Label encoding and positive/negative sample construction
"""
from distance_forward.samples.builder import (
    SampleBatch,
    make_batch,
    sample_negative_label_matrix,
    sample_negative_labels,
)
from distance_forward.samples.embedding import LabelEmbedding, make_positive

__all__ = [
    'SampleBatch', 'make_batch', 'sample_negative_label_matrix', 'sample_negative_labels',
    'LabelEmbedding', 'make_positive',
]
