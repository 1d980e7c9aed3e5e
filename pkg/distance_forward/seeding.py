"""
Named random sub-streams derived from the single run seed
"""
import copy
from typing import Any, Dict

import numpy as np

STREAMS = {
    "init": 1,
    "shuffle": 2,
    "negatives": 3,
    "noise": 4,
    "augment": 5,
    "eval": 6,
    "robustness": 7,
}


def named_rng(seed: int, stream: str, *extra: int) -> np.random.Generator:
    """
    Independent generator for one named purpose. Extra integers split the
    stream further (e.g. one stream per robustness cell).
    """
    if stream not in STREAMS:
        raise KeyError(f"Unknown random stream '{stream}'")
    return np.random.default_rng([int(seed), STREAMS[stream], *[int(e) for e in extra]])


def generator_state(rng: np.random.Generator) -> Dict[str, Any]:
    """JSON-serializable position of a generator (its bit_generator.state)"""
    return copy.deepcopy(rng.bit_generator.state)


def restore_generator(state: Dict[str, Any]) -> np.random.Generator:
    """Generator positioned exactly where generator_state() captured it"""
    name = state.get("bit_generator")
    bit_generator_cls = getattr(np.random, str(name), None)
    if bit_generator_cls is None or not isinstance(bit_generator_cls, type) \
            or not issubclass(bit_generator_cls, np.random.BitGenerator):
        raise ValueError(f"Unknown bit generator '{name}'")
    bit_generator = bit_generator_cls()
    bit_generator.state = state
    return np.random.Generator(bit_generator)
