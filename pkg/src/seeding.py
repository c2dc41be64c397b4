"""Named random substreams derived from one root seed"""
import zlib

import numpy as np


def named_rng(seed: int, name: str) -> np.random.Generator:
    """Independent generator for (seed, name); stable across runs and platforms"""
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(name.encode("utf-8"))]))
