"""Per-item RNG derivation so parallel and serial runs draw identical streams."""

from __future__ import annotations

import numpy as np


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *(int(k) for k in keys)]))


KIND_SALT = {"var": 1, "api": 2, "joint": 3, "random_var": 4, "random_api": 5}
