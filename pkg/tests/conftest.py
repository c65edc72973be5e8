import functools

import numpy as np
import pytest

from fkenmotsu import eisenhart
from fkenmotsu.kenmotsu import (build_beta_kenmotsu, build_f_kenmotsu, build_flat,
                                build_product_h2xr)

# regular catalog: beta-Kenmotsu flat fiber, n = 2, curved fiber, non-constant f
BUILDERS = {
    "beta0.5": lambda: build_beta_kenmotsu(1, 0.5),
    "H3": lambda: build_beta_kenmotsu(1, 1.0),
    "beta2": lambda: build_beta_kenmotsu(1, 2.0),
    "H5": lambda: build_beta_kenmotsu(2, 1.0),
    "curved": lambda: build_beta_kenmotsu(1, 1.0, fiber="curved", k=-1.0),
    "affine_exp": lambda: build_f_kenmotsu(1, dict(family="affine_exp", a=1.0, b=0.5, c=-1.0)),
}
CONTROLS = {
    "flat3": lambda: build_flat(3),
    "h2xr": build_product_h2xr,
    "reciprocal": lambda: build_f_kenmotsu(1, dict(family="reciprocal", t0=2.0)),
}
CATALOG = tuple(BUILDERS)


@functools.lru_cache(maxsize=None)
def model(key):
    return {**BUILDERS, **CONTROLS}[key]()


@functools.lru_cache(maxsize=None)
def parallel(key):
    return eisenhart.parallel_space(model(key), seed=1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
