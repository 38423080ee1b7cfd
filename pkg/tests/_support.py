"""Shared generators and caches for the test-suite."""

from __future__ import annotations

import gc
import math
from collections import OrderedDict

import numpy as np

from abfoliate.leaf_operators import FrameField
from abfoliate.manifold import ChartGrid
from abfoliate.minkowski import AlphaBetaPoint, PhiFamily
from abfoliate.normal import HyperplaneData
from abfoliate.scenarios import SCENARIOS, ScenarioParams

FAMILIES = {
    "randers": PhiFamily.randers(),
    "kropina": PhiFamily.kropina(),
    "gen_kropina_2": PhiFamily.generalized_kropina(2.0),
}
B_RANGE = {"randers": (0.05, 0.85), "kropina": (0.05, 1.5), "gen_kropina_2": (0.05, 1.5)}


def random_spd(rng, dim):
    L = np.eye(dim) + 0.3 * rng.standard_normal((dim, dim))
    return L.T @ L + 0.1 * np.eye(dim)


def random_point(rng, dim, b):
    a = random_spd(rng, dim)
    c = rng.standard_normal(dim)
    c *= b / math.sqrt(c @ np.linalg.solve(a, c))
    return AlphaBetaPoint(a, c)


def unit(point, y):
    return y / point.alpha(y)


def random_case(rng, name, dim=None):
    """An admissible ``(family, point, hyperplane, y, u, v)`` drawn from ``rng``."""
    fam = FAMILIES[name]
    dim = dim or int(rng.choice([3, 4]))
    lo, hi = B_RANGE[name]
    b = rng.uniform(lo, hi)
    p = random_point(rng, dim, b)
    N = unit(p, rng.standard_normal(dim))
    data = HyperplaneData.from_normal(p, N)
    bs = p.beta_sharp / b
    while True:
        y = unit(p, rng.standard_normal(dim) + 1.5 * bs)
        s = p.beta_of(y)
        if fam.in_domain(s) and (name == "randers" or s > 0.2 * b):
            break
    u, v = rng.standard_normal(dim), rng.standard_normal(dim)
    return fam, p, data, y, u, v


class FrameCache:
    """Small LRU of frame fields so that tests sharing a geometry build it once."""

    def __init__(self, size: int = 6):
        self.size = size
        self._items: OrderedDict = OrderedDict()

    def get(self, sid, resolution, family, dim=3, **params):
        fam = FAMILIES.get(family) or PhiFamily.coerce(family)
        key = (sid, resolution, fam.name, dim, tuple(sorted(params.items())))
        if key in self._items:
            self._items.move_to_end(key)
            return self._items[key]
        geo = SCENARIOS[sid].geometry(ChartGrid(dim, resolution), ScenarioParams(**params))
        ff = FrameField(geo, fam)
        self._items[key] = ff
        while len(self._items) > self.size:
            self._items.popitem(last=False)
            gc.collect()
        return ff

    def clear(self):
        self._items.clear()
        gc.collect()
