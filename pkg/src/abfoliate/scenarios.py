"""Analytic test geometries on the unit torus.

Each scenario samples a metric ``a`` and a 1-form ``beta`` on a
:class:`~abfoliate.manifold.ChartGrid`.  The leaf coordinate is always the
last one, written ``t`` below; ``x0, x1`` are the first leaf coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .manifold import ChartGrid, Geometry

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class ScenarioParams:
    epsilon: float = 0.2
    epsilon_prime: float = 0.2
    modulation: float | None = None
    warp: float = 0.1
    tilt: float = 0.1
    shear: float = 0.1


@dataclass(frozen=True)
class Scenario:
    id: str
    title: str
    exercises: tuple[str, ...]
    constant_case: bool
    analytic: bool
    default_modulation: float
    sampler: Callable[[ChartGrid, ScenarioParams], tuple[np.ndarray, np.ndarray]]

    def modulation(self, params: ScenarioParams) -> float:
        return self.default_modulation if params.modulation is None else params.modulation

    def fields(self, grid: ChartGrid, params: ScenarioParams) -> tuple[np.ndarray, np.ndarray]:
        return self.sampler(grid, params)

    def geometry(self, grid: ChartGrid, params: ScenarioParams | None = None) -> Geometry:
        params = params or ScenarioParams()
        a, beta = self.fields(grid, params)
        return Geometry.build(grid, a, beta)

    def describe(self, params: ScenarioParams | None = None) -> dict:
        params = params or ScenarioParams()
        return {
            "id": self.id,
            "title": self.title,
            "exercises": list(self.exercises),
            "constant_case": self.constant_case,
            "defaults": {
                "epsilon": params.epsilon,
                "epsilon_prime": params.epsilon_prime,
                "modulation": self.modulation(params),
                "warp": params.warp,
                "tilt": params.tilt,
                "shear": params.shear,
            },
        }


def _identity(grid: ChartGrid) -> np.ndarray:
    a = np.zeros(grid.shape + (grid.dim, grid.dim))
    for i in range(grid.dim):
        a[..., i, i] = 1.0
    return a


def _flat_constant(grid: ChartGrid, p: ScenarioParams):
    a = _identity(grid)
    beta = np.zeros(grid.shape + (grid.dim,))
    beta[..., 0] = p.epsilon_prime
    beta[..., -1] = p.epsilon
    return a, beta


def _warped(grid: ChartGrid, p: ScenarioParams):
    t = grid.coords()[-1]
    w = p.warp * np.sin(TWO_PI * t)
    a = np.zeros(grid.shape + (grid.dim, grid.dim))
    e2w = np.broadcast_to(np.exp(2.0 * w), grid.shape)
    for i in range(grid.m):
        a[..., i, i] = e2w
    a[..., -1, -1] = 1.0
    beta = np.zeros(grid.shape + (grid.dim,))
    beta[..., 0] = p.epsilon_prime * np.exp(w)
    beta[..., -1] = p.epsilon
    return a, beta


def _flat_tangent(grid: ChartGrid, p: ScenarioParams):
    t = grid.coords()[-1]
    mu = SCENARIOS["S3"].modulation(p)
    a = _identity(grid)
    beta = np.zeros(grid.shape + (grid.dim,))
    beta[..., 0] = p.epsilon * (1.0 + mu * np.sin(TWO_PI * t))
    return a, beta


def general_coframe(grid: ChartGrid, p: ScenarioParams) -> np.ndarray:
    """Rows are the coframe 1-forms; the metric is ``L^T L``."""
    X = grid.coords()
    t = X[-1]
    m = grid.m
    L = np.zeros(grid.shape + (grid.dim, grid.dim))
    for i in range(m):
        wi = p.warp * np.sin(TWO_PI * t + i * np.pi / 3.0)
        ew = np.broadcast_to(np.exp(wi), grid.shape)
        L[..., i, i] = ew
        if i == 0:
            kappa = p.shear * np.sin(TWO_PI * (X[1] + t))
            L[..., i, -1] = ew * kappa
    v = p.tilt * np.sin(TWO_PI * X[0])
    L[..., -1, -1] = np.broadcast_to(np.exp(v), grid.shape)
    return L


def _general(grid: ChartGrid, p: ScenarioParams):
    X = grid.coords()
    t = X[-1]
    mu = SCENARIOS["S4"].modulation(p)
    L = general_coframe(grid, p)
    a = np.matmul(np.swapaxes(L, -1, -2), L)
    a = 0.5 * (a + np.swapaxes(a, -1, -2))
    c0 = p.epsilon_prime * (1.0 + mu * np.sin(TWO_PI * (X[0] + t)))
    cD = p.epsilon * (1.0 + mu * np.cos(TWO_PI * (X[1] - t)))
    beta = c0[..., None] * L[..., 0, :] + cD[..., None] * L[..., -1, :]
    return a, np.ascontiguousarray(beta)


def tilted_density_metric(grid: ChartGrid, tilt: float = 0.1) -> np.ndarray:
    """``diag(1, ..., 1, exp(2 v(x0)))`` with ``v = tilt sin(2 pi x0)``."""
    x0 = grid.coords()[0]
    a = _identity(grid)
    a[..., -1, -1] = np.broadcast_to(np.exp(2.0 * tilt * np.sin(TWO_PI * x0)), grid.shape)
    return a


SCENARIOS: dict[str, Scenario] = {
    "S1": Scenario(
        "S1", "flat torus, constant beta",
        ("Reeb formula for g", "general integral formula", "constant-case integral formula"),
        constant_case=True, analytic=True, default_modulation=0.0, sampler=_flat_constant),
    "S2": Scenario(
        "S2", "warped torus exp(2w(t)) sum dx_i^2 + dt^2 with beta# = eps' exp(-w) d_x0 + eps d_t",
        ("constant-case integral formula", "eigenvalue identity", "Randers and Kropina closed forms"),
        constant_case=True, analytic=True, default_modulation=0.0, sampler=_warped),
    "S3": Scenario(
        "S3", "flat torus, beta = eps (1 + mu sin(2 pi t)) dx0 tangent to the leaves",
        ("general integral formula (b-derivative terms)", "tangent-beta curvature vector"),
        constant_case=False, analytic=False, default_modulation=0.5, sampler=_flat_tangent),
    "S4": Scenario(
        "S4", "sheared warped torus with tilted normal density and modulated beta",
        ("shape operator of g", "curvature vector of g", "general integral formula",
         "Randers integral formula"),
        constant_case=False, analytic=False, default_modulation=0.3, sampler=_general),
}


def get_scenario(sid: str) -> Scenario:
    try:
        return SCENARIOS[sid]
    except KeyError:
        raise KeyError(f"unknown scenario {sid!r}; choose from {sorted(SCENARIOS)}") from None
