"""Discrete Riemannian background on the periodic unit torus.

Fields are stored node-first: a scalar field has the grid shape, a vector or
covector field has shape ``(*grid, D)`` and a (0,2)/(1,1) tensor field has
shape ``(*grid, D, D)``.  The foliation is always by level sets of the last
coordinate ``t = x[D-1]``, so a vector is tangent to the leaves iff its last
component vanishes.  Leaf operators are ``(*grid, m, m)`` arrays acting on the
first ``m`` components of tangent vectors.

All derivatives use fourth-order centred periodic differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import _kernels
from .errors import SingularMetric


@dataclass(frozen=True)
class ChartGrid:
    """Uniform periodic grid on ``[0, 1)^dim``."""

    dim: int
    resolution: int

    def __post_init__(self):
        if self.dim not in (3, 4):
            raise ValueError("only dimensions 3 and 4 are supported")
        if self.resolution < 8:
            raise ValueError("resolution must be at least 8")

    @property
    def m(self) -> int:
        return self.dim - 1

    @property
    def h(self) -> float:
        return 1.0 / self.resolution

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.resolution,) * self.dim

    @property
    def n_nodes(self) -> int:
        return self.resolution ** self.dim

    def axis_coords(self) -> np.ndarray:
        return np.arange(self.resolution) * self.h

    def coords(self) -> list[np.ndarray]:
        """Broadcastable coordinate arrays (sparse meshgrid)."""
        x = self.axis_coords()
        return np.meshgrid(*([x] * self.dim), indexing="ij", sparse=True)

    def node_coords(self, node) -> np.ndarray:
        return np.asarray(node, dtype=float) * self.h


def d(f: np.ndarray, axis: int, h: float) -> np.ndarray:
    return _kernels.fd_derivative(f, axis, h)


def gradient(f: np.ndarray, grid: ChartGrid) -> np.ndarray:
    """Coordinate differential ``(df)_i = d_i f`` of a scalar field."""
    return np.stack([d(f, i, grid.h) for i in range(grid.dim)], axis=-1)


def directional_derivative(f: np.ndarray, X: np.ndarray, grid: ChartGrid) -> np.ndarray:
    """``X(f) = X^i d_i f``."""
    out = np.zeros(grid.shape)
    for i in range(grid.dim):
        out += X[..., i] * d(f, i, grid.h)
    return out


def matvec(M: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.matmul(M, v[..., None])[..., 0]


def dot(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.sum(u * v, axis=-1)


def spectral_tail(f: np.ndarray, n_axes: int) -> float:
    """Fraction of spectral energy in the upper quarter of wavenumbers.

    Advisory smoothness diagnostic for sampled periodic fields; values near
    machine epsilon indicate a well-resolved smooth field.
    """
    power = np.abs(np.fft.fftn(f, axes=tuple(range(n_axes)))) ** 2
    total = power.sum()
    if total == 0.0:
        return 0.0
    n = f.shape[0]
    k = np.abs(np.fft.fftfreq(n, 1.0 / n))
    high = np.zeros(f.shape[:n_axes], dtype=bool)
    for ax in range(n_axes):
        shape = [1] * n_axes
        shape[ax] = n
        high |= (k >= n // 4).reshape(shape)
    extra = power.ndim - n_axes
    if extra:
        high = high.reshape(high.shape + (1,) * extra)
        high = np.broadcast_to(high, power.shape)
    return float(power[high].sum() / total)


class MetricField:
    """Sampled symmetric positive-definite (0,2) tensor with derivative cache."""

    def __init__(self, grid: ChartGrid, a: np.ndarray, *, check: bool = True):
        if a.shape != grid.shape + (grid.dim, grid.dim):
            raise ValueError(f"metric shape {a.shape} does not match the grid")
        self.grid = grid
        self.a = a
        if check:
            if not np.allclose(a, np.swapaxes(a, -1, -2), rtol=0, atol=1e-13):
                raise SingularMetric("metric is not symmetric")
            try:
                np.linalg.cholesky(a)
            except np.linalg.LinAlgError as exc:
                raise SingularMetric("metric is not positive definite at some node") from exc
        self._da: list[np.ndarray | None] = [None] * grid.dim

    @cached_property
    def a_inv(self) -> np.ndarray:
        return np.linalg.inv(self.a)

    @cached_property
    def sqrt_det(self) -> np.ndarray:
        det = np.linalg.det(self.a)
        if np.any(det <= 0):
            raise SingularMetric("non-positive metric determinant")
        return np.sqrt(det)

    def derivative(self, axis: int) -> np.ndarray:
        """``d_axis a`` (cached)."""
        if self._da[axis] is None:
            self._da[axis] = d(self.a, axis, self.grid.h)
        return self._da[axis]

    def release(self) -> None:
        self._da = [None] * self.grid.dim

    def christoffel(self) -> np.ndarray:
        """Full ``Gamma[..., k, i, j]`` array (memory ``D^3`` per node)."""
        D = self.grid.dim
        da = np.stack([self.derivative(i) for i in range(D)], axis=-3)  # [..., i, k, j] = d_i a_kj
        low = 0.5 * (np.einsum("...ikj->...kij", da) + np.einsum("...jki->...kij", da) - da)
        return np.einsum("...kl,...lij->...kij", self.a_inv, low)

    def christoffel_at(self, node) -> np.ndarray:
        """``Gamma[k, i, j]`` at a single node from local stencils."""
        g = self.grid
        node = tuple(int(x) % g.resolution for x in node)
        D = g.dim
        da = np.empty((D, D, D))
        for ax in range(D):
            acc = np.zeros((D, D))
            for off, w in ((-2, 1.0), (-1, -8.0), (1, 8.0), (2, -1.0)):
                idx = list(node)
                idx[ax] = (idx[ax] + off) % g.resolution
                acc += w * self.a[tuple(idx)]
            da[ax] = acc / (12.0 * g.h)
        low = np.empty((D, D, D))
        for k in range(D):
            for i in range(D):
                for j in range(D):
                    low[k, i, j] = 0.5 * (da[i, k, j] + da[j, k, i] - da[k, i, j])
        return np.einsum("kl,lij->kij", np.linalg.inv(self.a[node]), low)

    def lowered_cov_derivative(self, V: np.ndarray, omega: np.ndarray | None = None,
                               derivative=None) -> np.ndarray:
        """``W[..., i, k] = (nabla_i V)_k`` for the Levi-Civita connection.

        ``omega`` is the lowered field ``a V`` (computed if omitted).  The
        Christoffel contraction is assembled one derivative axis at a time so
        that no ``D^3``-per-node array is ever held.  ``derivative(p)`` may
        supply ``d_p a``; by default the cached metric derivatives are used.
        """
        g = self.grid
        D = g.dim
        if omega is None:
            omega = matvec(self.a, V)
        if derivative is None:
            derivative = self.derivative
        W = np.empty(g.shape + (D, D))
        Q = np.empty(g.shape + (D, D))
        T = np.zeros(g.shape + (D, D))
        for p in range(D):
            da = derivative(p)
            W[..., p, :] = d(omega, p, g.h)
            Q[..., p, :] = matvec(da, V)           # d_p a_kl V^l
            T += V[..., p, None, None] * da        # V^p d_p a_ik
        W -= 0.5 * (Q + np.swapaxes(Q, -1, -2) - T)
        return W

    def divergence(self, X: np.ndarray) -> np.ndarray:
        g = self.grid
        out = np.zeros(g.shape)
        sd = self.sqrt_det
        for i in range(g.dim):
            out += d(sd * X[..., i], i, g.h)
        return out / sd

    def integrate(self, f: np.ndarray) -> float:
        """``sum f sqrt(det a) h^D`` with deterministic pairwise summation."""
        return _kernels.pairwise_sum(np.ascontiguousarray(f * self.sqrt_det).ravel()) * self.grid.h ** self.grid.dim

    def integrate_abs(self, f: np.ndarray) -> float:
        return self.integrate(np.abs(f))


class Foliation:
    """Level sets of the last coordinate with a-unit normal ``N``."""

    def __init__(self, metric: MetricField):
        self.metric = metric
        g = metric.grid
        D = g.dim
        ainv = metric.a_inv
        self.norm_dt = np.sqrt(ainv[..., D - 1, D - 1])
        self.N = ainv[..., :, D - 1] / self.norm_dt[..., None]
        N_flat = np.zeros(g.shape + (D,))
        N_flat[..., D - 1] = 1.0 / self.norm_dt
        self.N_flat = N_flat
        self.a_bar = np.ascontiguousarray(metric.a[..., : D - 1, : D - 1])
        self.a_bar_inv = np.linalg.inv(self.a_bar)

    @property
    def m(self) -> int:
        return self.metric.grid.m

    def project(self, X: np.ndarray) -> np.ndarray:
        """a-orthogonal projection onto the leaf tangent space (last component 0)."""
        return self.tangent_from_covector(matvec(self.metric.a, X))

    def tangent_from_covector(self, w: np.ndarray) -> np.ndarray:
        """Leaf vector ``X`` with ``<X, v> = w(v)`` for all leaf vectors ``v``."""
        m = self.m
        out = np.zeros(w.shape)
        out[..., :m] = matvec(self.a_bar_inv, w[..., :m])
        return out

    def grad_top(self, f: np.ndarray) -> np.ndarray:
        """Leafwise gradient of a scalar field."""
        g = self.metric.grid
        w = np.zeros(g.shape + (g.dim,))
        for i in range(self.m):
            w[..., i] = d(f, i, g.h)
        return self.tangent_from_covector(w)

    def apply(self, op: np.ndarray, X: np.ndarray) -> np.ndarray:
        """Apply an ``m x m`` leaf operator to a leaf vector stored as a D-vector."""
        out = np.zeros(X.shape)
        out[..., : self.m] = matvec(op, X[..., : self.m])
        return out

    def shape_operator(self, W: np.ndarray, Gbar_inv: np.ndarray) -> np.ndarray:
        """``-Gbar^{-1} W^T`` restricted to the leaf block."""
        m = self.m
        return -np.matmul(Gbar_inv, np.swapaxes(W[..., :m, :m], -1, -2))


@dataclass(eq=False)
class Geometry:
    """Metric, foliation and 1-form on a grid, with derived leaf quantities."""

    grid: ChartGrid
    metric: MetricField
    foliation: Foliation
    beta: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def build(cls, grid: ChartGrid, a: np.ndarray, beta: np.ndarray, *, check: bool = True) -> "Geometry":
        metric = MetricField(grid, a, check=check)
        fol = Foliation(metric)
        if beta.shape != grid.shape + (grid.dim,):
            raise ValueError("beta must have shape (*grid, D)")
        return cls(grid, metric, fol, beta)

    def _cached(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    @property
    def m(self) -> int:
        return self.grid.m

    @property
    def N(self) -> np.ndarray:
        return self.foliation.N

    @property
    def beta_sharp(self) -> np.ndarray:
        return self._cached("beta_sharp", lambda: matvec(self.metric.a_inv, self.beta))

    @property
    def b2(self) -> np.ndarray:
        return self._cached("b2", lambda: dot(self.beta, self.beta_sharp))

    @property
    def betaN(self) -> np.ndarray:
        return self._cached("betaN", lambda: dot(self.beta, self.N))

    @property
    def beta_top(self) -> np.ndarray:
        def make():
            bt = self.beta_sharp - self.betaN[..., None] * self.N
            bt[..., -1] = 0.0
            return bt
        return self._cached("beta_top", make)

    def normal_second_form(self) -> np.ndarray:
        """``(nabla_i N^flat)_k`` for the background metric."""
        return self._cached("W_N", lambda: self.metric.lowered_cov_derivative(
            self.N, self.foliation.N_flat))

    @property
    def A_bar(self) -> np.ndarray:
        """Leaf shape operator ``u -> -(nabla_u N)``."""
        return self._cached("A_bar", lambda: self.foliation.shape_operator(
            self.normal_second_form(), self.foliation.a_bar_inv))

    @property
    def Z_bar(self) -> np.ndarray:
        """Curvature vector ``nabla_N N`` of the normal flow."""
        def make():
            W = self.normal_second_form()
            w = np.einsum("...i,...ik->...k", self.N, W)
            return self.foliation.tangent_from_covector(w)
        return self._cached("Z_bar", make)

    def deformation_lowered(self) -> np.ndarray:
        """Symmetrised covariant derivative of ``beta`` as a (0,2) tensor."""
        def make():
            W = self.metric.lowered_cov_derivative(self.beta_sharp, self.beta)
            return 0.5 * (W + np.swapaxes(W, -1, -2))
        return self._cached("Def_low", make)

    @property
    def Def_top(self) -> np.ndarray:
        """Leaf restriction of the deformation tensor of ``beta#`` as an ``m x m`` operator."""
        m = self.m
        return self._cached("Def_top", lambda: np.matmul(
            self.foliation.a_bar_inv, self.deformation_lowered()[..., :m, :m]))

    @property
    def A_bar_beta_top(self) -> np.ndarray:
        return self._cached("A_bar_bt", lambda: self.foliation.apply(self.A_bar, self.beta_top))

    def cov_derivative_along(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        """Leaf projection of ``nabla_Y X``."""
        W = self.metric.lowered_cov_derivative(X)
        w = np.einsum("...i,...ik->...k", Y, W)
        return self.foliation.tangent_from_covector(w)

    def div(self, X: np.ndarray) -> np.ndarray:
        return self.metric.divergence(X)

    def integrate(self, f: np.ndarray) -> float:
        return self.metric.integrate(f)
