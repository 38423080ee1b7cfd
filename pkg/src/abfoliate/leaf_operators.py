"""Leaf shape operator and normal-flow curvature of the metric ``g = g_n``.

Two independent routes are provided:

* closed-form expressions in terms of the background quantities
  (``A_bar``, ``Z_bar``, the deformation tensor of ``beta#``) and the frame
  scalars, with every derivative of a frame scalar taken numerically from its
  sampled field;
* direct oracles that sample the full matrix of ``g`` at ``y = n``, and differentiate it
  to get ``-nabla nu`` and ``nabla_nu nu``.

Shapes follow :mod:`abfoliate.manifold`: leaf vectors are ``(*grid, D)`` with
a zero last component, leaf operators are ``(*grid, m, m)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConditionViolated, NotConstantCase, WrongFamily
from .manifold import Geometry, MetricField, d, directional_derivative, dot, matvec
from .minkowski import PhiFamily
from .normal import FrameArrays, HyperplaneData, PointwiseFrame, build_frame, frame_arrays
from .minkowski import AlphaBetaPoint

DEGENERATE_B = 1e-14
GAMMA2_RTOL = 1e-10
CONSTANT_TOL = 1e-10


class FrameField:
    """Frame scalars of the Finsler normal sampled at every grid node."""

    def __init__(self, geometry: Geometry, family: PhiFamily):
        self.geometry = geometry
        self.requested_family = family
        b2 = geometry.b2
        if not family.is_riemannian and float(np.sqrt(b2.max())) < DEGENERATE_B:
            family = PhiFamily.riemannian()
        self.family = family
        try:
            fr = frame_arrays(family, geometry.m, b2, geometry.betaN)
        except ConditionViolated as exc:
            node = exc.node
            where = ""
            if node is not None:
                where = f" at node {tuple(int(i) for i in node)} (x = {geometry.grid.node_coords(node).tolist()})"
            raise ConditionViolated(f"{exc}{where}", exc.margin_name, exc.margin, node) from None
        self.arrays: FrameArrays = fr
        scale = np.maximum(1.0, np.maximum(np.abs(fr.rho0), np.abs(fr.gamma2)))
        gap = np.abs(fr.gamma2 - fr.gamma2_phi) / scale
        self.gamma2_gap = float(gap.max())
        if self.gamma2_gap > GAMMA2_RTOL:
            idx = np.unravel_index(int(np.argmax(gap)), gap.shape)
            raise ConditionViolated(f"gamma2 forms disagree by {self.gamma2_gap:.3e}", "gamma2",
                                    self.gamma2_gap, idx)

    # scalar fields -------------------------------------------------------
    @property
    def s(self):
        return self.arrays.s

    @property
    def rho(self):
        return self.arrays.rho

    @property
    def rho0(self):
        return self.arrays.rho0

    @property
    def rho1(self):
        return self.arrays.rho1

    @property
    def gamma1(self):
        return self.arrays.gamma1

    @property
    def gamma2(self):
        return self.arrays.gamma2

    @property
    def gamma3(self):
        return self.arrays.gamma3

    @property
    def c_hat(self):
        return self.arrays.c_hat

    @property
    def norm_n_g(self):
        return self.arrays.norm_n_g

    @property
    def sigma(self):
        return self.arrays.sigma

    @property
    def b2(self):
        return self.geometry.b2

    @property
    def betaN(self):
        return self.geometry.betaN

    @cached_property
    def t2(self) -> np.ndarray:
        """``b^2 - beta(N)^2``, the squared length of the tangential part of ``beta#``."""
        return self.b2 - self.betaN ** 2

    # vector fields -------------------------------------------------------
    @cached_property
    def n(self) -> np.ndarray:
        geo = self.geometry
        return self.c_hat[..., None] * geo.N - self.gamma1[..., None] * geo.beta_sharp

    @property
    def beta_top(self) -> np.ndarray:
        return self.geometry.beta_top

    @cached_property
    def nu(self) -> np.ndarray:
        return self.n / self.norm_n_g[..., None]

    def margins(self) -> dict:
        return {"margin_discr": float(np.min(self.arrays.margin_discr)),
                "margin_gamma3": float(np.min(self.arrays.margin_gamma3))}

    def is_constant_case(self, tol: float = CONSTANT_TOL) -> bool:
        b = np.sqrt(self.b2)
        bn = self.betaN
        return bool(np.ptp(b) <= tol and np.ptp(bn) <= tol)

    def require_constant_case(self, tol: float = CONSTANT_TOL) -> None:
        b = np.sqrt(self.b2)
        if np.ptp(b) > tol or np.ptp(self.betaN) > tol:
            raise NotConstantCase(f"b varies by {np.ptp(b):.3e} and beta(N) by "
                                  f"{np.ptp(self.betaN):.3e} over the grid")

    def pointwise(self, node) -> PointwiseFrame:
        """Rebuild the single-point frame at ``node`` through the pointwise solver."""
        geo = self.geometry
        node = tuple(node)
        point = AlphaBetaPoint(geo.metric.a[node], geo.beta[node])
        data = HyperplaneData.from_normal(point, geo.N[node])
        return build_frame(data, self.family)

    # derivatives ------------------------------------------------------------
    def along_n(self, f: np.ndarray) -> np.ndarray:
        return directional_derivative(f, self.n, self.geometry.grid)

    def grad_top(self, f: np.ndarray) -> np.ndarray:
        return self.geometry.foliation.grad_top(f)


# ---------------------------------------------------------------------------
# helpers on leaf vectors / operators
# ---------------------------------------------------------------------------

def _s(x):
    return np.asarray(x)[..., None]


def _identity_op(geo: Geometry) -> np.ndarray:
    return np.broadcast_to(np.eye(geo.m), geo.grid.shape + (geo.m, geo.m))


def sym_op(geo: Geometry, U: np.ndarray) -> np.ndarray:
    """Leaf operator ``u -> (beta(u) U + <U, u> beta#_top) / 2``."""
    m = geo.m
    Um = U[..., :m]
    bm = geo.beta[..., :m]
    aU = matvec(geo.foliation.a_bar, Um)
    return 0.5 * (Um[..., :, None] * bm[..., None, :] + geo.beta_top[..., :m, None] * aU[..., None, :])


def outer_op(X: np.ndarray, w: np.ndarray, m: int) -> np.ndarray:
    """Leaf operator ``u -> w(u) X`` for a leaf vector ``X`` and covector ``w``."""
    return X[..., :m, None] * w[..., None, :m]


def apply_op(geo: Geometry, op: np.ndarray, X: np.ndarray) -> np.ndarray:
    return geo.foliation.apply(op, X)


def trace_op(op: np.ndarray) -> np.ndarray:
    return np.trace(op, axis1=-2, axis2=-1)


def _transfer_op(ff: FrameField, op: np.ndarray) -> np.ndarray:
    """``op + gamma3 beta#_top (beta o op)``."""
    geo = ff.geometry
    m = geo.m
    beta_op = np.einsum("...i,...ij->...j", geo.beta[..., :m], op)
    return op + _s(_s(ff.gamma3)) * geo.beta_top[..., :m, None] * beta_op[..., None, :]


def _transfer_vec(ff: FrameField, X: np.ndarray) -> np.ndarray:
    """``X + gamma3 beta(X) beta#_top``."""
    geo = ff.geometry
    return X + _s(ff.gamma3 * dot(geo.beta, X)) * geo.beta_top


# ---------------------------------------------------------------------------
# shape operator of g
# ---------------------------------------------------------------------------

def nabla_n_beta_top(ff: FrameField) -> np.ndarray:
    """Leaf part of the covariant derivative of ``beta#_top`` along ``n``."""
    geo = ff.geometry
    return geo._cached(("nabla_n_bt", id(ff)), lambda: geo.cov_derivative_along(geo.beta_top, ff.n))


def operator_U(ff: FrameField, *, reduced: bool = False, corrected: bool = False) -> np.ndarray:
    """The auxiliary leaf vector field entering the shape operator of ``g``.

    ``reduced=True`` uses the shorter expression valid when ``b`` and
    ``beta(N)`` are constant (raises :class:`NotConstantCase` otherwise).

    ``corrected=True`` replaces the leading ``c_hat`` of the
    ``rho1 (1 + s gamma1)`` term by ``<n, N> = c_hat - beta(N) gamma1``, which
    is what ``<n, [u, n]>`` evaluates to; the default keeps the textbook
    expression.
    """
    geo = ff.geometry
    if reduced:
        ff.require_constant_case()
    rho, rho0, rho1 = ff.rho, ff.rho0, ff.rho1
    g1, g2, c, s, bN, b2 = ff.gamma1, ff.gamma2, ff.c_hat, ff.s, ff.betaN, ff.b2
    bt = geo.beta_top
    Zb = geo.Z_bar
    Ab = geo.A_bar_beta_top
    nbt = nabla_n_beta_top(ff)
    k = c - bN * g1

    U = _s(g2) * nbt
    lead = k if corrected else c
    U = U + _s(lead * rho1 * (1.0 + s * g1)) * (_s(k) * Zb + _s(g1) * Ab)
    if reduced:
        U = U + _s((rho0 - rho1 * g1) * k) * (_s(bN) * Zb - Ab)
        return U
    U = U + _s(0.5 * ff.along_n(g2)) * bt
    U = U - _s(rho) * ff.grad_top(g1)
    inner = (_s(bN) * ff.grad_top(c) - _s(0.5 * g1) * ff.grad_top(b2) - _s(b2) * ff.grad_top(g1)
             + _s(k) * (_s(bN) * Zb - Ab))
    U = U + _s(rho0 - rho1 * g1) * inner
    return U


def script_A(ff: FrameField, *, reduced: bool = False, corrected: bool = False,
             U: np.ndarray | None = None) -> np.ndarray:
    """Leaf operator representing ``u -> nabla_u n`` through ``<script_A(u), v> = g(nabla_u n, v)``."""
    geo = ff.geometry
    if U is None:
        U = operator_U(ff, reduced=reduced, corrected=corrected)
    rho, c, g1 = ff.rho, ff.c_hat, ff.gamma1
    op = -_s(_s(rho * c)) * geo.A_bar - _s(_s(rho * g1)) * geo.Def_top + sym_op(geo, U)
    if not reduced:
        op = op + _s(_s(0.5 * ff.along_n(rho))) * _identity_op(geo)
    return op


def shape_operator_g(ff: FrameField, *, reduced: bool = False, corrected: bool = False) -> np.ndarray:
    """Shape operator of the leaves for ``g`` with respect to the unit normal ``nu``."""
    A = script_A(ff, reduced=reduced, corrected=corrected)
    return -_transfer_op(ff, A) / _s(_s(ff.rho * ff.norm_n_g))


def g_field(ff: FrameField) -> np.ndarray:
    """Matrix of ``g_n`` at every node, rebuilt from the closed-form fundamental tensor."""
    geo = ff.geometry
    n = ff.n
    s = dot(geo.beta, n)
    f0, f1, f2 = ff.family.eval_unchecked(s)
    rho = f0 * (f0 - s * f1)
    rho0 = f0 * f2 + f1 * f1
    rho1 = -s * rho0 + f0 * f1
    yb = matvec(geo.metric.a, n)
    bt = geo.beta
    G = _s(_s(rho)) * geo.metric.a
    G = G + _s(_s(rho0)) * bt[..., :, None] * bt[..., None, :]
    G = G + _s(_s(rho1)) * (bt[..., :, None] * yb[..., None, :] + yb[..., :, None] * bt[..., None, :])
    G = G - _s(_s(rho1 * s)) * yb[..., :, None] * yb[..., None, :]
    return 0.5 * (G + np.swapaxes(G, -1, -2))


@dataclass(frozen=True, eq=False)
class GOracle:
    """Shape operator and curvature vector of the leaves obtained by differentiating ``g``."""

    A_g: np.ndarray
    Z: np.ndarray
    G: np.ndarray


def g_oracle(ff: FrameField) -> GOracle:
    geo = ff.geometry
    grid = geo.grid
    m = geo.m
    G = g_field(ff)
    gm = MetricField(grid, G, check=True)
    nu = ff.nu
    B = gm.lowered_cov_derivative(nu, matvec(G, nu), derivative=lambda p: d(G, p, grid.h))
    Gbar_inv = np.linalg.inv(np.ascontiguousarray(G[..., :m, :m]))
    A_g = -np.matmul(Gbar_inv, np.swapaxes(B[..., :m, :m], -1, -2))
    w = np.einsum("...i,...ik->...k", nu, B)
    Z = np.zeros(grid.shape + (grid.dim,))
    Z[..., :m] = matvec(Gbar_inv, w[..., :m])
    return GOracle(A_g=A_g, Z=Z, G=G)


def shape_operator_g_oracle(ff: FrameField) -> np.ndarray:
    return g_oracle(ff).A_g


# ---------------------------------------------------------------------------
# curvature vector of the normal flow
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PCoefficients:
    p1: np.ndarray
    p2: np.ndarray
    p3: np.ndarray
    p4: np.ndarray
    p5: np.ndarray


def p_coefficients(ff: FrameField) -> PCoefficients:
    rho, r0, r1 = ff.rho, ff.rho0, ff.rho1
    g1, c, s, bN, b2 = ff.gamma1, ff.c_hat, ff.s, ff.betaN, ff.b2
    b4 = b2 * b2
    p1 = (c * ((4 * r1 * g1 - r0 + 3 * r1 * s * g1 ** 2) * b2 - rho + c ** 2 * r1 * s) * bN
          - r1 * (2 * s * g1 + 1) * c ** 2 * bN ** 2
          - r1 * (s * g1 + 1) * b2 * c ** 2
          + g1 * (r0 - 2 * g1 * r1 - g1 ** 2 * r1 * s) * b4
          + g1 * rho * b2)
    p2 = ((r0 - 2 * r1 * s * g1 ** 2 - 3 * r1 * g1) * c * bN ** 2
          + (g1 * (2 * g1 * r1 + g1 ** 2 * r1 * s - r0) * b2
             + r1 * (2 + 3 * s * g1) * c ** 2
             - g1 * rho) * bN
          - c ** 3 * r1 * s
          + (rho - g1 * r1 * (s * g1 + 1) * b2) * c)
    p3 = (g1 * (3 * g1 * r1 + 2 * g1 ** 2 * r1 * s - r0) * c * bN ** 3
          + ((r0 - 5 * r1 * s * g1 ** 2 - 5 * r1 * g1) * c ** 2
             + g1 ** 2 * rho
             + g1 ** 2 * (r0 - 2 * g1 * r1 - g1 ** 2 * r1 * s) * b2) * bN ** 2
          + (2 * r1 * (1 + 2 * s * g1) * c ** 3
             + g1 * c * ((3 * g1 * r1 + 2 * g1 ** 2 * r1 * s - r0) * b2 - 2 * rho)) * bN
          - c ** 4 * r1 * s
          + (rho - g1 * r1 * (s * g1 + 1) * b2) * c ** 2)
    p4 = (g1 * (r0 - 2 * g1 ** 2 * r1 * s - 3 * g1 * r1) * c * bN ** 2
          + g1 * c * ((r0 - 2 * g1 * r1 - g1 ** 2 * r1 * s) * b2 + rho)
          + ((4 * r1 * g1 - r0 + 3 * r1 * s * g1 ** 2) * c ** 2
             + g1 ** 2 * (2 * g1 * r1 + g1 ** 2 * r1 * s - r0) * b2
             - g1 ** 2 * rho) * bN
          - r1 * (s * g1 + 1) * c ** 3)
    p5 = (c ** 3 * r1 * s * g1
          - g1 * r1 * (2 * s * g1 + 1) * c ** 2 * bN
          + g1 * c * (g1 * r1 * (1 + g1 * s) * b2 - rho))
    return PCoefficients(p1, p2, p3, p4, p5)


def script_Z(ff: FrameField, p: PCoefficients | None = None) -> np.ndarray:
    """Leaf vector ``script_Z`` with ``g(Z, X) = <script_Z, X>`` for leaf ``X``."""
    geo = ff.geometry
    p = p or p_coefficients(ff)
    nn = ff.norm_n_g
    first = _s(p.p1) * ff.grad_top(ff.gamma1 / nn) + _s(p.p2) * ff.grad_top(ff.c_hat / nn)
    second = (_s(p.p3) * geo.Z_bar + _s(p.p4) * geo.A_bar_beta_top
              + _s(p.p5) * ff.grad_top(ff.betaN))
    return first / _s(nn) + second / _s(nn ** 2)


def script_Z_tangent(ff: FrameField) -> np.ndarray:
    """``script_Z`` when ``beta#`` is tangent to the leaves and ``b`` is constant."""
    geo = ff.geometry
    rho, r0, r1 = ff.rho, ff.rho0, ff.rho1
    g1, c, s, b2 = ff.gamma1, ff.c_hat, ff.s, ff.b2
    kz = c ** 2 * (rho - c ** 2 * r1 * s - g1 * r1 * (s * g1 + 1) * b2)
    ka = c * (g1 * rho - r1 * (s * g1 + 1) * c ** 2 + g1 * (r0 - 2 * g1 * r1 - g1 ** 2 * r1 * s) * b2)
    return (_s(kz) * geo.Z_bar + _s(ka) * geo.A_bar_beta_top) / _s(ff.norm_n_g ** 2)


def curvature_vector_g(ff: FrameField, *, tangent_reduced: bool = False) -> np.ndarray:
    """Curvature vector ``nabla_nu nu`` of the normal flow of ``g``."""
    Zs = script_Z_tangent(ff) if tangent_reduced else script_Z(ff)
    return _transfer_vec(ff, Zs) / _s(ff.rho)


def curvature_vector_g_oracle(ff: FrameField) -> np.ndarray:
    return g_oracle(ff).Z


# ---------------------------------------------------------------------------
# closed forms for Randers and Kropina norms
# ---------------------------------------------------------------------------

def _require(ff: FrameField, kind: str) -> None:
    if ff.family.kind != kind:
        raise WrongFamily(f"this closed form needs the {kind} family, got {ff.family.kind}")


def randers_c(ff: FrameField) -> np.ndarray:
    """``c = sqrt(1 - alpha(beta#_top)^2)``."""
    return np.sqrt(1.0 - ff.t2)


def randers_U(ff: FrameField) -> np.ndarray:
    _require(ff, "randers")
    return nabla_n_beta_top(ff) / _s(ff.c_hat) - _s(randers_c(ff)) * ff.geometry.Z_bar


def randers_shape_operator_scaled(ff: FrameField) -> np.ndarray:
    """``c A^g`` for a Randers norm, assembled from its closed form."""
    _require(ff, "randers")
    geo = ff.geometry
    m = geo.m
    c, ch = randers_c(ff), ff.c_hat
    bt = geo.beta_top
    Ab = geo.A_bar_beta_top
    U = randers_U(ff)
    Def_bt = apply_op(geo, geo.Def_top, bt)
    ncc = ff.along_n(c * ch)
    op = geo.A_bar - _s(_s(0.5 * ncc / (ch ** 2 * c))) * _identity_op(geo)
    op = op + geo.Def_top / _s(_s(ch))
    op = op + 0.5 * outer_op(U - Ab, geo.beta, m)
    Y = (Ab - _s(dot(geo.A_bar_beta_top, matvec(geo.metric.a, bt))) * bt
         + 2.0 * Def_bt / _s(ch) + U + _s(dot(geo.beta, U)) * bt)
    Yflat = np.zeros_like(Y)
    Yflat[..., :m] = matvec(geo.foliation.a_bar, Y[..., :m])
    op = op + _s(_s(0.5 / c ** 2)) * outer_op(bt, Yflat, m)
    return op


def randers_script_Z(ff: FrameField) -> np.ndarray:
    """``script_Z = Z_bar - grad_top(c_hat) / c_hat`` for a Randers norm."""
    _require(ff, "randers")
    return ff.geometry.Z_bar - ff.grad_top(ff.c_hat) / _s(ff.c_hat)


def kropina_curvature_vector(ff: FrameField) -> np.ndarray:
    """Closed form of ``Z`` for a Kropina norm with constant ``b`` and ``beta(N) = 0``."""
    _require(ff, "kropina")
    geo = ff.geometry
    c, s, b2 = ff.c_hat, ff.s, ff.b2
    gnn = ff.norm_n_g ** 2
    kz = c ** 2 * (b2 + 2 * (1 + 2 * c ** 2) * s ** 2 - 2 * b2 * s ** 6) / (s ** 4 * gnn)
    ka = c * (4 * c ** 2 * s ** 8 + 2 * b2 * s ** 6 - (1 + 2 * c ** 2) * s ** 2 - 2 * b2) / (s ** 5 * gnn)
    return _s(kz) * geo.Z_bar + _s(ka) * geo.A_bar_beta_top


# ---------------------------------------------------------------------------
# bundle
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LeafOperatorField:
    """Per-node leaf operators and vectors for one frame field."""

    A_bar: np.ndarray
    A_g: np.ndarray
    script_A: np.ndarray
    U: np.ndarray
    Z_bar: np.ndarray
    Z: np.ndarray
    script_Z: np.ndarray


def leaf_operator_field(ff: FrameField) -> LeafOperatorField:
    geo = ff.geometry
    U = operator_U(ff)
    A = script_A(ff, U=U)
    Ag = -_transfer_op(ff, A) / _s(_s(ff.rho * ff.norm_n_g))
    Zs = script_Z(ff)
    Z = _transfer_vec(ff, Zs) / _s(ff.rho)
    return LeafOperatorField(A_bar=geo.A_bar, A_g=Ag, script_A=A, U=U, Z_bar=geo.Z_bar, Z=Z,
                             script_Z=Zs)
