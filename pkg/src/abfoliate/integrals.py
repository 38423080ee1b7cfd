"""Integral formulae over the closed foliated torus and their residuals.

Every formula here asserts that some integral vanishes.  A residual is reported
together with the integral of the absolute integrand so that "zero" can be
judged on a relative scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConditionViolated, PreconditionFailed, WrongFamily
from .leaf_operators import (FrameField, g_oracle, shape_operator_g, trace_op)
from .manifold import directional_derivative, dot, matvec
from .minkowski import PhiFamily

SCALE_FLOOR = 1e-300
FLOOR = 1e-11


@dataclass(frozen=True)
class FormulaResidual:
    name: str
    integral: float
    scale: float

    @property
    def relative(self) -> float:
        return abs(self.integral) / max(self.scale, SCALE_FLOOR)

    def passes(self, rtol: float, atol: float = 1e-12) -> bool:
        return abs(self.integral) <= atol or self.relative <= rtol

    def to_dict(self) -> dict:
        return {"name": self.name, "integral": self.integral, "scale": self.scale,
                "relative": self.relative}


def formula_residual(name: str, ff: FrameField, integrand: np.ndarray) -> FormulaResidual:
    geo = ff.geometry
    return FormulaResidual(name, geo.integrate(integrand), geo.metric.integrate_abs(integrand))


# ---------------------------------------------------------------------------
# Reeb formula and the general integral formula
# ---------------------------------------------------------------------------

def volume_weight(ff: FrameField, corrected: bool = False) -> np.ndarray:
    """Density of ``dvol_g`` against ``dvol_a``.

    The textbook weight is ``sigma_g(n) = det g / det a``; since volume forms
    scale with the square root of the determinant, ``corrected=True`` returns
    ``sqrt(sigma_g(n))``.
    """
    return np.sqrt(ff.sigma) if corrected else ff.sigma


def reeb_integrand_g(ff: FrameField, *, source: str = "formula", corrected: bool = False) -> np.ndarray:
    """``tr(A^g)`` times the volume weight, to be integrated against ``dvol_a``."""
    if source == "formula":
        Ag = shape_operator_g(ff, corrected=corrected)
    elif source == "oracle":
        Ag = g_oracle(ff).A_g
    else:
        raise ValueError(f"unknown source {source!r}")
    return trace_op(Ag) * volume_weight(ff, corrected)


def reeb_residual_g(ff: FrameField, *, source: str = "formula", corrected: bool = False) -> FormulaResidual:
    """Total mean curvature of the leaves for ``g`` in the ``g`` volume."""
    return formula_residual("reeb_g", ff, reeb_integrand_g(ff, source=source, corrected=corrected))


def reeb_residual_a(ff: FrameField) -> FormulaResidual:
    geo = ff.geometry
    return formula_residual("reeb_a", ff, trace_op(geo.A_bar))


def general_formula_integrand(ff: FrameField, *, corrected: bool = False) -> np.ndarray:
    """Integrand of the general integral formula, term by term.

    ``corrected=True`` uses ``<n, N>`` instead of ``c_hat`` as the leading
    factor of the ``rho1 (1 + s gamma1)`` bracket, matching the corrected
    shape operator (see :func:`abfoliate.leaf_operators.operator_U`), and
    the square-root volume weight of :func:`volume_weight`.
    """
    geo = ff.geometry
    grid = geo.grid
    m = geo.m
    rho, r0, r1 = ff.rho, ff.rho0, ff.rho1
    g1, g2, g3 = ff.gamma1, ff.gamma2, ff.gamma3
    c, s, bN, b2, t2 = ff.c_hat, ff.s, ff.betaN, ff.b2, ff.t2
    nn, sig = ff.norm_n_g, volume_weight(ff, corrected)
    bt = geo.beta_top
    Zb, Ab = geo.Z_bar, geo.A_bar_beta_top
    k = c - bN * g1
    lead = k if corrected else c

    def along(f, X):
        return directional_derivative(f, X, grid)

    tr_A = trace_op(geo.A_bar)
    beta_Z = dot(geo.beta, Zb)
    beta_AB = dot(geo.beta, Ab)
    N_bN = along(bN, geo.N)
    n_rho = ff.along_n(rho)
    n_rg = ff.along_n(rho + t2 * g2)
    inner1 = (bN * along(c, bt) + k * (bN * beta_Z - beta_AB)
              - 0.5 * g1 * along(b2, bt) - b2 * along(g1, bt))
    inner2 = k * beta_Z + g1 * beta_AB
    inner3 = 0.5 * g1 * along(t2, geo.beta_sharp) + k * beta_AB
    w = 1.0 + t2 * g3
    brace = (rho * c * tr_A + rho * g1 * (beta_Z - N_bN) - (m - 1) * n_rho / 2.0
             + w * (rho * along(g1, bt) - n_rg / 2.0 - (r0 - r1 * g1) * inner1
                    - lead * r1 * (1.0 + s * g1) * inner2)
             - g2 * w * inner3)
    return sig / (rho * nn) * brace - along(sig * g1 / nn, geo.beta_sharp)


def general_formula_residual(ff: FrameField, *, corrected: bool = False) -> FormulaResidual:
    return formula_residual("general_formula", ff, general_formula_integrand(ff, corrected=corrected))


@dataclass(frozen=True)
class QConstants:
    q1: float
    q2: float


def q_constants(ff: FrameField, *, corrected: bool = False) -> QConstants:
    """Coefficients of the constant-case integral formula (requires constant ``b, beta(N)``).

    The default returns the textbook constants.  ``corrected=True`` returns the
    coefficients obtained by letting every derivative of a constant vanish in
    the corrected general integrand; its ``q1`` vanishes identically by the
    definition of ``gamma2``.
    """
    ff.require_constant_case()
    idx = (0,) * ff.geometry.grid.dim
    rho, r0, r1 = float(ff.rho[idx]), float(ff.rho0[idx]), float(ff.rho1[idx])
    g1, g2, g3 = float(ff.gamma1[idx]), float(ff.gamma2[idx]), float(ff.gamma3[idx])
    c, s, bN, t2 = float(ff.c_hat[idx]), float(ff.s[idx]), float(ff.betaN[idx]), float(ff.t2[idx])
    k = c - bN * g1
    w = 1.0 + t2 * g3
    if corrected:
        q1 = w * k * (r0 - r1 * g1 * (2.0 + s * g1) - g2)
        q2 = g1 * rho - w * k * ((r0 - r1 * g1) * bN + k * r1 * (1.0 + s * g1))
        return QConstants(q1, q2)
    q1 = -w * (c * r1 * g1 * (1.0 + s * g1) + g2 * k)
    q2 = g1 * rho - c * r1 * w * (1.0 + s * g1) * k
    return QConstants(q1, q2)


def constant_case_integrand(ff: FrameField, q: QConstants) -> np.ndarray:
    geo = ff.geometry
    X = q.q1 * geo.A_bar_beta_top + q.q2 * geo.Z_bar
    return dot(geo.beta, X)


@dataclass(frozen=True)
class ConstantCaseResult:
    q1: float
    q2: float
    residual: FormulaResidual


def constant_formula_residual(ff: FrameField, *, corrected: bool = False) -> ConstantCaseResult:
    q = q_constants(ff, corrected=corrected)
    res = formula_residual("constant_formula", ff, constant_case_integrand(ff, q))
    return ConstantCaseResult(q.q1, q.q2, res)


def randers_q_closed_form(ff: FrameField) -> QConstants:
    """Closed-form Randers values ``q1 = c_hat c (c - c_hat)``, ``q2 = c_hat (c - c_hat)``."""
    if ff.family.kind != "randers":
        raise WrongFamily("Randers closed form requested for another family")
    ff.require_constant_case()
    idx = (0,) * ff.geometry.grid.dim
    ch = float(ff.c_hat[idx])
    c = ch - float(ff.betaN[idx])
    return QConstants(ch * c * (c - ch), ch * (c - ch))


# ---------------------------------------------------------------------------
# Randers and Kropina specialisations
# ---------------------------------------------------------------------------

C_CONSISTENCY_TOL = 1e-12


def randers_c_consistency(ff: FrameField) -> float:
    """Max gap between ``c_hat - beta(N)`` and ``sqrt(1 - (b^2 - beta(N)^2))``."""
    gap = np.abs((ff.c_hat - ff.betaN) - np.sqrt(1.0 - ff.t2))
    return float(gap.max())


def randers_integral_integrand(ff: FrameField) -> np.ndarray:
    if ff.family.kind != "randers":
        raise WrongFamily("Randers integral formula needs the randers family")
    gap = randers_c_consistency(ff)
    if gap > C_CONSISTENCY_TOL:
        raise ConditionViolated(f"c_hat - beta(N) differs from sqrt(1 - |beta#_top|^2) by {gap:.3e}",
                                "c_consistency", gap)
    geo = ff.geometry
    m = geo.m
    c = ff.c_hat - ff.betaN
    ch = ff.c_hat
    bN = ff.betaN
    brace = (0.5 * directional_derivative(c * c, geo.N, geo.grid)
             + dot(geo.beta, geo.A_bar_beta_top) + c * dot(geo.beta, geo.Z_bar))
    return (c * ch) ** (m / 2.0) * bN * brace / c ** 2


def randers_integral_residual(ff: FrameField) -> FormulaResidual:
    return formula_residual("randers_integral", ff, randers_integral_integrand(ff))


def kropina_trace_closed_form(ff: FrameField) -> np.ndarray:
    """Closed form of ``tr A^g`` for a Kropina norm with constant ``b`` and ``beta(N)``."""
    if ff.family.kind != "kropina":
        raise WrongFamily("Kropina trace formula needs the kropina family")
    ff.require_constant_case()
    geo = ff.geometry
    s, c, bN = ff.s, ff.c_hat, ff.betaN
    return (s * c * trace_op(geo.A_bar)
            + (4 * c ** 2 * s ** 2 - 2 * s ** 2 - bN ** 2) / (4 * s ** 2) * dot(geo.beta, geo.Z_bar)
            + bN / (4 * s ** 2) * dot(geo.beta, geo.A_bar_beta_top))


def kropina_trace_gap(ff: FrameField, *, corrected: bool = False) -> float:
    """Max pointwise gap between the Kropina trace closed form and ``tr A^g``."""
    closed = kropina_trace_closed_form(ff)
    general = trace_op(shape_operator_g(ff, corrected=corrected))
    return float(np.abs(closed - general).max())


def kropina_integral_integrand(ff: FrameField) -> np.ndarray:
    if ff.family.kind != "kropina":
        raise WrongFamily("Kropina integral formula needs the kropina family")
    ff.require_constant_case()
    geo = ff.geometry
    s, c, bN = ff.s, ff.c_hat, ff.betaN
    X = bN[..., None] * geo.A_bar_beta_top + ((2 * (2 * c ** 2 - 1) * s ** 2 - bN ** 2)[..., None]
                                              * geo.Z_bar)
    return dot(geo.beta, X)


def kropina_integral_residual(ff: FrameField) -> FormulaResidual:
    return formula_residual("kropina_integral", ff, kropina_integral_integrand(ff))


# ---------------------------------------------------------------------------
# eigenvalue identity
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EigenvalueResult:
    integral: float
    scale: float
    q1: float
    eigen_residual: float
    constant_case_integral: float


def eigenvalue_identity_check(ff: FrameField, X: np.ndarray, epsilon: float, epsilon_prime: float,
                               *, z_tol: float = 1e-10, eig_tol: float = 1e-8) -> EigenvalueResult:
    """``int lambda dvol_a`` for an a-unit leaf eigenfield ``X`` of ``A_bar``.

    Checks every hypothesis first and raises :class:`PreconditionFailed` naming
    the first one that fails.  The eigenvalue is the Rayleigh quotient
    ``<A_bar X, X>`` of the sampled operator.
    """
    geo = ff.geometry
    fam: PhiFamily = ff.family
    if np.abs(geo.Z_bar).max() > z_tol:
        raise PreconditionFailed(f"Z_bar is not zero (max {np.abs(geo.Z_bar).max():.3e})")
    if np.abs(X[..., -1]).max() > z_tol:
        raise PreconditionFailed("X is not tangent to the leaves")
    aX = matvec(geo.metric.a, X)
    alpha = np.sqrt(dot(X, aX))
    if np.abs(alpha - 1.0).max() > 1e-10:
        raise PreconditionFailed("X is not a-unit")
    AX = geo.foliation.apply(geo.A_bar, X)
    lam = dot(AX, aX)
    r = AX - lam[..., None] * X
    eig_res = float(np.sqrt(dot(r, matvec(geo.metric.a, r))).max())
    if eig_res > eig_tol:
        raise PreconditionFailed(f"X is not an eigenfield of A_bar (residual {eig_res:.3e})")
    if not 0.0 < epsilon < fam.b0:
        raise PreconditionFailed(f"epsilon={epsilon} outside (0, b0)")
    if not 0.0 < epsilon < 1.0 or not 0.0 < epsilon_prime < math.sqrt(1.0 - epsilon ** 2):
        raise PreconditionFailed(f"epsilon'={epsilon_prime} outside (0, sqrt(1 - epsilon^2))")
    expect = epsilon_prime * X + epsilon * geo.N
    if np.abs(geo.beta_sharp - expect).max() > 1e-10:
        raise PreconditionFailed("beta# is not eps' X + eps N")
    q = q_constants(ff)
    if q.q1 == 0.0 or abs(q.q1) < 1e-14:
        raise PreconditionFailed("q1 vanishes")
    integral = geo.integrate(lam)
    scale = geo.metric.integrate_abs(lam)
    const = geo.integrate(constant_case_integrand(ff, q))
    return EigenvalueResult(integral, scale, q.q1, eig_res, const)


# ---------------------------------------------------------------------------
# convergence orders
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OrderEstimate:
    pairwise: list
    richardson: float | None
    floor: bool
    notes: list = field(default_factory=list)

    def min_pairwise(self) -> float | None:
        vals = [p for p in self.pairwise if p is not None]
        return min(vals) if vals else None

    def to_dict(self) -> dict:
        return {"pairwise": self.pairwise, "richardson": self.richardson, "floor": self.floor}


def observed_orders(resolutions, errors, *, floor: float = FLOOR) -> OrderEstimate:
    """Observed convergence orders of an error sequence.

    ``pairwise[k] = log(e_k / e_{k+1}) / log(r_{k+1} / r_k)``; entries where
    both errors sit below ``floor`` are ``None`` and the estimate is flagged
    ``floor``.  ``richardson`` is the three-point estimate from the last three
    values when the resolutions form a geometric sequence.
    """
    res = [int(r) for r in resolutions]
    err = [abs(float(e)) for e in errors]
    if len(res) != len(err):
        raise ValueError("resolutions and errors differ in length")
    pairwise = []
    hit_floor = False
    for k in range(len(res) - 1):
        e0, e1 = err[k], err[k + 1]
        if e0 <= floor and e1 <= floor:
            pairwise.append(None)
            hit_floor = True
            continue
        if e1 == 0.0:
            pairwise.append(math.inf)
            continue
        pairwise.append(math.log(e0 / e1) / math.log(res[k + 1] / res[k]))
    rich = None
    if len(res) >= 3:
        r0, r1, r2 = res[-3:]
        e0, e1, e2 = err[-3:]
        if r1 * r1 == r0 * r2 and not (e1 <= floor and e2 <= floor):
            num, den = abs(e0 - e1), abs(e1 - e2)
            if den > 0.0 and num > 0.0:
                rich = math.log(num / den) / math.log(r1 / r0)
    return OrderEstimate(pairwise, rich, hit_floor)


def richardson_order_values(resolutions, values) -> float | None:
    """Three-point order from raw values ``I_h`` (not errors): ``log|I1-I2|/|I2-I3| / log r``."""
    res = list(resolutions)[-3:]
    v = list(values)[-3:]
    if len(v) < 3 or res[1] * res[1] != res[0] * res[2]:
        return None
    num, den = abs(v[0] - v[1]), abs(v[1] - v[2])
    if num == 0.0 or den == 0.0:
        return None
    return math.log(num / den) / math.log(res[1] / res[0])
