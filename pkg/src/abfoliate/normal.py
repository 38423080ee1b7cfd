"""Finsler normal of a hyperplane for an (alpha, beta)-norm.

Given the scalar product ``a``, the form ``beta`` and the a-unit normal ``N`` of
a hyperplane ``W``, the alpha-unit vector ``n`` that is ``g_n``-orthogonal to
``W`` and lies on the side of ``N`` has the form ``n = c_hat N - gamma1 beta#``
where every coefficient is a function of ``s = beta(n)``.  The value of ``s``
solves the scalar fixed-point equation ``s = c_hat(s) beta(N) - gamma1(s) b^2``.

The module works at two levels: :func:`frame_arrays` evaluates every frame
coefficient for whole arrays of ``(b^2, beta(N))`` and is what the grid code
uses; :func:`solve_beta_n` / :func:`build_frame` wrap it for one point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import (ConditionViolated, DomainError, NoConvergence, NoRoot, NotTangential,
                     NotUnitVector)
from .minkowski import AlphaBetaPoint, PhiFamily, fundamental_tensor, rho_from_phi, sigma_from_coeffs

GAMMA2_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class HyperplaneData:
    """A point together with a hyperplane ``W`` given by its a-unit normal ``N``."""

    point: AlphaBetaPoint
    N: np.ndarray
    betaN: float
    beta_top: np.ndarray

    @classmethod
    def from_normal(cls, point: AlphaBetaPoint, N) -> "HyperplaneData":
        N = np.asarray(N, dtype=float)
        if abs(point.inner(N, N) - 1.0) > 1e-12:
            raise NotUnitVector("N must be a-unit")
        betaN = point.beta_of(N)
        beta_top = point.beta_sharp - betaN * N
        return cls(point, N, betaN, beta_top)

    @classmethod
    def from_covector(cls, point: AlphaBetaPoint, nu) -> "HyperplaneData":
        """Hyperplane ``ker nu``; ``N`` is the normalised a-dual of ``nu``."""
        N = np.linalg.solve(point.a, np.asarray(nu, dtype=float))
        N = N / point.alpha(N)
        return cls.from_normal(point, N)

    def tangent_basis(self) -> np.ndarray:
        """Rows form an a-orthonormal basis of ``W`` (Gram-Schmidt, fixed order)."""
        p = self.point
        basis: list[np.ndarray] = []
        for i in range(p.dim):
            v = np.zeros(p.dim)
            v[i] = 1.0
            v = v - p.inner(v, self.N) * self.N
            for w in basis:
                v = v - p.inner(v, w) * w
            nv = p.alpha(v)
            if nv > 1e-8:
                basis.append(v / nv)
            if len(basis) == p.m:
                break
        return np.array(basis)

    def is_tangential(self, u, tol: float = 1e-10) -> bool:
        u = np.asarray(u, dtype=float)
        return abs(self.point.inner(u, self.N)) <= tol * max(1.0, self.point.alpha(u))


@dataclass(frozen=True)
class FrameArrays:
    """Frame coefficients evaluated on arrays of ``(b^2, beta(N))``."""

    s: np.ndarray
    phi: np.ndarray
    dphi: np.ndarray
    ddphi: np.ndarray
    rho: np.ndarray
    rho0: np.ndarray
    rho1: np.ndarray
    gamma1: np.ndarray
    gamma2: np.ndarray
    gamma2_phi: np.ndarray
    gamma3: np.ndarray
    c_hat: np.ndarray
    norm_n_g: np.ndarray
    sigma: np.ndarray
    sigma_phi: np.ndarray
    margin_discr: np.ndarray
    margin_gamma3: np.ndarray
    b2: np.ndarray
    betaN: np.ndarray
    fixed_point_residual: np.ndarray


def frame_from_s(family: PhiFamily, m: int, s, b2, betaN) -> FrameArrays:
    """All frame coefficients once ``s = beta(n)`` is known."""
    s = np.asarray(s, dtype=float)
    b2 = np.asarray(b2, dtype=float)
    betaN = np.asarray(betaN, dtype=float)
    f0, f1, f2 = family.eval_unchecked(s)
    rho, rho0, rho1 = rho_from_phi(s, f0, f1, f2)
    q = f0 - s * f1
    with np.errstate(divide="ignore", invalid="ignore"):
        g1 = (rho1 + rho0 * s) / rho
        g2 = rho0 - g1 * rho1 * (s * g1 + 2.0)
        g2_phi = f0 * (f0 * f0 * f2 - f0 * f1 * f1 + s * f1 ** 3) / (q * q)
        t2 = np.maximum(b2 - betaN * betaN, 0.0)
        disc = 1.0 - g1 * g1 * t2
        c_hat = g1 * betaN + np.sqrt(np.maximum(disc, 0.0))
        denom3 = rho + t2 * g2
        g3 = -g2 / denom3
        sig, sig_phi = sigma_from_coeffs(m, s, b2, f0, f1, f2)
        margin_discr = q - np.sqrt(t2) * np.abs(f1)
        fp_res = s - (c_hat * betaN - g1 * b2)
    return FrameArrays(s=s, phi=f0, dphi=f1, ddphi=f2, rho=rho, rho0=rho0, rho1=rho1,
                       gamma1=g1, gamma2=g2, gamma2_phi=g2_phi, gamma3=g3, c_hat=c_hat,
                       norm_n_g=f0.copy(), sigma=sig, sigma_phi=sig_phi,
                       margin_discr=margin_discr, margin_gamma3=np.abs(denom3),
                       b2=b2, betaN=betaN, fixed_point_residual=fp_res)


def solve_s_array(family: PhiFamily, b2, betaN) -> tuple[np.ndarray, np.ndarray]:
    """Per-node root of the normal equation; returns ``(s, status)`` (flat arrays)."""
    b2 = np.asarray(b2, dtype=float).ravel()
    betaN = np.asarray(betaN, dtype=float).ravel()
    b = np.sqrt(np.maximum(b2, 0.0))
    lo, hi = family.s_domain
    return _kernels.solve_fixed_point(b, betaN, phi=family.eval_unchecked, dom_lo=lo, dom_hi=hi,
                                      code=family.code, l=family.l)


def frame_arrays(family: PhiFamily, m: int, b2, betaN) -> FrameArrays:
    """Solve for ``s`` and evaluate the frame coefficients for arrays of inputs.

    Raises :class:`NoRoot`/:class:`DomainError` if any node fails to solve and
    :class:`ConditionViolated` if a margin fails; ``node`` on the exception is
    the flat index of the offending entry.
    """
    b2 = np.asarray(b2, dtype=float)
    shape = b2.shape
    betaN = np.broadcast_to(np.asarray(betaN, dtype=float), shape)
    if np.any(b2 >= family.b0 ** 2):
        idx = int(np.argmax(b2))
        raise DomainError(f"b={math.sqrt(b2.ravel()[idx])} is not below b0={family.b0}")
    s, status = solve_s_array(family, b2, betaN)
    if np.any(status != _kernels.STATUS_OK):
        idx = int(np.flatnonzero(status != _kernels.STATUS_OK)[0])
        if status[idx] == _kernels.STATUS_DOMAIN:
            raise DomainError(f"empty admissible s-interval at entry {idx}")
        raise NoRoot(f"no root of the normal equation at entry {idx} "
                     f"(b^2={b2.ravel()[idx]!r}, beta(N)={betaN.ravel()[idx]!r})")
    fr = frame_from_s(family, m, s.reshape(shape), b2, betaN)
    check_margins(fr)
    return fr


def check_margins(fr: FrameArrays) -> None:
    md = np.asarray(fr.margin_discr)
    if np.any(~(md >= 0)):
        idx = int(np.argmin(np.where(np.isnan(md), -np.inf, md)))
        raise ConditionViolated("discriminant condition fails", "margin_discr",
                                float(md.ravel()[idx]), np.unravel_index(idx, md.shape))
    mg = np.asarray(fr.margin_gamma3)
    if np.any(~(mg > 0)):
        idx = int(np.argmin(np.where(np.isnan(mg), -np.inf, mg)))
        raise ConditionViolated("gamma3 denominator vanishes", "margin_gamma3",
                                float(mg.ravel()[idx]), np.unravel_index(idx, mg.shape))


# ---------------------------------------------------------------------------
# pointwise API
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PointwiseFrame:
    data: HyperplaneData
    family: PhiFamily
    s_star: float
    rho: float
    rho0: float
    rho1: float
    gamma1: float
    gamma2: float
    gamma3: float
    c_hat: float
    n: np.ndarray
    norm_n_g: float
    sigma: float
    margin_discr: float
    margin_gamma3: float
    betaN: float
    b: float

    @property
    def rho_coeffs(self):
        from .minkowski import RhoCoefficients
        return RhoCoefficients(self.rho, self.rho0, self.rho1)


def _scalar_frame(data: HyperplaneData, family: PhiFamily) -> FrameArrays:
    p = data.point
    if not p.b < family.b0:
        raise DomainError(f"b={p.b} is not below b0={family.b0}")
    return frame_arrays(family, p.m, np.array([p.b ** 2]), np.array([data.betaN]))


def solve_beta_n(data: HyperplaneData, family: PhiFamily) -> float:
    """Root ``s*`` of the normal equation on the ``<n, N> > 0`` branch."""
    fr = _scalar_frame(data, family)
    return float(fr.s[0])


def build_frame(data: HyperplaneData, family: PhiFamily) -> PointwiseFrame:
    fr = _scalar_frame(data, family)
    g2, g2_phi = float(fr.gamma2[0]), float(fr.gamma2_phi[0])
    # gamma2 is a difference of O(rho0) terms, so judge the gap on that scale
    if abs(g2 - g2_phi) > GAMMA2_RTOL * max(1.0, abs(float(fr.rho0[0])), abs(g2)):
        raise ConditionViolated(f"gamma2 forms disagree: {g2!r} vs {g2_phi!r}", "gamma2")
    c_hat, g1 = float(fr.c_hat[0]), float(fr.gamma1[0])
    n = c_hat * data.N - g1 * data.point.beta_sharp
    return PointwiseFrame(data=data, family=family, s_star=float(fr.s[0]), rho=float(fr.rho[0]),
                          rho0=float(fr.rho0[0]), rho1=float(fr.rho1[0]), gamma1=g1, gamma2=g2,
                          gamma3=float(fr.gamma3[0]), c_hat=c_hat, n=n,
                          norm_n_g=float(fr.norm_n_g[0]), sigma=float(fr.sigma[0]),
                          margin_discr=float(fr.margin_discr[0]),
                          margin_gamma3=float(fr.margin_gamma3[0]), betaN=data.betaN,
                          b=data.point.b)


def metric_on_hyperplane(frame: PointwiseFrame, u, v) -> float:
    """``g_n(u, v) = rho <u, v> + gamma2 beta(u) beta(v)`` for ``u, v`` in ``W``."""
    d = frame.data
    if not (d.is_tangential(u) and d.is_tangential(v)):
        raise NotTangential("arguments must lie in the hyperplane")
    p = d.point
    return frame.rho * p.inner(u, v) + frame.gamma2 * p.beta_of(u) * p.beta_of(v)


def sharp_transfer(frame: PointwiseFrame, U) -> np.ndarray:
    """Return ``u`` in ``W`` with ``g_n(u, v) = <U, v>`` for all ``v`` in ``W``."""
    d = frame.data
    if not d.is_tangential(U):
        raise NotTangential("U must lie in the hyperplane")
    if not frame.margin_gamma3 > 0:
        raise ConditionViolated("gamma3 denominator vanishes", "margin_gamma3", frame.margin_gamma3)
    U = np.asarray(U, dtype=float)
    return (U + frame.gamma3 * d.point.beta_of(U) * d.beta_top) / frame.rho


def normal_oracle(data: HyperplaneData, family: PhiFamily, *, tol: float = 1e-14,
                  max_iter: int = 100) -> np.ndarray:
    """Finsler normal by damped Newton on ``g_y(y, v_i) = 0, <y, y> = 1``.

    Uses only :func:`fundamental_tensor`; the Jacobian is a central difference.
    Starts at ``N`` (moved along ``beta#_top`` when ``beta(N)`` is outside the
    profile domain).
    """
    p = data.point
    basis = data.tangent_basis()
    y = data.N.copy()
    if not family.in_domain(p.beta_of(y)):
        # slide along beta#_top, which keeps <y, N> = 1 and raises beta(y) by t^2 per unit
        bt = data.beta_top
        t2 = p.inner(bt, bt)
        tau = (2.0 * abs(data.betaN) + 0.5 * math.sqrt(t2)) / max(t2, 1e-300)
        y = y + tau * bt
        y = y / p.alpha(y)

    def residual(z):
        zu = z / p.alpha(z)
        # dividing by F^2 keeps the rows O(1) even where phi blows up (small s)
        f2 = p.F(family, zu) ** 2
        r = [fundamental_tensor(p, family, zu, zu, v) / f2 for v in basis]
        r.append(p.inner(z, z) - 1.0)
        return np.array(r)

    r = residual(y)
    nr = np.linalg.norm(r)
    for _ in range(max_iter):
        if nr <= tol:
            break
        # central differences with a step that shrinks with the distance to the domain edge
        eps = 1e-7 * min(1.0, abs(p.beta_of(y)) / max(p.b, 1e-300) + 1e-3)
        J = np.empty((p.dim, p.dim))
        for j in range(p.dim):
            e = np.zeros(p.dim)
            e[j] = eps
            J[:, j] = (residual(y + e) - residual(y - e)) / (2 * eps)
        step = np.linalg.lstsq(J, -r, rcond=None)[0]
        lam = 1.0
        for _ in range(40):
            try:
                y_new = y + lam * step
                r_new = residual(y_new)
                if np.linalg.norm(r_new) < nr:
                    break
            except DomainError:
                pass
            lam *= 0.5
        else:
            if nr <= 1e-11:
                break  # stalled at roundoff
            raise NoConvergence(f"line search failed in the normal oracle (residual {nr:.3e})")
        y, r = y_new, r_new
        nr = np.linalg.norm(r)
    if nr > 1e-11:
        raise NoConvergence(f"normal oracle residual {nr:.3e}")
    if p.inner(y, data.N) <= 0:
        raise NoConvergence("Newton iteration converged to the opposite normal")
    return y
