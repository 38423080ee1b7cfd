"""Pointwise (alpha, beta)-norm machinery.

An (alpha, beta)-norm is ``F(y) = alpha(y) * phi(beta(y) / alpha(y))`` where
``alpha`` is the norm of a scalar product ``a`` and ``beta`` a linear form.
This module provides the profile families ``phi``, the coefficient functions
``rho, rho0, rho1`` of the fundamental tensor, the fundamental tensor in closed
form together with an independent finite-difference Hessian of ``F**2``, and
the determinant ratio ``sigma_g = det g_y / det a`` in two closed forms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .errors import DomainError, FormMismatch, NotUnitVector

PhiCallable = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray, np.ndarray]]

_KIND_CODES = {"riemannian": 0, "randers": 1, "kropina": 2, "generalized_kropina": 2}


@dataclass(frozen=True, eq=False)
class PhiFamily:
    """Profile function ``phi`` with its first two derivatives.

    Use the classmethod constructors rather than the raw initializer.
    ``s_domain`` is an open interval; ``b0`` bounds the alpha-norm of ``beta``.
    """

    kind: str
    b0: float
    s_domain: tuple[float, float]
    l: float = 1.0
    func: PhiCallable | None = field(default=None, repr=False)
    name: str = ""

    @classmethod
    def riemannian(cls) -> "PhiFamily":
        return cls("riemannian", math.inf, (-math.inf, math.inf), name="riemannian")

    @classmethod
    def randers(cls) -> "PhiFamily":
        return cls("randers", 1.0, (-1.0, 1.0), name="randers")

    @classmethod
    def kropina(cls) -> "PhiFamily":
        return cls("kropina", math.inf, (0.0, math.inf), l=1.0, name="kropina")

    @classmethod
    def generalized_kropina(cls, l: float) -> "PhiFamily":
        if l == 0:
            raise ValueError("generalized Kropina exponent must be nonzero")
        if l < 0:
            # phi - s phi' = (1 + l) s**-l must stay positive
            if l <= -1:
                raise DomainError(f"phi - s phi' <= 0 for exponent l={l}")
        return cls("generalized_kropina", math.inf, (0.0, math.inf), l=float(l),
                   name=f"generalized_kropina(l={l:g})")

    @classmethod
    def custom(cls, func: PhiCallable, *, b0: float, s_domain: tuple[float, float],
               name: str = "custom", samples: int = 2001) -> "PhiFamily":
        """Wrap a user profile returning ``(phi, phi', phi'')`` for array input.

        ``phi > 0`` and ``phi - s phi' > 0`` are checked on a sample of the
        declared domain (infinite ends are clipped to ``+-b0`` or ``+-10``).
        """
        fam = cls("custom", float(b0), (float(s_domain[0]), float(s_domain[1])),
                  func=func, name=name)
        lo, hi = fam.s_domain
        clip = b0 if math.isfinite(b0) else 10.0
        lo_c = max(lo, -clip)
        hi_c = min(hi, clip)
        pad = 1e-6 * (hi_c - lo_c)
        s = np.linspace(lo_c + pad, hi_c - pad, samples)
        f0, f1, _ = (np.asarray(v, dtype=float) for v in func(s))
        if not np.all(f0 > 0):
            raise DomainError(f"custom profile {name!r} is not positive on its domain")
        if not np.all(f0 - s * f1 > 0):
            raise DomainError(f"custom profile {name!r} violates phi - s phi' > 0")
        return fam

    @property
    def code(self) -> int | None:
        """Compiled-kernel code, ``None`` for custom profiles."""
        return _KIND_CODES.get(self.kind)

    @property
    def is_riemannian(self) -> bool:
        return self.kind == "riemannian"

    def in_domain(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        lo, hi = self.s_domain
        return (s > lo) & (s < hi)

    def check_domain(self, s) -> None:
        if not np.all(self.in_domain(s)):
            bad = np.asarray(s, dtype=float)[~self.in_domain(s)]
            raise DomainError(f"s={bad.ravel()[0]!r} outside domain {self.s_domain} of {self.name}")

    def eval(self, s):
        """Return ``(phi, phi', phi'')`` at ``s`` (scalar or array)."""
        self.check_domain(s)
        scalar = np.ndim(s) == 0
        s_arr = np.asarray(s, dtype=float)
        if self.func is not None:
            out = tuple(np.asarray(v, dtype=float) for v in self.func(s_arr))
        else:
            from ._kernels import phi_numpy
            out = phi_numpy(self.code, self.l, s_arr)
        if scalar:
            return tuple(float(v) for v in out)
        return out

    def eval_unchecked(self, s):
        """Vectorised evaluation without the domain check (NaN where undefined)."""
        s_arr = np.asarray(s, dtype=float)
        if self.func is not None:
            return tuple(np.asarray(v, dtype=float) for v in self.func(s_arr))
        from ._kernels import phi_numpy
        return phi_numpy(self.code, self.l, s_arr)

    def F(self, alpha, beta):
        """Norm value ``alpha * phi(beta / alpha)``."""
        s = beta / alpha
        return alpha * self.eval(s)[0]

    def to_dict(self) -> dict:
        if self.kind == "generalized_kropina":
            return {"kind": self.kind, "l": self.l}
        if self.kind == "custom":
            raise ValueError("custom profiles are not serialisable")
        return {"kind": self.kind}

    @classmethod
    def coerce(cls, obj) -> "PhiFamily":
        """Build a family from ``"randers"`` or ``{"kind": ..., "l": ...}``."""
        if isinstance(obj, PhiFamily):
            return obj
        if isinstance(obj, str):
            obj = {"kind": obj}
        kind = obj.get("kind")
        if kind == "riemannian":
            return cls.riemannian()
        if kind == "randers":
            return cls.randers()
        if kind == "kropina":
            return cls.kropina()
        if kind == "generalized_kropina":
            return cls.generalized_kropina(float(obj["l"]))
        raise ValueError(f"unknown profile family {kind!r}")


def phi_eval(family: PhiFamily, s):
    """``(phi, phi', phi'')`` at ``s``; raises :class:`DomainError` outside the domain."""
    return family.eval(s)


class RhoCoefficients(NamedTuple):
    rho: float
    rho0: float
    rho1: float


def rho_from_phi(s, f0, f1, f2):
    rho = f0 * (f0 - s * f1)
    rho0 = f0 * f2 + f1 * f1
    rho1 = -s * (f0 * f2 + f1 * f1) + f0 * f1
    return rho, rho0, rho1


def rho_coeffs(family: PhiFamily, s) -> RhoCoefficients:
    f0, f1, f2 = family.eval(s)
    return RhoCoefficients(*rho_from_phi(s, f0, f1, f2))


class MinkowskiCheck(NamedTuple):
    ok: bool
    margin: float
    weak_margin: float


def check_minkowski_condition(family: PhiFamily, b: float, s_samples) -> MinkowskiCheck:
    """Check ``phi - s phi' + (b^2 - s^2) phi'' > 0`` on the samples.

    ``margin`` is the minimum of that expression, ``weak_margin`` the minimum of
    ``phi - s phi'``.
    """
    s = np.atleast_1d(np.asarray(s_samples, dtype=float))
    if not b < family.b0:
        raise DomainError(f"b={b} is not below b0={family.b0}")
    if np.any(np.abs(s) > b * (1 + 1e-14)):
        raise DomainError("samples must satisfy |s| <= b")
    family.check_domain(s)
    f0, f1, f2 = family.eval(s)
    weak = f0 - s * f1
    full = weak + (b * b - s * s) * f2
    margin = float(np.min(full))
    return MinkowskiCheck(bool(margin > 0), margin, float(np.min(weak)))


@dataclass(frozen=True, eq=False)
class AlphaBetaPoint:
    """A scalar product ``a`` and a linear form ``beta`` on one tangent space."""

    a: np.ndarray
    beta: np.ndarray
    b: float = float("nan")

    def __post_init__(self):
        a = np.array(self.a, dtype=float)
        beta = np.array(self.beta, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or beta.shape != (a.shape[0],):
            raise ValueError("a must be square and beta a matching covector")
        if a.shape[0] < 3:
            raise ValueError("leaf dimension m = dim - 1 must be at least 2")
        if not np.allclose(a, a.T, rtol=0, atol=1e-14 * np.abs(a).max()):
            raise ValueError("a is not symmetric")
        a = 0.5 * (a + a.T)
        if np.linalg.eigvalsh(a).min() <= 0:
            raise ValueError("a is not positive definite")
        b_true = math.sqrt(float(beta @ np.linalg.solve(a, beta)))
        b = self.b
        if math.isnan(b):
            b = b_true
        elif abs(b * b - b_true * b_true) > 1e-12 * max(b_true * b_true, 1e-300):
            raise ValueError(f"stored b={b} inconsistent with alpha-norm of beta {b_true}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "b", float(b))

    @property
    def dim(self) -> int:
        return self.a.shape[0]

    @property
    def m(self) -> int:
        return self.dim - 1

    @property
    def beta_sharp(self) -> np.ndarray:
        return np.linalg.solve(self.a, self.beta)

    def inner(self, u, v) -> float:
        return float(np.asarray(u) @ self.a @ np.asarray(v))

    def alpha(self, y) -> float:
        return math.sqrt(self.inner(y, y))

    def beta_of(self, y) -> float:
        return float(self.beta @ np.asarray(y))

    def F(self, family: PhiFamily, y) -> float:
        al = self.alpha(y)
        return al * family.eval(self.beta_of(y) / al)[0]


def _check_b(point: AlphaBetaPoint, family: PhiFamily) -> None:
    if not point.b < family.b0:
        raise DomainError(f"b={point.b} is not below b0={family.b0} for {family.name}")


def fundamental_matrix(point: AlphaBetaPoint, family: PhiFamily, y) -> np.ndarray:
    """Matrix of ``g_y`` for an alpha-unit ``y``."""
    y = np.asarray(y, dtype=float)
    if abs(point.alpha(y) - 1.0) > 1e-10:
        raise NotUnitVector(f"alpha(y)={point.alpha(y)!r}, expected 1")
    _check_b(point, family)
    s = point.beta_of(y)
    rho, rho0, rho1 = rho_coeffs(family, s)
    yb = point.a @ y
    beta = point.beta
    g = (rho * point.a + rho0 * np.outer(beta, beta)
         + rho1 * (np.outer(beta, yb) + np.outer(yb, beta))
         - rho1 * s * np.outer(yb, yb))
    return g


def fundamental_tensor(point: AlphaBetaPoint, family: PhiFamily, y, u, v) -> float:
    """``g_y(u, v)`` from the closed form in the rho-coefficients."""
    y = np.asarray(y, dtype=float)
    if abs(point.alpha(y) - 1.0) > 1e-10:
        raise NotUnitVector(f"alpha(y)={point.alpha(y)!r}, expected 1")
    _check_b(point, family)
    s = point.beta_of(y)
    rho, rho0, rho1 = rho_coeffs(family, s)
    bu, bv = point.beta_of(u), point.beta_of(v)
    yu, yv = point.inner(y, u), point.inner(y, v)
    return (rho * point.inner(u, v) + rho0 * bu * bv
            + rho1 * (bu * yv + bv * yu) - rho1 * s * yu * yv)


_FD4 = ((-2, 1.0 / 12.0), (-1, -8.0 / 12.0), (1, 8.0 / 12.0), (2, -1.0 / 12.0))


def _oracle_step(point: AlphaBetaPoint, family: PhiFamily, y, u, v) -> float:
    # shrink the step near the edge of the profile domain (e.g. beta(y) -> 0 for Kropina)
    al = point.alpha(y)
    s = point.beta_of(y) / al
    lo, hi = family.s_domain
    room = min(s - lo, hi - s)
    rel = min(1.0, room / max(point.b, 1e-300)) if math.isfinite(room) else 1.0
    span = max(point.alpha(u), point.alpha(v), 1e-300)
    return 3e-3 * al * rel / span


def hessian_tensor_oracle(point: AlphaBetaPoint, family: PhiFamily, y, u, v,
                          h: float | None = None) -> float:
    """``1/2 d^2/ds dt F^2(y + s u + t v)`` at ``s = t = 0``.

    Tensor product of two fourth-order central first-difference stencils
    (16 evaluations, truncation error ``O(h^4)``).  The default step is
    ``3e-3 * alpha(y)``, scaled down near the edge of the profile domain and by the
    alpha-length of ``u, v``.  If a stencil point leaves the domain of ``F`` the step
    is shrunk tenfold once before giving up with :class:`DomainError`.
    """
    y = np.asarray(y, dtype=float)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if not np.any(y):
        raise DomainError("y must be nonzero")
    if h is None:
        h = _oracle_step(point, family, y, u, v)

    def F2(z):
        return point.F(family, z) ** 2

    for attempt in range(2):
        try:
            total = 0.0
            for i, ci in _FD4:
                for j, cj in _FD4:
                    total += ci * cj * F2(y + (i * h) * u + (j * h) * v)
            return 0.5 * total / (h * h)
        except DomainError:
            if attempt == 1:
                raise
            h *= 0.1
    raise AssertionError("unreachable")


class SigmaG(NamedTuple):
    rho_form: float
    phi_form: float


def sigma_from_coeffs(m: int, s, b2, f0, f1, f2):
    """Both closed forms of ``det g_y / det a`` (vectorised)."""
    rho, rho0, rho1 = rho_from_phi(s, f0, f1, f2)
    rho_form = rho ** (m - 1) * (rho * rho + rho0 * rho1 * s ** 3 + rho1 * rho1 * s * s
                                 + (rho - rho0 * b2) * rho1 * s + (rho * rho0 - rho1 * rho1) * b2)
    q = f0 - s * f1
    phi_form = f0 ** (m + 2) * q ** (m - 1) * (q + (b2 - s * s) * f2)
    return rho_form, phi_form


def sigma_g(point: AlphaBetaPoint, family: PhiFamily, s: float, rtol: float = 1e-10) -> SigmaG:
    """``sigma_g`` at ``s = beta(y)`` by both closed forms.

    Raises :class:`FormMismatch` when the two forms differ by more than ``rtol``
    relative.
    """
    if point.m < 2:
        raise ValueError("m must be at least 2")
    _check_b(point, family)
    f0, f1, f2 = family.eval(s)
    r, p = sigma_from_coeffs(point.m, s, point.b ** 2, f0, f1, f2)
    if abs(r - p) > rtol * max(abs(r), abs(p)):
        raise FormMismatch(f"sigma_g closed forms disagree: {r!r} vs {p!r}")
    return SigmaG(float(r), float(p))
