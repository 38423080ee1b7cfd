"""Hot kernels with a numba path and a pure-numpy fallback.

The backend is chosen at import time from the ``FINSLER_NUMBA`` environment
variable (``0``/``off``/``false`` selects numpy) and can be switched at runtime
with :func:`set_backend`.  Both paths perform the same floating point operations
in the same order; reductions never depend on the thread count.

Kernels:

* :func:`fd_derivative` - fourth-order centred periodic first derivative along one axis.
* :func:`pairwise_sum` - fixed-tree pairwise summation.
* :func:`solve_fixed_point` - per-node bracketed Newton solve of the scalar
  normal equation ``s = c_hat(s) * betaN - gamma1(s) * b**2``.
"""

from __future__ import annotations

import os
from typing import Callable

import math

import numpy as np

# the bundled TBB is too old for numba; prefer OpenMP unless the user chose otherwise
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

try:  # pragma: no cover - exercised implicitly
    import numba
    from numba import njit, prange
except ImportError:  # pragma: no cover
    numba = None

STATUS_OK = 0
STATUS_NO_ROOT = 1
STATUS_DOMAIN = 3

SCAN_POINTS = 33
SCAN_POINTS_FINE = 1025
MAX_ITER = 200
EXACT_TOL = 1e-15
RESIDUAL_TOL = 1e-12
_OPEN_SHIFT = 1e-9


def _env_wants_numba() -> bool:
    flag = os.environ.get("FINSLER_NUMBA", "1").strip().lower()
    return flag not in ("0", "off", "false", "no")


_BACKEND = "numba" if (numba is not None and _env_wants_numba()) else "numpy"


def get_backend() -> str:
    return _BACKEND


def set_backend(name: str) -> None:
    global _BACKEND
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and numba is None:
        raise RuntimeError("numba is not importable")
    _BACKEND = name


def set_threads(n: int | None) -> None:
    """Set the numba thread count (no-op on the numpy backend)."""
    if n is None or numba is None:
        return
    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)


def _threads_from_env() -> None:
    value = os.environ.get("FINSLER_THREADS")
    if value:
        try:
            set_threads(int(value))
        except ValueError:
            pass


_threads_from_env()


# ---------------------------------------------------------------------------
# finite differences
# ---------------------------------------------------------------------------

def _fd_numpy(f3: np.ndarray, h: float) -> np.ndarray:
    n = f3.shape[1]
    pad = np.concatenate([f3[:, n - 2:], f3, f3[:, :2]], axis=1)
    fm2 = pad[:, 0:n]
    fm1 = pad[:, 1:n + 1]
    fp1 = pad[:, 3:n + 3]
    fp2 = pad[:, 4:n + 4]
    return (8.0 * (fp1 - fm1) - (fp2 - fm2)) / (12.0 * h)


if numba is not None:

    @njit(parallel=True, cache=True)
    def _fd_numba(f3, h):  # pragma: no cover - compiled
        P, n, Q = f3.shape
        out = np.empty_like(f3)
        den = 12.0 * h
        for p in prange(P):
            for i in range(n):
                im2 = (i - 2) % n
                im1 = (i - 1) % n
                ip1 = (i + 1) % n
                ip2 = (i + 2) % n
                for q in range(Q):
                    out[p, i, q] = (8.0 * (f3[p, ip1, q] - f3[p, im1, q])
                                    - (f3[p, ip2, q] - f3[p, im2, q])) / den
        return out


def fd_derivative(f: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Fourth-order periodic derivative of ``f`` along ``axis`` with spacing ``h``."""
    f = np.ascontiguousarray(f, dtype=np.float64)
    shape = f.shape
    n = shape[axis]
    if n < 5:
        raise ValueError("periodic fourth-order stencil needs at least 5 nodes")
    pre = int(np.prod(shape[:axis], dtype=np.int64))
    post = int(np.prod(shape[axis + 1:], dtype=np.int64))
    f3 = f.reshape(pre, n, post)
    if _BACKEND == "numba":
        out = _fd_numba(f3, float(h))
    else:
        out = _fd_numpy(f3, float(h))
    return out.reshape(shape)


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------

def _pairwise_numpy(x: np.ndarray) -> float:
    buf = x
    while buf.size > 1:
        half = buf.size // 2
        pairs = buf[0:2 * half:2] + buf[1:2 * half:2]
        if buf.size % 2:
            pairs = np.append(pairs, buf[-1])
        buf = pairs
    return float(buf[0]) if buf.size else 0.0


if numba is not None:

    @njit(cache=True)
    def _pairwise_numba(x):  # pragma: no cover - compiled
        n = x.size
        if n == 0:
            return 0.0
        buf = x.copy()
        while n > 1:
            half = n // 2
            for i in range(half):
                buf[i] = buf[2 * i] + buf[2 * i + 1]
            if n % 2:
                buf[half] = buf[n - 1]
                n = half + 1
            else:
                n = half
        return buf[0]


def pairwise_sum(x: np.ndarray) -> float:
    """Sum with a fixed binary tree; the result is independent of threading."""
    x = np.ascontiguousarray(x, dtype=np.float64).ravel()
    if _BACKEND == "numba":
        return float(_pairwise_numba(x))
    return _pairwise_numpy(x)


# ---------------------------------------------------------------------------
# per-node normal equation
# ---------------------------------------------------------------------------
#
# Family codes: 0 riemannian, 1 randers, 2 (generalized) Kropina with exponent l.

def phi_numpy(code: int, l: float, s):
    s = np.asarray(s, dtype=np.float64)
    if code == 0:
        return np.ones_like(s), np.zeros_like(s), np.zeros_like(s)
    if code == 1:
        return 1.0 + s, np.ones_like(s), np.zeros_like(s)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = 1.0 / s if l == 1.0 else s ** (-l)
        return p, -l * p / s, l * (l + 1.0) * p / (s * s)


def _residual_numpy(phi: Callable, s, b2, bn, t2, with_derivative=False):
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        f0, f1, f2 = phi(s)
        q = f0 - s * f1
        bad = ~(q > 0.0)
        g1 = f1 / q
        disc = 1.0 - g1 * g1 * t2
        bad |= disc < 0.0
        root = np.sqrt(np.where(bad, 0.0, disc))
        c = g1 * bn + root
        res = c * bn - g1 * b2 - s
        res = np.where(bad, np.nan, res)
        if not with_derivative:
            return res
        g1p = f0 * f2 / (q * q)
        dc = g1p * bn - g1 * g1p * t2 / root
        der = dc * bn - g1p * b2 - 1.0
        return res, der


if numba is not None:

    @njit(cache=True)
    def _phi_nb(code, l, s):  # pragma: no cover - compiled
        if code == 0:
            return 1.0, 0.0, 0.0
        if code == 1:
            return 1.0 + s, 1.0, 0.0
        p = 1.0 / s if l == 1.0 else s ** (-l)
        return p, -l * p / s, l * (l + 1.0) * p / (s * s)

    @njit(cache=True)
    def _residual_nb(code, l, s, b2, bn, t2):  # pragma: no cover - compiled
        f0, f1, f2 = _phi_nb(code, l, s)
        q = f0 - s * f1
        if not q > 0.0:
            return np.nan, np.nan
        g1 = f1 / q
        disc = 1.0 - g1 * g1 * t2
        if disc < 0.0:
            return np.nan, np.nan
        root = np.sqrt(disc)
        c = g1 * bn + root
        res = c * bn - g1 * b2 - s
        g1p = f0 * f2 / (q * q)
        if root > 0.0:
            dc = g1p * bn - g1 * g1p * t2 / root
        else:
            dc = np.nan
        der = dc * bn - g1p * b2 - 1.0
        return res, der

    @njit(cache=True)
    def _solve_one_nb(code, l, b, bn, dom_lo, dom_hi, K):  # pragma: no cover - compiled
        if code == 0:
            return bn, 0
        b2 = b * b
        t2 = b2 - bn * bn
        if t2 < 0.0:
            t2 = 0.0
        lo = max(-b, dom_lo)
        hi = min(b, dom_hi)
        lo_open = -b <= dom_lo
        hi_open = b >= dom_hi
        if hi < lo or (hi == lo and (lo_open or hi_open)):
            return np.nan, 3
        if hi == lo:
            f, _ = _residual_nb(code, l, lo, b2, bn, t2)
            if np.isfinite(f) and abs(f) <= RESIDUAL_TOL:
                return lo, 0
            return np.nan, 1
        width = hi - lo
        prev_s = np.nan
        prev_f = np.nan
        found = False
        xa = 0.0
        xb = 0.0
        fa = 0.0
        fb = 0.0
        for k in range(K):
            if k == 0:
                s = lo + width * _OPEN_SHIFT if lo_open else lo
            elif k == K - 1:
                s = hi - width * _OPEN_SHIFT if hi_open else hi
            else:
                s = lo + width * (k / (K - 1.0))
            f, _ = _residual_nb(code, l, s, b2, bn, t2)
            if np.isfinite(f):
                if abs(f) <= EXACT_TOL * (1.0 + abs(s)):
                    return s, 0
                if np.isfinite(prev_f) and ((f > 0.0) != (prev_f > 0.0)):
                    xa = prev_s
                    xb = s
                    fa = prev_f
                    fb = f
                    found = True
                    break
            prev_s = s
            prev_f = f
        if not found:
            return np.nan, 1
        # orient so that f(xl) < 0 < f(xh)
        if fa < 0.0:
            xl = xa
            xh = xb
        else:
            xl = xb
            xh = xa
        rts = 0.5 * (xa + xb)
        dxold = abs(xb - xa)
        dx = dxold
        f, df = _residual_nb(code, l, rts, b2, bn, t2)
        for it in range(MAX_ITER):
            newton_ok = np.isfinite(df) and df != 0.0
            if newton_ok:
                newton_ok = not ((((rts - xh) * df - f) * ((rts - xl) * df - f) > 0.0)
                                 or (abs(2.0 * f) > abs(dxold * df)))
            if newton_ok:
                dxold = dx
                dx = f / df
                rts = rts - dx
            else:
                dxold = dx
                dx = 0.5 * (xh - xl)
                rts = xl + dx
            if abs(dx) <= 4.0e-16 * max(abs(rts), 1e-300):
                break
            f, df = _residual_nb(code, l, rts, b2, bn, t2)
            if not np.isfinite(f):
                return np.nan, 1
            if f == 0.0:
                break
            if f < 0.0:
                xl = rts
            else:
                xh = rts
        f, _ = _residual_nb(code, l, rts, b2, bn, t2)
        if not (np.isfinite(f) and abs(f) <= RESIDUAL_TOL):
            return np.nan, 1
        return rts, 0

    @njit(parallel=True, cache=True)
    def _solve_batch_nb(code, l, b, bn, dom_lo, dom_hi, K):  # pragma: no cover - compiled
        n = b.size
        s = np.empty(n)
        st = np.empty(n, dtype=np.int64)
        for i in prange(n):
            si, sti = _solve_one_nb(code, l, b[i], bn[i], dom_lo, dom_hi, K)
            if sti == 1 and K < SCAN_POINTS_FINE:
                si, sti = _solve_one_nb(code, l, b[i], bn[i], dom_lo, dom_hi, SCAN_POINTS_FINE)
            s[i] = si
            st[i] = sti
        return s, st


def _solve_numpy(phi: Callable, b: np.ndarray, bn: np.ndarray, dom_lo: float, dom_hi: float,
                 K: int, riemannian: bool) -> tuple[np.ndarray, np.ndarray]:
    n = b.size
    s_out = np.full(n, np.nan)
    status = np.full(n, STATUS_NO_ROOT, dtype=np.int64)
    if riemannian:
        return bn.copy(), np.zeros(n, dtype=np.int64)
    b2 = b * b
    t2 = np.maximum(b2 - bn * bn, 0.0)
    lo = np.maximum(-b, dom_lo)
    hi = np.minimum(b, dom_hi)
    lo_open = -b <= dom_lo
    hi_open = b >= dom_hi
    empty = (hi < lo) | ((hi == lo) & (lo_open | hi_open))
    status[empty] = STATUS_DOMAIN
    point = (hi == lo) & ~empty
    if point.any():
        f = _residual_numpy(phi, lo[point], b2[point], bn[point], t2[point])
        ok = np.isfinite(f) & (np.abs(f) <= RESIDUAL_TOL)
        idx = np.flatnonzero(point)
        s_out[idx[ok]] = lo[point][ok]
        status[idx[ok]] = STATUS_OK
    live = np.flatnonzero(~empty & ~point)
    if live.size == 0:
        return s_out, status

    L, H = lo[live], hi[live]
    width = H - L
    k = np.arange(K, dtype=np.float64)
    S = L[:, None] + width[:, None] * (k / (K - 1.0))[None, :]
    S[:, 0] = np.where(lo_open[live], L + width * _OPEN_SHIFT, L)
    S[:, -1] = np.where(hi_open[live], H - width * _OPEN_SHIFT, H)
    B2, BN, T2 = b2[live][:, None], bn[live][:, None], t2[live][:, None]
    F = _residual_numpy(phi, S, B2, BN, T2)
    fin = np.isfinite(F)
    exact = fin & (np.abs(F) <= EXACT_TOL * (1.0 + np.abs(S)))
    change = fin[:, 1:] & fin[:, :-1] & ((F[:, 1:] > 0.0) != (F[:, :-1] > 0.0))
    # first event in scan order: an exact hit at index k, or a sign change ending at k
    event = np.zeros_like(fin)
    event[:, :] = exact
    event[:, 1:] |= change
    has = event.any(axis=1)
    first = np.argmax(event, axis=1)
    rows = np.arange(live.size)
    is_exact = has & exact[rows, first]
    idx_exact = live[is_exact]
    s_out[idx_exact] = S[rows[is_exact], first[is_exact]]
    status[idx_exact] = STATUS_OK

    br = has & ~is_exact
    if br.any():
        r = rows[br]
        kk = first[br]
        xa, xb = S[r, kk - 1], S[r, kk]
        fa = F[r, kk - 1]
        b2r, bnr, t2r = b2[live][br], bn[live][br], t2[live][br]
        xl = np.where(fa < 0.0, xa, xb)
        xh = np.where(fa < 0.0, xb, xa)
        rts = 0.5 * (xa + xb)
        dxold = np.abs(xb - xa)
        dx = dxold.copy()
        f, df = _residual_numpy(phi, rts, b2r, bnr, t2r, with_derivative=True)
        active = np.ones(rts.size, dtype=bool)
        failed = np.zeros(rts.size, dtype=bool)
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            for _ in range(MAX_ITER):
                if not active.any():
                    break
                newton_ok = np.isfinite(df) & (df != 0.0)
                newton_ok &= ~((((rts - xh) * df - f) * ((rts - xl) * df - f) > 0.0)
                               | (np.abs(2.0 * f) > np.abs(dxold * df)))
                dx_new = np.where(newton_ok, f / np.where(newton_ok, df, 1.0), 0.5 * (xh - xl))
                rts_new = np.where(newton_ok, rts - dx_new, xl + dx_new)
                dxold = np.where(active, dx, dxold)
                dx = np.where(active, dx_new, dx)
                rts = np.where(active, rts_new, rts)
                done = np.abs(dx) <= 4.0e-16 * np.maximum(np.abs(rts), 1e-300)
                still = active & ~done
                fn, dfn = _residual_numpy(phi, rts, b2r, bnr, t2r, with_derivative=True)
                f = np.where(still, fn, f)
                df = np.where(still, dfn, df)
                bad = still & ~np.isfinite(fn)
                failed |= bad
                still &= ~bad
                still &= ~(fn == 0.0)
                neg = still & (fn < 0.0)
                pos = still & (fn > 0.0)
                xl = np.where(neg, rts, xl)
                xh = np.where(pos, rts, xh)
                active = still
        fin_res = _residual_numpy(phi, rts, b2r, bnr, t2r)
        good = ~failed & np.isfinite(fin_res) & (np.abs(fin_res) <= RESIDUAL_TOL)
        idx = live[br]
        s_out[idx[good]] = rts[good]
        status[idx[good]] = STATUS_OK
    return s_out, status


def _bisect(fn, a: float, b: float, iters: int = 200) -> float:
    """Shrink ``[a, b]`` keeping ``fn(a)`` false and ``fn(b)`` true; returns ``b``."""
    for _ in range(iters):
        m = 0.5 * (a + b)
        if m == a or m == b:
            break
        if fn(m):
            b = m
        else:
            a = m
    return b


def _solve_edge(phi: Callable, b: float, bn: float, lo: float, hi: float) -> tuple[float, int]:
    """Scalar fallback for roots hugging the edge where the discriminant turns negative.

    There the residual is undefined on one side and can jump past zero between
    two scan points, so no sign change is seen.  Locate each defined/undefined
    boundary by bisection and bracket from the boundary instead.
    """
    b2 = b * b
    t2 = max(b2 - bn * bn, 0.0)

    def f(x):
        return float(_residual_numpy(phi, np.array([x]), b2, bn, t2)[0])

    width = hi - lo
    S = lo + width * np.linspace(_OPEN_SHIFT, 1.0 - _OPEN_SHIFT, SCAN_POINTS_FINE)
    F = _residual_numpy(phi, S, b2, bn, t2)
    fin = np.isfinite(F)
    for i in np.flatnonzero(fin[1:] != fin[:-1]):
        if fin[i + 1]:  # undefined -> defined going right
            e = _bisect(lambda x: np.isfinite(f(x)), S[i], S[i + 1])
            a, other = e, S[i + 1]
        else:
            e = _bisect(lambda x: not np.isfinite(f(x)), S[i], S[i + 1])
            # _bisect returns the undefined side; step back onto the defined one
            e = np.nextafter(e, S[i])
            while not np.isfinite(f(e)) and e > S[i]:
                e = np.nextafter(e, S[i])
            a, other = S[i], e
        fa, fo = f(a), f(other)
        if not (np.isfinite(fa) and np.isfinite(fo)) or (fa > 0) == (fo > 0):
            continue
        pos = a if fa > 0 else other
        neg = other if fa > 0 else a
        r = _bisect(lambda x: f(x) > 0, neg, pos)
        if abs(f(r)) <= RESIDUAL_TOL:
            return r, STATUS_OK
    return math.nan, STATUS_NO_ROOT


def solve_fixed_point(b: np.ndarray, betaN: np.ndarray, *, phi: Callable, dom_lo: float,
                      dom_hi: float, code: int | None = None, l: float = 1.0,
                      chunk: int = 1 << 16) -> tuple[np.ndarray, np.ndarray]:
    """Solve the scalar normal equation at every node.

    Returns ``(s, status)`` with ``status`` 0 on success, 1 when no root was
    bracketed (or the residual target was missed) and 3 when the admissible
    interval is empty.  ``code`` selects the compiled profile; custom profiles
    (``code=None``) always run on the numpy path.
    """
    b = np.ascontiguousarray(b, dtype=np.float64).ravel()
    bn = np.ascontiguousarray(betaN, dtype=np.float64).ravel()
    if _BACKEND == "numba" and code is not None:
        s, st = _solve_batch_nb(int(code), float(l), b, bn, float(dom_lo), float(dom_hi), SCAN_POINTS)
        return _edge_retry(phi, b, bn, dom_lo, dom_hi, s, st)
    s = np.empty_like(b)
    st = np.empty(b.size, dtype=np.int64)
    for start in range(0, b.size, chunk):
        sl = slice(start, start + chunk)
        s_c, st_c = _solve_numpy(phi, b[sl], bn[sl], dom_lo, dom_hi, SCAN_POINTS, code == 0)
        retry = np.flatnonzero(st_c == STATUS_NO_ROOT)
        if retry.size:
            s_r, st_r = _solve_numpy(phi, b[sl][retry], bn[sl][retry], dom_lo, dom_hi,
                                     SCAN_POINTS_FINE, code == 0)
            s_c[retry] = s_r
            st_c[retry] = st_r
        s[sl] = s_c
        st[sl] = st_c
    return _edge_retry(phi, b, bn, dom_lo, dom_hi, s, st)


def _edge_retry(phi, b, bn, dom_lo, dom_hi, s, st):
    for i in np.flatnonzero(st == STATUS_NO_ROOT):
        lo, hi = max(-b[i], dom_lo), min(b[i], dom_hi)
        if hi > lo:
            s[i], st[i] = _solve_edge(phi, float(b[i]), float(bn[i]), lo, hi)
    return s, st
