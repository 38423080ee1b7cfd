"""Acceptance criteria, one test each, at the stated tolerances.

Every test prints a single ``criterion N: PASS|FAIL`` line (also collected in
the terminal summary) and then asserts the outcome.  Criteria that fail do so
because the closed forms under test disagree with independent oracles; the
numbers behind each failure are in the printed detail.
"""

from __future__ import annotations

import gc
import json
import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from abfoliate.integrals import (constant_formula_residual, eigenvalue_identity_check,
                                 general_formula_residual, kropina_trace_closed_form,
                                 observed_orders, q_constants, randers_integral_residual,
                                 randers_q_closed_form, reeb_residual_a)
from abfoliate.leaf_operators import (FrameField, curvature_vector_g, g_oracle,
                                      kropina_curvature_vector, operator_U, randers_c,
                                      randers_script_Z, randers_shape_operator_scaled, script_Z,
                                      shape_operator_g, trace_op)
from abfoliate.manifold import ChartGrid, dot, matvec
from abfoliate.minkowski import (PhiFamily, fundamental_matrix, fundamental_tensor,
                                 hessian_tensor_oracle, sigma_g)
from abfoliate.normal import build_frame, frame_arrays, normal_oracle
from abfoliate.scenarios import SCENARIOS, ScenarioParams

from _support import FAMILIES, random_case

pytestmark = pytest.mark.acceptance

RESULTS: dict[int, tuple[bool, str]] = {}
DURATIONS: dict[int, float] = {}

SWEEP_SEED = 20260115
ORDER_MIN = 1.8
FLOOR = 1e-11
RESOLUTIONS = (32, 64, 128)
ORACLE_SCENARIOS = [(sid, fam) for sid in ("S2", "S3", "S4") for fam in ("randers", "kropina")]


def _mx(x) -> float:
    return float(np.max(np.abs(x)))


def _report(n: int, ok: bool, detail: str, started: float | None = None) -> None:
    if started is not None:
        DURATIONS[n] = time.perf_counter() - started
    RESULTS[n] = (ok, detail)
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, f"criterion {n}: {detail}"


def _ff(sid, res, fam, dim=3, **params):
    geo = SCENARIOS[sid].geometry(ChartGrid(dim, res), ScenarioParams(**params))
    return FrameField(geo, FAMILIES.get(fam) or PhiFamily.coerce(fam))


def _sweep(n=100, seed=SWEEP_SEED):
    rng = np.random.default_rng(seed)
    names = list(FAMILIES)
    return [(names[i % len(names)],) + random_case(rng, names[i % len(names)]) for i in range(n)]


# ---------------------------------------------------------------------------

def test_criterion_01_fundamental_tensor_oracle():
    t0 = time.perf_counter()
    cases = _sweep()
    worst = 0.0
    for _, fam, p, data, y, u, v in cases:
        g = fundamental_tensor(p, fam, y, u, v)
        o = hessian_tensor_oracle(p, fam, y, u, v)
        scale = max(abs(g), math.sqrt(fundamental_tensor(p, fam, y, u, u) * fundamental_tensor(p, fam, y, v, v)))
        worst = max(worst, abs(g - o) / scale)
    dt = time.perf_counter() - t0
    _report(1, worst <= 1e-7 and dt < 1.0,
            f"100 cases, worst relative gap {worst:.3e} (tol 1e-7), runtime {dt:.3f} s (limit 1 s)", t0)


def test_criterion_02_sigma_dual_forms():
    t0 = time.perf_counter()
    forms, det = 0.0, 0.0
    for _, fam, p, data, y, u, v in _sweep():
        sg = sigma_g(p, fam, p.beta_of(y))
        forms = max(forms, abs(sg.rho_form - sg.phi_form) / abs(sg.phi_form))
        ratio = np.linalg.det(fundamental_matrix(p, fam, y)) / np.linalg.det(p.a)
        det = max(det, abs(sg.rho_form - ratio) / abs(ratio))
    _report(2, forms <= 1e-12 and det <= 1e-9,
            f"forms agree to {forms:.3e} (tol 1e-12), det(g)/det(a) to {det:.3e} (tol 1e-9)", t0)


def test_criterion_03_normal_solver():
    t0 = time.perf_counter()
    cases = _sweep()
    fp = 0.0
    randers_gap = 0.0
    kropina_gap, kropina_bad, kropina_bad_neg, kropina_n = 0.0, 0, 0, 0
    signed_gap = 0.0
    for name, fam, p, data, *_ in cases:
        fr = frame_arrays(fam, p.m, np.array([p.b ** 2]), np.array([data.betaN]))
        fp = max(fp, abs(float(fr.fixed_point_residual[0])))
        s = float(fr.s[0])
        if name == "randers":
            c = math.sqrt(1.0 - (p.b ** 2 - data.betaN ** 2))
            randers_gap = max(randers_gap, abs(s - (c * float(fr.c_hat[0]) - 1.0)))
        elif name == "kropina":
            kropina_n += 1
            closed = math.sqrt(p.b * (p.b + abs(data.betaN)) / 2.0)
            gap = abs(s - closed)
            kropina_gap = max(kropina_gap, gap)
            kropina_bad += gap > 1e-10
            kropina_bad_neg += gap > 1e-10 and data.betaN < 0
            signed_gap = max(signed_gap, abs(s - math.sqrt(p.b * (p.b + data.betaN) / 2.0)))
    oracle_gap = 0.0
    rng = np.random.default_rng(SWEEP_SEED + 1)
    for name in FAMILIES:
        for _ in range(50):
            fam, p, data, *_ = random_case(rng, name)
            frame = build_frame(data, fam)
            n_formula = frame.c_hat * data.N - frame.gamma1 * p.beta_sharp
            oracle_gap = max(oracle_gap, _mx(normal_oracle(data, fam) - n_formula))
    ok = fp <= 1e-12 and randers_gap <= 1e-10 and kropina_gap <= 1e-10 and oracle_gap <= 1e-8
    _report(3, ok,
            f"fixed-point residual {fp:.3e} (tol 1e-12); Randers closed form {randers_gap:.3e}; "
            f"Kropina closed form sqrt(b(b+|beta(N)|)/2) off by up to {kropina_gap:.3e} "
            f"({kropina_bad}/{kropina_n} cases above 1e-10, {kropina_bad_neg} of them with "
            f"beta(N) < 0; the signed "
            f"form sqrt(b(b+beta(N))/2) matches to {signed_gap:.3e}); "
            f"Newton oracle vs c_hat N - gamma1 beta# {oracle_gap:.3e} (tol 1e-8, 3x50 cases)", t0)


def test_criterion_04_riemannian_collapse():
    t0 = time.perf_counter()
    worst = {}
    chain = 0.0
    for sid in ("S2", "S4"):
        ff = _ff(sid, 32, "riemannian")
        geo = ff.geometry
        worst[sid] = max(_mx(shape_operator_g(ff) - geo.A_bar), _mx(curvature_vector_g(ff) - geo.Z_bar),
                         _mx(operator_U(ff)))
        chain = max(chain, abs(general_formula_residual(ff).integral - reeb_residual_a(ff).integral))
    ok = max(worst.values()) <= 1e-9 and chain <= 1e-12
    _report(4, ok, f"max componentwise gap {max(worst.values()):.3e} (tol 1e-9); general formula "
                   f"vs Reeb formula for a {chain:.3e} (tol 1e-12)", t0)


# ---------------------------------------------------------------------------
# criteria 5 and 6 share the oracle runs

_GAPS: dict = {}


def _oracle_gaps(sid, fam, res):
    key = (sid, fam, res)
    if key not in _GAPS:
        t0 = time.perf_counter()
        ff = _ff(sid, res, fam)
        orc = g_oracle(ff)
        a_gap = _mx(shape_operator_g(ff) - orc.A_g)
        z_gap = _mx(curvature_vector_g(ff) - orc.Z)
        del ff, orc
        gc.collect()
        _GAPS[key] = (a_gap, z_gap, time.perf_counter() - t0)
    return _GAPS[key]


def _oracle_protocol(idx):
    lines, ok_all = [], True
    for sid, fam in ORACLE_SCENARIOS:
        gaps = [_oracle_gaps(sid, fam, r)[idx] for r in RESOLUTIONS]
        secs = _oracle_gaps(sid, fam, RESOLUTIONS[-1])[2]
        est = observed_orders(RESOLUTIONS, gaps, floor=FLOOR)
        at_floor = all(g <= FLOOR for g in gaps)
        order = est.min_pairwise()
        ok = (at_floor or (order is not None and order >= ORDER_MIN)) and gaps[-1] <= 5e-3 and secs < 60
        ok_all &= ok
        order_txt = "floor" if at_floor else f"{order:.2f}"
        lines.append(f"{sid}/{fam}: {'ok' if ok else 'FAIL'} gaps "
                     + ", ".join(f"{g:.2e}" for g in gaps)
                     + f" order {order_txt} ({secs:.1f} s at 128)")
    return ok_all, "; ".join(lines)


@pytest.mark.slow
def test_criterion_05_shape_operator_oracle():
    ok, detail = _oracle_protocol(0)
    _report(5, ok, f"shape operator vs oracle (order >= 1.8, <= 5e-3 at 128, < 60 s): {detail}")


@pytest.mark.slow
def test_criterion_06_curvature_vector_oracle():
    ok, detail = _oracle_protocol(1)
    t0 = time.perf_counter()
    tang = {}
    for fam in ("randers", "kropina"):
        ff = _ff("S3", 64, fam, modulation=0.0)
        tang[fam] = _mx(curvature_vector_g(ff, tangent_reduced=True) - curvature_vector_g(ff))
    DURATIONS[6] = time.perf_counter() - t0
    ok_t = max(tang.values()) <= 1e-9
    _report(6, ok and ok_t,
            f"curvature vector vs oracle: {detail}; tangent-beta display on S3 (beta(N)=0, b const) "
            f"vs general path {max(tang.values()):.3e} (tol 1e-9)")


# ---------------------------------------------------------------------------

def test_criterion_07_closed_form_displays():
    t0 = time.perf_counter()
    ff = _ff("S2", 64, "randers")
    shape = _mx(randers_shape_operator_scaled(ff) - randers_c(ff)[..., None, None] * shape_operator_g(ff))
    zs = _mx(randers_script_Z(ff) - script_Z(ff))
    # the Kropina display needs beta(N) = 0 with constant b; the flat S3 variant
    # makes both sides vanish, so the curved tangent variant of S4 is checked too
    kro = {}
    for label, sid, params in (("S3", "S3", dict(modulation=0.0)),
                               ("S4 tangent", "S4", dict(epsilon=0.0, modulation=0.0))):
        kf = _ff(sid, 64, "kropina", **params)
        kro[label] = _mx(kropina_curvature_vector(kf) - curvature_vector_g(kf))
    ok = shape <= 1e-9 and zs <= 1e-9 and max(kro.values()) <= 1e-9
    _report(7, ok, f"Randers c A^g display {shape:.3e}, script Z display {zs:.3e} (S2); Kropina Z "
                   f"display " + ", ".join(f"{k} {v:.3e}" for k, v in kro.items()) + " (tol 1e-9)", t0)


def test_criterion_08_general_and_constant_formulae():
    t0 = time.perf_counter()
    lines, ok = [], True
    for sid in ("S3", "S4"):
        for fam in ("randers", "kropina"):
            r = [general_formula_residual(_ff(sid, res, fam)).relative for res in (32, 64)]
            est = observed_orders((32, 64), r, floor=FLOOR)
            at_floor = all(x <= FLOOR for x in r)
            order = est.min_pairwise()
            good = r[1] <= 1e-4 and (at_floor or (order is not None and order >= ORDER_MIN))
            ok &= good
            lines.append(f"{sid}/{fam} {r[1]:.2e} order {'floor' if at_floor else f'{order:.2f}'}")
            gc.collect()
    const = {fam: constant_formula_residual(_ff("S2", 64, fam)).residual.relative
             for fam in ("randers", "kropina")}
    ff = _ff("S2", 64, "randers")
    q, qr = q_constants(ff), randers_q_closed_form(ff)
    qgap = max(abs(q.q1 - qr.q1), abs(q.q2 - qr.q2))
    ok &= max(const.values()) <= 1e-9 and qgap <= 1e-12
    _report(8, ok, "general formula at 64 (tol 1e-4, order >= 1.8): " + "; ".join(lines)
            + f"; constant case on S2 {max(const.values()):.3e} (tol 1e-9); Randers q closed form vs "
              f"q from the general constants {qgap:.3e} (tol 1e-12)", t0)


@pytest.mark.slow
def test_criterion_09_kropina_randers_eigenvalue():
    t0 = time.perf_counter()
    kf = _ff("S2", 64, "kropina")
    trace_gap = _mx(kropina_trace_closed_form(kf) - trace_op(shape_operator_g(kf)))
    del kf
    t_low = time.perf_counter() - t0
    rr = []
    for res in RESOLUTIONS:
        rr.append(randers_integral_residual(_ff("S4", res, "randers")).relative)
        gc.collect()
    est = observed_orders(RESOLUTIONS, rr, floor=FLOOR)
    order = est.min_pairwise()
    randers_ok = all(x <= FLOOR for x in rr) or (order is not None and order >= ORDER_MIN)
    t1 = time.perf_counter()
    p = ScenarioParams()
    eig = {}
    for fam in ("randers", "kropina"):
        ef = _ff("S2", 64, fam)
        geo = ef.geometry
        bt = geo.beta_top
        X = bt / np.sqrt(dot(bt, matvec(geo.metric.a, bt)))[..., None]
        r = eigenvalue_identity_check(ef, X, p.epsilon, p.epsilon_prime)
        eig[fam] = (abs(r.integral), abs(r.constant_case_integral - r.q1 * p.epsilon_prime ** 2 * r.integral))
    DURATIONS[9] = t_low + time.perf_counter() - t1
    eig_ok = max(v[0] for v in eig.values()) <= 1e-10 and max(v[1] for v in eig.values()) <= 1e-9
    ok = trace_gap <= 1e-9 and randers_ok and eig_ok
    _report(9, ok, f"Kropina trace closed form vs general trace {trace_gap:.3e} (tol 1e-9, S2); "
                   f"Randers integral residual " + ", ".join(f"{x:.3e}" for x in rr)
            + f" order {order if order is None else round(order, 2)} (need -> 0, >= 1.8, S4); "
              f"eigenvalue integral {max(v[0] for v in eig.values()):.3e} (tol 1e-10), consistency "
              f"{max(v[1] for v in eig.values()):.3e} (tol 1e-9)")


# ---------------------------------------------------------------------------

def _cli_sweep(tmp_path, threads: str):
    env = dict(os.environ, FINSLER_THREADS=threads, NUMBA_NUM_THREADS="2")
    reports = {}
    for sid in sorted(SCENARIOS):
        for fam in ("randers", "kropina"):
            cfg = tmp_path / f"{sid}-{fam}.json"
            cfg.write_text(json.dumps({"scenario": sid, "family": fam, "resolution": 64}))
            out = tmp_path / f"{sid}-{fam}-t{threads}.json"
            proc = subprocess.run([sys.executable, "-m", "abfoliate", "verify", "--config", str(cfg),
                                   "--out", str(out)], env=env, capture_output=True, text=True)
            if proc.returncode not in (0, 2):
                raise RuntimeError(proc.stderr)
            data = json.loads(out.read_text())
            data.pop("timing")
            reports[(sid, fam)] = json.dumps(data, sort_keys=True)
    return reports


@pytest.mark.slow
def test_criterion_10_runtime_and_determinism(tmp_path):
    t0 = time.perf_counter()
    one = _cli_sweep(tmp_path, "1")
    sweep_time = time.perf_counter() - t0
    two = _cli_sweep(tmp_path, "2")
    differing = [f"{s}/{f}" for (s, f) in one if one[(s, f)] != two[(s, f)]]
    # criteria 1-4 and 7-9 run at resolution <= 64; add the low-resolution oracle runs of 5 and 6
    low = sum(DURATIONS.get(k, 0.0) for k in (1, 2, 3, 4, 6, 7, 8, 9))
    low += sum(v[2] for k, v in _GAPS.items() if k[2] <= 64)
    total = sweep_time + low
    missing = [k for k in (1, 2, 3, 4, 7, 8) if k not in DURATIONS]
    ok = total < 300 and not differing
    note = f" (durations missing for criteria {missing})" if missing else ""
    _report(10, ok, f"all scenarios x families via the CLI at 64 in {sweep_time:.1f} s, plus "
                    f"{low:.1f} s for the other criteria at <= 64: {total:.1f} s (limit 300 s){note}; "
                    f"reports identical for 1 and 2 threads: "
                    f"{'yes' if not differing else 'no: ' + ', '.join(differing)}")
