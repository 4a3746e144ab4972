"""Executable acceptance checks shared by ``w2s-lab validate`` and the test suite.

Each check returns a :class:`CheckResult`; a check passes only if its numeric
condition holds and it finishes inside its time budget.
"""
from __future__ import annotations


import os
import tempfile
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import optimize

from . import feature_lab, mp_stieltjes, theory
from .experiments import ExperimentConfig, log_grid, run_experiment

# Monte Carlo trial counts for the contour-agreement check. The per-trial gap
# standard deviation is about 0.04 at these sizes, so tens of trials cannot
# resolve a 0.005 absolute tolerance; these counts bring the standard error
# to roughly a third of it.
CONTOUR_TRIALS_LEFT = 400
CONTOUR_TRIALS_RIGHT = 1000

# Frozen feature-transfer thresholds (pilot: teacher easy gain 0.165,
# teacher hard gain 1e-4, student hard retention 1.00, student easy gain 0.023).
FEATURE_TEACHER_EASY_MIN = 0.1
FEATURE_TEACHER_HARD_MAX = 0.02
FEATURE_STUDENT_RETAIN_MIN = 0.9
FEATURE_STUDENT_EASY_MIN = 0.05


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float
    budget: float

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.number:>2} {self.name}: {self.detail} ({self.seconds:.2f}s / {self.budget:g}s)"


def _rel_or_abs(emp: float, th: float, rel: float, abs_tol: float) -> bool:
    return abs(emp - th) <= max(rel * abs(th), abs_tol)


# ---------------------------------------------------------------- 1-3


def check_self_consistency() -> tuple[bool, str]:
    worst = 0.0
    for lam in np.geomspace(1e-3, 1e3, 40):
        for g in np.geomspace(0.05, 20, 40):
            m = mp_stieltjes.mp_m(float(lam), float(g))
            worst = max(worst, abs(g * lam * m * m + (1 - g + lam) * m - 1))
    return worst < 1e-10, f"max residual {worst:.2e}"


def check_derivative() -> tuple[bool, str]:
    worst = 0.0
    for lam in np.geomspace(1e-3, 1e3, 40):
        h = 1e-4 * lam
        for g in np.geomspace(0.05, 20, 40):
            fd = -(mp_stieltjes.mp_m(lam + h, g) - mp_stieltjes.mp_m(lam - h, g)) / (2 * h)
            m2 = mp_stieltjes.mp_m_derivative(float(lam), float(g))
            worst = max(worst, abs(m2 - fd) / abs(fd))
    return worst < 1e-6, f"max relative error {worst:.2e}"


def check_spectral_oracle() -> tuple[bool, str]:
    errs = []
    for lam in (0.1, 0.3, 1.0):
        emp = mp_stieltjes.empirical_stieltjes(4000, 0.25, lam, seed=0)
        exact = mp_stieltjes.mp_m(lam, 0.25)
        errs.append(abs(emp - exact) / exact)
    return all(e < 0.01 for e in errs), "relative errors " + ", ".join(f"{e:.2e}" for e in errs)


# ---------------------------------------------------------------- 4-5


def _contour(d, n_t, n_s, sigma, lts, lss, trials, seed, threads=None):
    cfg = ExperimentConfig(
        "ContourGrid", "acceptance", d=d, n_t=n_t, n_s=n_s, sigma_eps=sigma,
        lambda_t=list(lts), lambda_s=list(lss), trials=trials, base_seed=seed,
    )
    return run_experiment(cfg, threads=threads)


def check_teacher_risk() -> tuple[bool, str]:
    recs = _contour(500, 2000, 2000, 1.0, [0.05, 0.25, 1.0], [1.0], 20, seed=4)
    errs = [abs(r.loss_teacher_emp_mean - r.loss_teacher_theory) / r.loss_teacher_theory for r in recs]
    return all(e < 0.03 for e in errs), "relative errors " + ", ".join(f"{e:.2e}" for e in errs)


def _gap_agreement(recs) -> tuple[int, float]:
    ok = sum(_rel_or_abs(r.gap_emp_mean, r.gap_theory, 0.03, 0.005) for r in recs)
    worst = max(abs(r.gap_emp_mean - r.gap_theory) for r in recs)
    return ok, worst


def check_ridge_gap() -> tuple[bool, str]:
    left_grid = log_grid(0.01, 1.0, 5)
    left = _contour(500, 2000, 2000, 1.0, left_grid, left_grid, CONTOUR_TRIALS_LEFT, seed=5)
    right_grid = log_grid(0.01, 1.0, 3)
    right = _contour(500, 2000, 416, 2.0, right_grid, right_grid, CONTOUR_TRIALS_RIGHT, seed=6)
    ok_l, worst_l = _gap_agreement(left)
    ok_r, worst_r = _gap_agreement(right)
    detail = f"left {ok_l}/25 (max abs dev {worst_l:.4f}), right {ok_r}/9 (max abs dev {worst_r:.4f})"
    return ok_l >= 24 and ok_r == 9, detail


# ---------------------------------------------------------------- 6-7


def check_phase_structure() -> tuple[bool, str]:
    gaps = theory.gap_over_lambda_s(0.5, np.geomspace(1e-3, 1e3, 100), 0.25, 0.25, 1.0)
    ok_a = float(gaps.min()) >= -1e-10

    phase = theory.classify_phase(0.05, 0.25, 0.25, 1.0)
    lam = phase.lambda_bar
    below, above = theory.gap_over_lambda_s(0.05, np.array([0.5 * lam, 1.5 * lam]), 0.25, 0.25, 1.0)
    ok_b = below < 0 < above

    rng = np.random.default_rng(12019)
    grid = np.geomspace(theory.SCAN_LO, theory.SCAN_HI, theory.SCAN_POINTS)
    agree = 0
    for _ in range(20):
        lt = float(10 ** rng.uniform(-3, 0.5))
        sigma = float(rng.uniform(0.3, 3.0))
        verdict = theory.classify_phase(lt, 0.25, 1.2019, sigma).improves
        scan = bool((theory.gap_over_lambda_s(lt, grid, 0.25, 1.2019, sigma) < 0).any())
        agree += verdict == scan
    detail = f"(a) min gap {gaps.min():.2e}; (b) gap at 0.5/1.5 lambda_bar = {below:.3e}/{above:.3e}; (c) {agree}/20 agree"
    return ok_a and ok_b and agree == 20, detail


def _lambda_t_for(c: float, gamma_t: float, sigma: float) -> float:
    return optimize.brentq(
        lambda lt: theory.h2(lt, gamma_t, sigma) - c, 1e-14, sigma**2 * gamma_t, xtol=1e-15, rtol=1e-15
    )


def check_roots() -> tuple[bool, str]:
    rng = np.random.default_rng(7)
    gamma_t, sigma = 0.25, 2.0  # h2 spans (-4/3, 0) here, covering every admissible level
    worst_round, worst_match, failures = 0.0, 0.0, 0
    for i in range(50):
        if i % 2:
            g = float(rng.uniform(0.05, 0.95))
            c = float(rng.uniform(-0.95, -0.02))
        else:
            g = float(rng.uniform(1.05, 5.0))
            top = theory.tangency_level(g)
            c = float(rng.uniform(-0.95, top - 0.05 * (top + 1.0)))
        roots = theory.lambda_s_roots(c, g)
        for r in roots:
            worst_round = max(worst_round, abs(theory.h1(r, g) - c))
        lt = _lambda_t_for(c, gamma_t, sigma)
        bis = theory.crossing_roots(lt, gamma_t, g, sigma)
        if len(bis) != len(roots):
            failures += 1
            continue
        for a, b in zip(roots, bis):
            worst_match = max(worst_match, abs(a - b) / abs(b))
    ok = worst_round < 1e-8 and worst_match < 1e-6 and failures == 0
    return ok, f"round-trip {worst_round:.1e}, vs bisection {worst_match:.1e}, count mismatches {failures}"


# ---------------------------------------------------------------- 8


def check_weighted_sweep() -> tuple[bool, str]:
    zetas = [0.0, 0.68, 0.89, 0.98]
    cfg = ExperimentConfig(
        "ZetaSweep", "acceptance", d=500, n_t=2000, n_s=2000, sigma_eps=1.0, lambda_t=[0.25],
        lambda_s=log_grid(0.1, 10.0, 10), zeta=zetas, trials=20, base_seed=8,
    )
    recs = run_experiment(cfg)
    close = sum(_rel_or_abs(r.loss_student_emp_mean, r.loss_student_theory, 0.03, 0.01) for r in recs)
    dg_ok = all(
        theory.delta_gamma(theory.LinearProblemParams(r.gamma_t, r.gamma_s, 1.0, r.lambda_t, r.lambda_s, r.zeta)) >= 0
        for r in recs
    )

    def dips(z):
        rs = [r for r in recs if r.zeta == z]
        th = any(r.loss_student_theory < r.loss_teacher_theory for r in rs)
        emp = any(r.loss_student_emp_mean < r.loss_teacher_emp_mean for r in rs)
        return th, emp

    hi, lo = dips(0.98), dips(0.0)
    ok = close == len(recs) and dg_ok and all(hi) and not any(lo)
    detail = f"{close}/{len(recs)} within tolerance; Delta_Gamma>=0: {dg_ok}; dips zeta=0.98 {hi}, zeta=0 {lo}"
    return ok, detail


# ---------------------------------------------------------------- 9


def _interior_maxima(values: np.ndarray) -> list[int]:
    return [i for i in range(1, len(values) - 1) if values[i] > values[i - 1] and values[i] > values[i + 1]]


def check_double_descent() -> tuple[bool, str]:
    grid = np.geomspace(0.1, 10.0, 201)

    def curve(rule):
        return np.array([v for _, v in theory.student_risk_curve(grid, rule, 0.01, 0.1, 1.0)])

    ridgeless = curve(theory.LambdaTRule("ridgeless", eps=1e-6))
    peak = float(grid[int(np.argmax(ridgeless))])
    optimal = curve(theory.LambdaTRule("optimal"))
    scaled = curve(theory.LambdaTRule("scaled-optimal", kappa=0.15))
    n_opt, n_scaled = len(_interior_maxima(optimal)), len(_interior_maxima(scaled))
    ok = 0.8 <= peak <= 1.25 and n_opt == 0 and n_scaled >= 1
    return ok, f"ridgeless peak at gamma_t={peak:.3f}; interior maxima optimal={n_opt}, kappa=0.15={n_scaled}"


# ---------------------------------------------------------------- 10


def _feature_means(d: int, seeds: int, base: int = 10) -> dict:
    reps = [feature_lab.run_feature_transfer(d, d, d, 8 * d, 8 * d, 1.0, 1.0, 2.0, seed=base + s) for s in range(seeds)]
    return {
        "teacher_easy": float(np.mean([t.easy_gain for t, _ in reps])),
        "teacher_hard": float(np.mean([t.hard_gain for t, _ in reps])),
        "student_retain": float(np.mean([s.align_h_after / s.align_h_before for _, s in reps])),
        "student_easy": float(np.mean([s.easy_gain for _, s in reps])),
    }


def check_feature_transfer() -> tuple[bool, str]:
    big = _feature_means(512, 10)
    small = _feature_means(128, 10)
    parts = {
        "teacher easy gain": (big["teacher_easy"], big["teacher_easy"] > FEATURE_TEACHER_EASY_MIN),
        "teacher hard gain": (big["teacher_hard"], big["teacher_hard"] < FEATURE_TEACHER_HARD_MAX),
        "student hard retention": (big["student_retain"], big["student_retain"] >= FEATURE_STUDENT_RETAIN_MIN),
        "student easy gain": (big["student_easy"], big["student_easy"] > FEATURE_STUDENT_EASY_MIN),
        "hard gain d=512 < d=128": (small["teacher_hard"], big["teacher_hard"] < small["teacher_hard"]),
    }
    detail = "; ".join(f"{k} {v:.4g} {'ok' if good else 'FAILED'}" for k, (v, good) in parts.items())
    return all(good for _, good in parts.values()), detail


# ---------------------------------------------------------------- 11


def check_determinism() -> tuple[bool, str]:
    from .cli import main

    with tempfile.TemporaryDirectory() as tmp:
        paths = [os.path.join(tmp, f"run{i}.csv") for i in range(2)]
        codes = []
        for p in paths:
            codes.append(main(["grid", "--preset", "fig1_left", "--seed", "7", "--out", p, "--quiet"]))
        blobs = [open(p, "rb").read() if os.path.exists(p) else b"" for p in paths]
    rows = blobs[0].count(b"\n") - 1
    ok = codes == [0, 0] and blobs[0] == blobs[1] and rows == 900
    return ok, f"exit codes {codes}, {rows} data rows, identical={blobs[0] == blobs[1]}"


# ---------------------------------------------------------------- registry

CHECKS: list[tuple[int, str, Callable[[], tuple[bool, str]], float, bool]] = [
    # number, name, function, time budget (s), part of the quick level
    (1, "MP self-consistency", check_self_consistency, 1.0, True),
    (2, "derivative fidelity", check_derivative, 1.0, True),
    (3, "spectral oracle", check_spectral_oracle, 60.0, False),
    (4, "teacher risk reproduction", check_teacher_risk, 120.0, False),
    (5, "ridge gap reproduction", check_ridge_gap, 600.0, False),
    (6, "phase structure", check_phase_structure, 60.0, True),
    (7, "closed-form roots", check_roots, 60.0, True),
    (8, "weighted-ridge sweep", check_weighted_sweep, 900.0, False),
    (9, "double descent", check_double_descent, 5.0, True),
    (10, "feature transfer", check_feature_transfer, 600.0, False),
    (11, "determinism", check_determinism, 60.0, False),
]


def run_check(number: int) -> CheckResult:
    for num, name, fn, budget, _ in CHECKS:
        if num == number:
            start = time.perf_counter()
            try:
                ok, detail = fn()
            except Exception as exc:  # a crash is a failure, reported with its message
                ok, detail = False, f"raised {type(exc).__name__}: {exc}"
            elapsed = time.perf_counter() - start
            if elapsed > budget:
                ok = False
                detail += f"; exceeded time budget {budget:g}s"
            return CheckResult(num, name, bool(ok), detail, elapsed, budget)
    raise KeyError(number)


def run_level(level: str = "quick", report: Callable[[CheckResult], None] | None = None) -> list[CheckResult]:
    if level not in ("quick", "full"):
        raise ValueError("level must be 'quick' or 'full'")
    results = []
    for num, _, _, _, quick in CHECKS:
        if level == "full" or quick:
            res = run_check(num)
            results.append(res)
            if report:
                report(res)
    return results


