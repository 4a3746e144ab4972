"""Limiting teacher/student risks and the weak-to-strong phase structure.

All quantities are proportional-limit predictions for isotropic Gaussian
covariates, ``beta_star ~ N(0, I/d)`` and noise level ``sigma_eps``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .mp_stieltjes import (
    DomainError,
    StieltjesPair,
    mp_m_array,
    mp_m_derivative_array,
    ridgeless_pair,
)

ROOT_TOL = 1e-8


@dataclass(frozen=True)
class LinearProblemParams:
    gamma_t: float
    gamma_s: float
    sigma_eps: float
    lambda_t: float
    lambda_s: float
    zeta: float = 0.0

    def __post_init__(self):
        for name in ("gamma_t", "gamma_s", "sigma_eps", "lambda_t", "lambda_s", "zeta"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise DomainError(f"{name} must be finite, got {v!r}")
        if self.gamma_t <= 0 or self.gamma_s <= 0:
            raise DomainError("aspect ratios must be positive")
        if self.sigma_eps < 0:
            raise DomainError("sigma_eps must be >= 0")
        if self.lambda_t < 0 or self.lambda_s < 0:
            raise DomainError("negative regularization is not supported")
        if not 0.0 <= self.zeta <= 1.0:
            raise DomainError("zeta must lie in [0, 1]")


@dataclass(frozen=True)
class TheoryPrediction:
    loss_teacher: float
    gap: float
    delta_gamma: float
    loss_student: float


class Regime(str, enum.Enum):
    TEACHER_OVER_REGULARIZED = "TeacherOverRegularized"
    UNDER_PARAM_IMPROVES = "UnderParamImproves"
    OVER_PARAM_IMPROVES = "OverParamImproves"
    OVER_PARAM_NEVER_IMPROVES = "OverParamNeverImproves"


@dataclass(frozen=True)
class PhaseClassification:
    regime: Regime
    c_value: float
    lambda_bar: float | None = None
    lambda_minus: float | None = None
    lambda_plus: float | None = None

    @property
    def improves(self) -> bool:
        return self.regime in (Regime.UNDER_PARAM_IMPROVES, Regime.OVER_PARAM_IMPROVES)

    def to_dict(self) -> dict:
        return {
            "regime": self.regime.value,
            "c_value": self.c_value,
            "lambda_bar": self.lambda_bar,
            "lambda_minus": self.lambda_minus,
            "lambda_plus": self.lambda_plus,
        }


def _pair(lam: float, gamma: float, who: str) -> StieltjesPair:
    if lam < 0 or math.isnan(lam):
        raise DomainError(f"lambda_{who} must be >= 0, got {lam!r}")
    try:
        return ridgeless_pair(lam, gamma)
    except DomainError as exc:
        raise DomainError(f"{who} leg: {exc}") from None


def teacher_risk(lambda_t: float, gamma_t: float, sigma_eps: float) -> float:
    """Limiting test error of the ridge teacher."""
    s2 = sigma_eps**2
    if math.isinf(lambda_t):
        return s2 + 1.0
    t = _pair(lambda_t, gamma_t, "t")
    return s2 + (lambda_t - s2 * gamma_t) * lambda_t * t.m2 + s2 * gamma_t * t.m1


def _gap_terms(p: LinearProblemParams) -> tuple[StieltjesPair, StieltjesPair]:
    return _pair(p.lambda_t, p.gamma_t, "t"), _pair(p.lambda_s, p.gamma_s, "s")


def risk_gap_ridge(params: LinearProblemParams) -> float:
    """Limit of L_s - L_t when both models are plain ridge (zeta ignored)."""
    t, s = _gap_terms(params)
    lt, ls = params.lambda_t, params.lambda_s
    s2g = params.sigma_eps**2 * params.gamma_t
    return (s2g - lt) * (t.m1 - lt * t.m2) * (ls * ls * s.m2 - 2.0 * ls * s.m1) + ls * ls * s.m2 * (
        1.0 - lt * t.m1
    )


def delta_gamma(params: LinearProblemParams) -> float:
    """Nonnegative risk reduction (per unit zeta^2) from the spiked weighting."""
    if params.lambda_s == 0 and params.gamma_s < 1:
        return 0.0
    t, s = _gap_terms(params)
    lt, ls = params.lambda_t, params.lambda_s
    u = -1.0 + lt * t.m1
    return ls * u * (-2.0 * lt * s.m1 * t.m1 + ls * s.m2 * u)


def risk_gap_weighted(params: LinearProblemParams) -> float:
    gap = risk_gap_ridge(params)
    if params.zeta == 0:
        return gap
    return gap - params.zeta**2 * delta_gamma(params)


def predict(params: LinearProblemParams) -> TheoryPrediction:
    lt = teacher_risk(params.lambda_t, params.gamma_t, params.sigma_eps)
    dg = delta_gamma(params) if params.zeta > 0 else 0.0
    gap = risk_gap_ridge(params) - params.zeta**2 * dg
    return TheoryPrediction(loss_teacher=lt, gap=gap, delta_gamma=dg, loss_student=lt + gap)


def optimal_teacher_lambda(sigma_eps: float, gamma_t: float) -> float:
    return sigma_eps**2 * gamma_t


# --- vectorized gap over a lambda_s grid (used by scans and crossing curves) ---


def gap_over_lambda_s(
    lambda_t: float,
    lambda_s,
    gamma_t: float,
    gamma_s: float,
    sigma_eps: float,
    zeta: float = 0.0,
) -> np.ndarray:
    """Evaluate ``Delta - zeta^2 Delta_Gamma`` for many lambda_s > 0 at once."""
    t = _pair(lambda_t, gamma_t, "t")
    ls = np.asarray(lambda_s, dtype=float)
    m1 = mp_m_array(ls, gamma_s)
    m2 = mp_m_derivative_array(ls, gamma_s)
    lt = lambda_t
    s2g = sigma_eps**2 * gamma_t
    gap = (s2g - lt) * (t.m1 - lt * t.m2) * (ls * ls * m2 - 2.0 * ls * m1) + ls * ls * m2 * (1.0 - lt * t.m1)
    if zeta:
        u = -1.0 + lt * t.m1
        gap = gap - zeta**2 * ls * u * (-2.0 * lt * m1 * t.m1 + ls * m2 * u)
    return gap


# --- the balance functions H1 (student side) and H2 (teacher side) ---


def _radical(lam: float, gamma: float) -> float:
    return math.sqrt((1.0 - gamma) ** 2 + 2.0 * lam * (1.0 + gamma) + lam * lam)


def h1(lambda_s: float, gamma_s: float) -> float:
    """Student-side balance function lam*m2 / (lam*m2 - 2*m1), in closed radical form.

    Takes values in [-1, 0]. Delta < 0 exactly where h1(lambda_s) > h2(teacher).
    """
    if lambda_s < 0 or gamma_s <= 0:
        raise DomainError("h1 requires lambda_s >= 0 and gamma_s > 0")
    lam, g = lambda_s, gamma_s
    if lam == 0:
        if g >= 1:
            raise DomainError("h1 is indeterminate (0/0) at lambda_s = 0 for gamma_s >= 1")
        return 0.0
    r = _radical(lam, g)
    a = (1.0 - g) ** 2 + lam * (1.0 + 2.0 * g) + lam * lam
    b = 1.0 - g - lam
    if b >= 0:
        return -lam / (a + b * r)
    # rationalized: (a + b r)(a - b r) = lam * q
    q = 2.0 * (g - 1.0) ** 2 + 4.0 * g * lam + 2.0 * lam * lam + 5.0 * lam
    return -(a - b * r) / q


def h1_ratio(lambda_s: float, gamma_s: float) -> float:
    """h1 evaluated straight from the Stieltjes pair (independent route)."""
    s = _pair(lambda_s, gamma_s, "s")
    return lambda_s * s.m2 / (lambda_s * s.m2 - 2.0 * s.m1)


def h2(lambda_t: float, gamma_t: float, sigma_eps: float) -> float:
    """Teacher-side balance level c = (lambda_t - sigma^2 gamma_t) / sqrt((1+gamma_t+lambda_t)^2 - 4 gamma_t).

    Nonpositive exactly when the teacher is under-regularized.
    """
    if lambda_t < 0:
        raise DomainError("h2 requires lambda_t >= 0")
    r = _radical(lambda_t, gamma_t)
    if r == 0:
        raise DomainError("h2 is undefined at lambda_t = 0, gamma_t = 1")
    return (lambda_t - sigma_eps**2 * gamma_t) / r


def h2_ratio(lambda_t: float, gamma_t: float, sigma_eps: float) -> float:
    t = _pair(lambda_t, gamma_t, "t")
    return (sigma_eps**2 * gamma_t - lambda_t) * (t.m1 - lambda_t * t.m2) / (lambda_t * t.m1 - 1.0)


def radicand_outer_root(gamma_s: float) -> float:
    """1/(1 - 4 gamma_s - 4 sqrt(gamma_s^2 - gamma_s)). Diagnostic only.

    The other root of the radicand in c. It lies above max h1, so it is not
    the level at which the two crossings of h1 = c appear; see :func:`tangency_level`.
    """
    if gamma_s <= 1:
        raise DomainError("threshold defined for gamma_s > 1")
    return 1.0 / (1.0 - 4.0 * gamma_s - 4.0 * math.sqrt(gamma_s * gamma_s - gamma_s))


def unscaled_tangency_bound(gamma_s: float) -> float:
    """1/(1 - 4 gamma_s + sqrt(gamma_s (gamma_s - 1))): the tangency level with the
    factor 4 on the square root dropped. Diagnostic only."""
    if gamma_s <= 1:
        raise DomainError("bound defined for gamma_s > 1")
    return 1.0 / (1.0 - 4.0 * gamma_s + math.sqrt(gamma_s * (gamma_s - 1.0)))


def tangency_level(gamma_s: float) -> float:
    """Maximum of h1 over lambda_s > 0 for gamma_s > 1.

    Equals 1/(1 - 4 gamma_s + 4 sqrt(gamma_s^2 - gamma_s)), the smaller root of
    the radicand (c - 1)^2 + 8 c (1 + c) gamma_s; h1 = c has two solutions iff
    -1 < c < tangency_level(gamma_s).
    """
    if gamma_s <= 1:
        raise DomainError("tangency level defined for gamma_s > 1")
    return 1.0 / (1.0 - 4.0 * gamma_s + 4.0 * math.sqrt(gamma_s * gamma_s - gamma_s))


def root_radicand(c: float, gamma_s: float) -> float:
    return (c - 1.0) ** 2 + 8.0 * c * (1.0 + c) * gamma_s


def lambda_s_roots(c: float, gamma_s: float) -> tuple[float, ...]:
    """Positive solutions of h1(lambda_s; gamma_s) = c, sorted ascending.

    Candidates come from the quadratic obtained by clearing the radical,
    ``-2c(1+c) L^2 - (1 + 2c + 5c^2 + 4c g + 4c^2 g) L - 2c(1+c)(g-1)^2 = 0``,
    and are kept only if they satisfy the original equation to ROOT_TOL.
    """
    if gamma_s <= 0:
        raise DomainError("gamma_s must be positive")
    if c > 0:
        raise DomainError(f"h1 is nonpositive; no solution for c = {c} > 0")
    if c == 0:
        raise DomainError("c = 0 corresponds to the lambda_s = 0 boundary")
    g = gamma_s
    a2 = -2.0 * c * (1.0 + c)
    a1 = -(1.0 + 2.0 * c + 5.0 * c * c + 4.0 * c * g + 4.0 * c * c * g)
    a0 = -2.0 * c * (1.0 + c) * (g - 1.0) ** 2
    if a2 == 0.0:
        # c = -1: the equation is linear
        candidates = [-a0 / a1] if a1 != 0 else []
    else:
        rad = root_radicand(c, g)
        if rad < 0:
            return ()
        sq = abs(1.0 + 3.0 * c) * math.sqrt(rad)
        qq = -0.5 * (a1 + math.copysign(sq, a1))
        candidates = []
        if qq != 0:
            candidates.append(qq / a2)
            candidates.append(a0 / qq)
        else:
            candidates.append(0.0)
    out = []
    for lam in candidates:
        if not (math.isfinite(lam) and lam > 0):
            continue
        if abs(h1(lam, g) - c) < ROOT_TOL:
            out.append(lam)
    out.sort()
    # a double root (radicand 0, or 1 + 3c = 0) can surface as two candidates an ulp apart
    merged: list[float] = []
    for lam in out:
        if merged and lam - merged[-1] <= 1e-9 * lam:
            continue
        merged.append(lam)
    return tuple(merged)


def classify_phase(lambda_t: float, gamma_t: float, gamma_s: float, sigma_eps: float) -> PhaseClassification:
    """Which weak-to-strong regime a teacher point falls in.

    Root existence is decided by :func:`lambda_s_roots` (validated roots),
    never by closed-form threshold constants.
    """
    if not lambda_t > 0:
        raise DomainError("classify_phase requires lambda_t > 0")
    c = h2(lambda_t, gamma_t, sigma_eps)
    if lambda_t >= sigma_eps**2 * gamma_t:
        return PhaseClassification(Regime.TEACHER_OVER_REGULARIZED, c)
    roots = lambda_s_roots(c, gamma_s)
    if gamma_s < 1:
        # h1 decreases from 0 to -1; with c <= -1 every lambda_s > 0 improves
        lam_bar = roots[0] if roots else math.inf
        return PhaseClassification(Regime.UNDER_PARAM_IMPROVES, c, lambda_bar=lam_bar)
    if len(roots) >= 2:
        return PhaseClassification(Regime.OVER_PARAM_IMPROVES, c, lambda_minus=roots[0], lambda_plus=roots[-1])
    if c <= -1.0:
        # h1 > -1 for every lambda_s > 0, so the gap is negative everywhere
        return PhaseClassification(Regime.OVER_PARAM_IMPROVES, c, lambda_minus=0.0, lambda_plus=math.inf)
    if len(roots) == 1:
        # gamma_s = 1 edge: h1 starts at -1/3, a single crossing
        lam = roots[0]
        if h1(lam * 2.0, gamma_s) > c:
            return PhaseClassification(Regime.OVER_PARAM_IMPROVES, c, lambda_minus=lam, lambda_plus=math.inf)
        return PhaseClassification(Regime.OVER_PARAM_IMPROVES, c, lambda_minus=0.0, lambda_plus=lam)
    return PhaseClassification(Regime.OVER_PARAM_NEVER_IMPROVES, c)


# --- crossing curves and double-descent sweeps ---

SCAN_LO, SCAN_HI, SCAN_POINTS = 1e-6, 1e3, 400


def _bisect_roots(fn, grid: np.ndarray, values: np.ndarray) -> list[float]:
    roots = []
    for i in range(len(grid) - 1):
        a, b = values[i], values[i + 1]
        if a == 0.0:
            roots.append(float(grid[i]))
        elif a * b < 0:
            roots.append(float(optimize.bisect(fn, grid[i], grid[i + 1], xtol=1e-13, rtol=1e-14, maxiter=500)))
    if values[-1] == 0.0:
        roots.append(float(grid[-1]))
    return roots


def crossing_roots(
    lambda_t: float,
    gamma_t: float,
    gamma_s: float,
    sigma_eps: float,
    zeta: float = 0.0,
    lo: float = SCAN_LO,
    hi: float = SCAN_HI,
    points: int = SCAN_POINTS,
) -> list[float]:
    """lambda_s values where the student/teacher risk gap changes sign."""
    grid = np.geomspace(lo, hi, points)
    vals = gap_over_lambda_s(lambda_t, grid, gamma_t, gamma_s, sigma_eps, zeta)

    def fn(x):
        return float(gap_over_lambda_s(lambda_t, np.array([x]), gamma_t, gamma_s, sigma_eps, zeta)[0])

    return _bisect_roots(fn, grid, vals)


def crossing_curve(lambda_t_grid, gamma_t: float, gamma_s: float, sigma_eps: float, zeta: float = 0.0):
    """For each lambda_t, the lambda_s roots of L_s = L_t (possibly none)."""
    lts = list(lambda_t_grid)
    if not lts:
        raise DomainError("lambda_t grid is empty")
    out = []
    for lt in lts:
        if not lt > 0:
            raise DomainError("crossing_curve requires lambda_t > 0")
        out.append((float(lt), crossing_roots(lt, gamma_t, gamma_s, sigma_eps, zeta)))
    return out


LAMBDA_T_RULES = ("ridgeless", "optimal", "scaled-optimal", "fixed")


@dataclass(frozen=True)
class LambdaTRule:
    """How the teacher's ridge parameter follows gamma_t along a sweep."""

    kind: str
    eps: float = 1e-6  # proxy for lambda_t -> 0
    kappa: float = 1.0
    value: float | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.kind not in LAMBDA_T_RULES:
            raise DomainError(f"unknown lambda_t rule {self.kind!r}; expected one of {LAMBDA_T_RULES}")
        if self.kind == "fixed" and (self.value is None or self.value < 0):
            raise DomainError("fixed rule needs a nonnegative value")

    def __call__(self, gamma_t: float, sigma_eps: float) -> float:
        if self.kind == "ridgeless":
            return self.eps
        if self.kind == "optimal":
            return optimal_teacher_lambda(sigma_eps, gamma_t)
        if self.kind == "scaled-optimal":
            return self.kappa * optimal_teacher_lambda(sigma_eps, gamma_t)
        return float(self.value)


def student_risk_curve(gamma_t_grid, lambda_t_rule: LambdaTRule, lambda_s: float, gamma_s: float, sigma_eps: float):
    """Limiting student loss along a gamma_t sweep: list of (gamma_t, L_s)."""
    out = []
    for gt in gamma_t_grid:
        lt = lambda_t_rule(gt, sigma_eps)
        p = LinearProblemParams(gamma_t=gt, gamma_s=gamma_s, sigma_eps=sigma_eps, lambda_t=lt, lambda_s=lambda_s)
        out.append((float(gt), teacher_risk(lt, gt, sigma_eps) + risk_gap_ridge(p)))
    return out
