"""Marchenko-Pastur Stieltjes transform m(lambda; gamma) = int dmu(s) / (s + lambda).

``m`` solves the quadratic ``gamma*lambda*m**2 + (1 - gamma + lambda)*m - 1 = 0``;
the positive root is evaluated in whichever algebraic form avoids cancellation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .seeding import rng_for


class DomainError(ValueError):
    """Raised when an input lies outside the domain of a formula."""


@dataclass(frozen=True)
class StieltjesPair:
    m1: float
    m2: float


def _check_gamma(gamma: float) -> None:
    if not (math.isfinite(gamma) and gamma > 0):
        raise DomainError(f"aspect ratio gamma must be positive and finite, got {gamma!r}")


def _radical(lam: float, gamma: float) -> float:
    # (1 + gamma + lam)^2 - 4 gamma, expanded so it stays exact near gamma = 1, lam = 0
    return math.sqrt((1.0 - gamma) ** 2 + 2.0 * lam * (1.0 + gamma) + lam * lam)


def mp_m(lam: float, gamma: float) -> float:
    """Stieltjes transform of MP(gamma) evaluated at -lam."""
    _check_gamma(gamma)
    if not lam >= 0 or math.isnan(lam):
        raise DomainError(f"lambda must be >= 0, got {lam!r}")
    if lam == 0:
        if gamma >= 1:
            raise DomainError("m(0; gamma) diverges for gamma >= 1")
        return 1.0 / (1.0 - gamma)
    if math.isinf(lam):
        return 0.0
    r = _radical(lam, gamma)
    b = 1.0 - gamma + lam
    if b >= 0:
        return 2.0 / (b + r)
    # b < 0: the textbook form has no cancellation here
    return (r - b) / (2.0 * gamma * lam)


def _m2_from(m1: float, lam: float, gamma: float) -> float:
    # implicit derivative of the quadratic; its denominator 2*gamma*lam*m + 1 - gamma + lam equals the radical
    return (gamma * m1 * m1 + m1) / _radical(lam, gamma)


def mp_m_derivative(lam: float, gamma: float) -> float:
    """Return m2 = -dm/dlambda > 0."""
    _check_gamma(gamma)
    if not lam > 0:
        raise DomainError(f"derivative requires lambda > 0, got {lam!r}")
    return _m2_from(mp_m(lam, gamma), lam, gamma)


def stieltjes_pair(lam: float, gamma: float) -> StieltjesPair:
    return StieltjesPair(mp_m(lam, gamma), mp_m_derivative(lam, gamma))


def ridgeless_pair(lam: float, gamma: float) -> StieltjesPair:
    """Like :func:`stieltjes_pair` but also accepts lam = 0 when gamma < 1.

    At the origin m2 = 1/(1 - gamma)^3, the second inverse moment of MP(gamma).
    """
    if lam == 0:
        _check_gamma(gamma)
        if gamma >= 1:
            raise DomainError(
                "ridgeless limit with gamma >= 1 is not implemented; use a small positive lambda"
            )
        return StieltjesPair(1.0 / (1.0 - gamma), 1.0 / (1.0 - gamma) ** 3)
    return stieltjes_pair(lam, gamma)


@lru_cache(maxsize=16)
def wishart_spectrum(d: int, gamma: float, seed: int) -> np.ndarray:
    """Eigenvalues of X^T X / n for an n x d standard Gaussian X, n = round(d / gamma)."""
    if d < 2:
        raise DomainError("d must be >= 2")
    _check_gamma(gamma)
    n = int(round(d / gamma))
    if n < 2:
        raise DomainError(f"n = round(d/gamma) = {n} must be >= 2")
    rng = rng_for(seed, "wishart")
    gram = np.zeros((d, d))
    chunk = max(1, 4_000_000 // d)
    done = 0
    while done < n:
        rows = min(chunk, n - done)
        x = rng.standard_normal((rows, d))
        gram += x.T @ x
        done += rows
    spec = np.linalg.eigvalsh(gram / n)
    spec = np.clip(spec, 0.0, None)
    spec.setflags(write=False)
    return spec


def empirical_stieltjes(d: int, gamma: float, lam: float, seed: int) -> float:
    """(1/d) * sum_i 1/(s_i + lam) over a sampled Wishart spectrum."""
    if not lam > 0:
        raise DomainError("lambda must be > 0")
    spec = wishart_spectrum(int(d), float(gamma), int(seed))
    return float(np.mean(1.0 / (spec + lam)))


def mp_m_array(lam, gamma: float) -> np.ndarray:
    """Vectorized m over an array of strictly positive lambdas."""
    _check_gamma(gamma)
    lam = np.asarray(lam, dtype=float)
    if np.any(~(lam > 0)):
        raise DomainError("mp_m_array requires lambda > 0")
    r = np.sqrt((1.0 - gamma) ** 2 + 2.0 * lam * (1.0 + gamma) + lam * lam)
    b = 1.0 - gamma + lam
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(b >= 0, 2.0 / (b + r), (r - b) / (2.0 * gamma * lam))
    return out


def mp_m_derivative_array(lam, gamma: float) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    m1 = mp_m_array(lam, gamma)
    r = np.sqrt((1.0 - gamma) ** 2 + 2.0 * lam * (1.0 + gamma) + lam * lam)
    return (gamma * m1 * m1 + m1) / r
