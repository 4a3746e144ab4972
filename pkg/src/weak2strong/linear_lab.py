"""Finite-dimensional teacher -> student ridge pipelines.

Risks are computed in coefficient space, ``L = sigma^2 + ||beta_hat - beta_star||^2``,
so no test set is ever sampled.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .seeding import derive_seed, rng_for

RESIDUAL_TOL = 1e-8


class SingularSystemError(np.linalg.LinAlgError):
    pass


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=float)
        if self.features.ndim != 2 or self.labels.shape != (self.features.shape[0],):
            raise ValueError(f"inconsistent shapes {self.features.shape} / {self.labels.shape}")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]


@dataclass
class LinearModel:
    coefficients: np.ndarray

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float).reshape(-1)

    @property
    def d(self) -> int:
        return self.coefficients.shape[0]


@dataclass
class SpikedGamma:
    """Gamma = I + scale * h h^T with unit spike ``h``; ``scale`` defaults to d."""

    spike_direction: np.ndarray
    achieved_zeta: float
    scale: float | None = None

    @property
    def spike_scale(self) -> float:
        return float(self.spike_direction.shape[0]) if self.scale is None else float(self.scale)


@dataclass(frozen=True)
class LinearTrialResult:
    loss_teacher_emp: float
    loss_student_emp: float
    seed: int
    dims: tuple[int, int, int]

    @property
    def gap(self) -> float:
        return self.loss_student_emp - self.loss_teacher_emp


def sample_target(d: int, seed: int) -> LinearModel:
    if d < 1:
        raise ValueError("d must be >= 1")
    return LinearModel(rng_for(seed, "target").standard_normal(d) / math.sqrt(d))


def sample_dataset(beta_star: LinearModel, n: int, sigma_eps: float, seed: int) -> Dataset:
    if n < 1:
        raise ValueError("n must be >= 1")
    x = rng_for(seed, "features").standard_normal((n, beta_star.d))
    y = x @ beta_star.coefficients
    if sigma_eps:
        y = y + sigma_eps * rng_for(seed, "noise").standard_normal(n)
    return Dataset(x, y)


def _spd_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    try:
        factor = linalg.cho_factor(a, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(f"system is not positive definite: {exc}") from None
    x = linalg.cho_solve(factor, b, check_finite=False)
    res = np.linalg.norm(a @ x - b)
    if res > RESIDUAL_TOL * max(np.linalg.norm(b), np.finfo(float).tiny):
        raise SingularSystemError(f"normal-equation residual {res:.3e} exceeds tolerance")
    return x


def fit_ridge(data: Dataset, lam: float) -> LinearModel:
    """argmin (1/n)||y - X b||^2 + lam ||b||^2."""
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    if lam == 0 and data.n < data.d:
        raise SingularSystemError("unregularized fit needs n >= d")
    x = data.features
    cov = x.T @ x / data.n
    rhs = x.T @ data.labels / data.n
    cov[np.diag_indices_from(cov)] += lam
    return LinearModel(_spd_solve(cov, rhs))


def label_with(model: LinearModel, features: np.ndarray) -> Dataset:
    """Noiseless synthetic labels from a linear model."""
    features = np.asarray(features, dtype=float)
    if features.ndim != 2 or features.shape[1] != model.d:
        raise ValueError(f"feature width {features.shape} does not match model dimension {model.d}")
    return Dataset(features, features @ model.coefficients)


def make_spiked_gamma(beta_star: LinearModel, zeta: float, seed: int) -> SpikedGamma:
    """Unit spike with correlation exactly ``zeta`` to beta_star."""
    if not 0.0 <= zeta <= 1.0:
        raise ValueError("zeta must lie in [0, 1]")
    norm = np.linalg.norm(beta_star.coefficients)
    if norm == 0:
        raise ValueError("beta_star must be nonzero")
    u = beta_star.coefficients / norm
    d = u.shape[0]
    if d == 1:
        if zeta != 1.0:
            raise ValueError("in one dimension the only unit spike has zeta = 1")
        return SpikedGamma(u.copy(), 1.0)
    v = rng_for(seed, "spike").standard_normal(d)
    for _ in range(2):  # re-orthogonalize once for accuracy
        v -= (v @ u) * u
    v /= np.linalg.norm(v)
    h = zeta * u + math.sqrt(max(0.0, 1.0 - zeta * zeta)) * v
    h /= np.linalg.norm(h)
    return SpikedGamma(h, float(abs(h @ u)))


def gamma_inverse(gamma_spec: SpikedGamma, power: int = 1) -> np.ndarray:
    """Gamma^-power for Gamma = I + k h h^T, via the rank-one identity."""
    h = gamma_spec.spike_direction
    k = gamma_spec.spike_scale
    coef = 1.0 - (1.0 + k) ** (-power)
    out = -coef * np.outer(h, h)
    out[np.diag_indices_from(out)] += 1.0
    return out


def fit_weighted_ridge(data: Dataset, lam: float, gamma_spec: SpikedGamma, variant: str = "resolvent") -> LinearModel:
    """Weighted-ridge student.

    ``variant="resolvent"`` solves (S + lam Gamma^-1) b = X^T y / n, the estimator
    the risk formula is stated for. ``variant="penalty"`` is the literal
    stationarity condition of lam ||Gamma^-1 b||^2, i.e. (S + lam Gamma^-2).
    """
    if not lam > 0:
        raise ValueError("weighted ridge needs lambda > 0")
    if variant not in ("resolvent", "penalty"):
        raise ValueError(f"unknown variant {variant!r}")
    if gamma_spec.spike_direction.shape[0] != data.d:
        raise ValueError("spike dimension mismatch")
    x = data.features
    a = x.T @ x / data.n + lam * gamma_inverse(gamma_spec, 1 if variant == "resolvent" else 2)
    return LinearModel(_spd_solve(a, x.T @ data.labels / data.n))


def test_risk(model: LinearModel, beta_star: LinearModel, sigma_eps: float) -> float:
    if model.d != beta_star.d:
        raise ValueError("dimension mismatch")
    diff = model.coefficients - beta_star.coefficients
    return float(sigma_eps**2 + diff @ diff)


test_risk.__test__ = False  # not a pytest test


def run_w2s_trial(
    d: int,
    n_t: int,
    n_s: int,
    lambda_t: float,
    lambda_s: float,
    sigma_eps: float,
    zeta: float | None = None,
    seed: int = 0,
    variant: str = "resolvent",
) -> LinearTrialResult:
    """One teacher -> synthetic labels -> student trial, deterministic in ``seed``."""
    beta_star = sample_target(d, seed)
    teacher_data = sample_dataset(beta_star, n_t, sigma_eps, _sub(seed, "teacher"))
    teacher = fit_ridge(teacher_data, lambda_t)
    x_student = rng_for(_sub(seed, "student"), "features").standard_normal((n_s, d))
    student_data = label_with(teacher, x_student)
    if zeta is None:
        student = fit_ridge(student_data, lambda_s)
    else:
        spike = make_spiked_gamma(beta_star, zeta, seed)
        student = fit_weighted_ridge(student_data, lambda_s, spike, variant=variant)
    return LinearTrialResult(
        loss_teacher_emp=test_risk(teacher, beta_star, sigma_eps),
        loss_student_emp=test_risk(student, beta_star, sigma_eps),
        seed=int(seed),
        dims=(d, n_t, n_s),
    )


def _sub(seed: int, label: str) -> int:
    return derive_seed(seed, label)


class TrialSpectra:
    """Eigendecomposed teacher and student covariances of one trial.

    Evaluates whole (lambda_t, lambda_s) grids from one pair of
    eigendecompositions; draws exactly the same randomness as
    :func:`run_w2s_trial` with the same seed.
    """

    def __init__(self, d: int, n_t: int, n_s: int, sigma_eps: float, seed: int):
        self.d, self.n_t, self.n_s, self.sigma_eps, self.seed = d, n_t, n_s, sigma_eps, int(seed)
        self.beta_star = sample_target(d, seed)
        data = sample_dataset(self.beta_star, n_t, sigma_eps, _sub(seed, "teacher"))
        x = data.features
        self.t_eval, self.t_vec = np.linalg.eigh(x.T @ x / n_t)
        self.t_eval = np.clip(self.t_eval, 0.0, None)
        self.t_rhs = self.t_vec.T @ (x.T @ data.labels / n_t)
        xs = rng_for(_sub(seed, "student"), "features").standard_normal((n_s, d))
        self.s_eval, self.s_vec = np.linalg.eigh(xs.T @ xs / n_s)
        self.s_eval = np.clip(self.s_eval, 0.0, None)
        self.beta_s_basis = self.s_vec.T @ self.beta_star.coefficients
        self._spikes: dict[float, np.ndarray] = {}

    def teacher(self, lambda_t: float) -> np.ndarray:
        if lambda_t == 0 and self.n_t < self.d:
            raise SingularSystemError("unregularized teacher needs n_t >= d")
        return self.t_vec @ (self.t_rhs / (self.t_eval + lambda_t))

    def teacher_loss(self, beta_t: np.ndarray) -> float:
        diff = beta_t - self.beta_star.coefficients
        return float(self.sigma_eps**2 + diff @ diff)

    def _spike_basis(self, zeta: float) -> np.ndarray:
        if zeta not in self._spikes:
            h = make_spiked_gamma(self.beta_star, zeta, self.seed).spike_direction
            self._spikes[zeta] = self.s_vec.T @ h
        return self._spikes[zeta]

    def student_losses(
        self, beta_t: np.ndarray, lambda_s_grid, zeta: float | None = None, variant: str = "resolvent"
    ) -> np.ndarray:
        """Student losses for every lambda_s, given a teacher coefficient vector."""
        if variant not in ("resolvent", "penalty"):
            raise ValueError(f"unknown variant {variant!r}")
        e = self.s_eval
        rhs = e * (self.s_vec.T @ beta_t)  # S beta_t in the eigenbasis
        out = np.empty(len(lambda_s_grid))
        if zeta is not None:
            h = self._spike_basis(zeta)
            power = 1 if variant == "resolvent" else 2
            shrink = 1.0 - (1.0 + float(self.d)) ** (-power)
        for j, ls in enumerate(lambda_s_grid):
            if ls == 0 and zeta is None:
                if self.n_s < self.d:
                    raise SingularSystemError("unregularized student needs n_s >= d")
            res_inv = 1.0 / (e + ls)
            b = res_inv * rhs
            if zeta is not None:
                # (S + ls*Gamma^-power)^-1 = (S + ls I - ls*shrink h h^T)^-1 via Sherman-Morrison
                rh = res_inv * h
                b = b + (ls * shrink) * rh * (h @ b) / (1.0 - ls * shrink * (h @ rh))
            diff = b - self.beta_s_basis
            out[j] = self.sigma_eps**2 + diff @ diff
        return out
