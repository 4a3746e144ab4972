"""One-step feature learning with two-layer networks on a two-direction target.

The target depends on the input through an "easy" direction (information
exponent 1) and a "hard" one (exponent > 1). A teacher takes one gradient step
on real labels; a student whose first layer already carries a spike along the
hard direction takes one step on the teacher's outputs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from numpy.polynomial import hermite_e

from .linear_lab import Dataset
from .seeding import derive_seed, rng_for

QUAD_NODES = 120
K_MAX = 30
IE_TOL = 1e-8
CONVERGENCE_TOL = 1e-8
UNIT_TOL = 1e-9


class QuadratureError(ArithmeticError):
    pass


class InformationExponentNotFound(ValueError):
    pass


@lru_cache(maxsize=None)
def _gauss_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    # hermegauss integrates against exp(-z^2/2); rescale to the N(0,1) density
    z, w = hermite_e.hermegauss(order)
    return z, w / math.sqrt(2.0 * math.pi)


def gaussian_expectation(fn: Callable[[np.ndarray], np.ndarray], order: int = QUAD_NODES) -> float:
    z, w = _gauss_rule(order)
    return float(w @ fn(z))


@dataclass(frozen=True)
class LinkFunction:
    evaluator: Callable[[np.ndarray], np.ndarray]
    name: str
    derivative: Callable[[np.ndarray], np.ndarray] | None = field(default=None, compare=False)

    def __post_init__(self):
        with np.errstate(over="ignore", invalid="ignore"):
            second_moment = gaussian_expectation(lambda z: np.asarray(self.evaluator(z), dtype=float) ** 2)
        if not math.isfinite(second_moment):
            raise ValueError(f"link {self.name!r} is not square-integrable under N(0,1)")

    def __call__(self, z):
        return self.evaluator(z)

    def grad(self, z):
        if self.derivative is None:
            raise ValueError(f"link {self.name!r} has no derivative")
        return self.derivative(z)


def hermite_link(k: int) -> LinkFunction:
    """Probabilists' Hermite polynomial He_k as a link."""
    coef = np.zeros(k + 1)
    coef[k] = 1.0
    dcoef = hermite_e.hermeder(coef) if k > 0 else np.zeros(1)
    return LinkFunction(lambda z: hermite_e.hermeval(z, coef), f"He{k}", lambda z: hermite_e.hermeval(z, dcoef))


HE1 = hermite_link(1)
HE2 = hermite_link(2)
HE3 = hermite_link(3)
TANH = LinkFunction(np.tanh, "tanh", lambda z: 1.0 - np.tanh(z) ** 2)
IDENTITY = LinkFunction(lambda z: np.asarray(z, dtype=float), "identity", lambda z: np.ones_like(np.asarray(z, dtype=float)))
ZERO = LinkFunction(lambda z: np.zeros_like(np.asarray(z, dtype=float)), "zero", lambda z: np.zeros_like(np.asarray(z, dtype=float)))

LINKS = {f.name: f for f in (HE1, HE2, HE3, TANH, IDENTITY, ZERO)}


def _coefficient(f: LinkFunction, k: int, order: int) -> float:
    basis = np.zeros(k + 1)
    basis[k] = 1.0
    val = gaussian_expectation(lambda z: np.asarray(f(z), dtype=float) * hermite_e.hermeval(z, basis), order)
    return val / math.factorial(k)


def hermite_coefficient(f: LinkFunction, k: int) -> float:
    """c_k in f = sum_k c_k He_k, i.e. E[f(z) He_k(z)] / k!."""
    if not 0 <= k <= K_MAX:
        raise ValueError(f"k must lie in [0, {K_MAX}]")
    value = _coefficient(f, k, QUAD_NODES)
    check = _coefficient(f, k, 2 * QUAD_NODES)
    if abs(value - check) > CONVERGENCE_TOL:
        raise QuadratureError(f"coefficient {k} of {f.name!r} not converged ({value!r} vs {check!r})")
    return value


def information_exponent(f: LinkFunction, k_max: int = K_MAX, tol: float = IE_TOL) -> int:
    """Smallest k >= 1 with |c_k| > tol. The constant term is ignored."""
    for k in range(1, k_max + 1):
        if abs(hermite_coefficient(f, k)) > tol:
            return k
    raise InformationExponentNotFound(f"all Hermite coefficients of {f.name!r} up to {k_max} are <= {tol}")


def _check_unit(v: np.ndarray, what: str, tol: float) -> None:
    if abs(np.linalg.norm(v) - 1.0) > tol:
        raise ValueError(f"{what} must have unit norm (got {np.linalg.norm(v)!r})")


@dataclass
class MultiIndexTarget:
    beta_e: np.ndarray
    beta_h: np.ndarray
    link_e: LinkFunction = HE1
    link_h: LinkFunction = HE2
    validate_links: bool = True

    def __post_init__(self):
        self.beta_e = np.asarray(self.beta_e, dtype=float)
        self.beta_h = np.asarray(self.beta_h, dtype=float)
        if self.beta_e.shape != self.beta_h.shape or self.beta_e.ndim != 1:
            raise ValueError("directions must be vectors of equal length")
        _check_unit(self.beta_e, "beta_e", 1e-12)
        _check_unit(self.beta_h, "beta_h", 1e-12)
        if abs(self.beta_e @ self.beta_h) > 1e-12:
            raise ValueError("beta_e and beta_h must be orthogonal")
        if self.validate_links:
            if information_exponent(self.link_e) != 1:
                raise ValueError(f"easy link {self.link_e.name!r} must have information exponent 1")
            if information_exponent(self.link_h) <= 1:
                raise ValueError(f"hard link {self.link_h.name!r} must have information exponent > 1")

    @property
    def d(self) -> int:
        return self.beta_e.shape[0]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.link_e(x @ self.beta_e) + self.link_h(x @ self.beta_h)


def make_target(d: int, seed: int, link_e: LinkFunction = HE1, link_h: LinkFunction = HE2, **kw) -> MultiIndexTarget:
    """Random orthonormal easy/hard pair (Gram-Schmidt on two Gaussian draws)."""
    if d < 2:
        raise ValueError("need d >= 2 for two orthogonal directions")
    g = rng_for(seed, "directions").standard_normal((d, 2))
    q, _ = np.linalg.qr(g)
    return MultiIndexTarget(q[:, 0].copy(), q[:, 1].copy(), link_e, link_h, **kw)


def sample_multi_index(target: MultiIndexTarget, n: int, seed: int) -> Dataset:
    x = rng_for(seed, "features").standard_normal((n, target.d))
    return Dataset(x, target(x))


@dataclass
class TwoLayerNet:
    """f(x) = a^T act(W x); only W is trained."""

    first_layer: np.ndarray
    second_layer: np.ndarray
    activation: LinkFunction = TANH
    check_scale: bool = True

    def __post_init__(self):
        self.first_layer = np.asarray(self.first_layer, dtype=float)
        self.second_layer = np.asarray(self.second_layer, dtype=float)
        if self.first_layer.ndim != 2 or self.second_layer.shape != (self.first_layer.shape[0],):
            raise ValueError("second layer length must equal the first layer's row count")
        if not (np.all(np.isfinite(self.first_layer)) and np.all(np.isfinite(self.second_layer))):
            raise ValueError("network weights must be finite")
        if self.check_scale and not 0.1 <= np.linalg.norm(self.second_layer) <= 10.0:
            raise ValueError("second-layer norm must lie in [0.1, 10]")

    @property
    def p(self) -> int:
        return self.first_layer.shape[0]

    @property
    def d(self) -> int:
        return self.first_layer.shape[1]

    def preactivations(self, x: np.ndarray) -> np.ndarray:
        return self.first_layer @ np.asarray(x, dtype=float).T  # p x n

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.second_layer @ self.activation(self.preactivations(x))


def _check_dims(net: TwoLayerNet, data: Dataset) -> None:
    if data.d != net.d:
        raise ValueError(f"data dimension {data.d} does not match network input dimension {net.d}")


def correlation_loss(net: TwoLayerNet, data: Dataset) -> float:
    _check_dims(net, data)
    return float(-np.mean(data.labels * net(data.features)))


def correlation_loss_gradient(net: TwoLayerNet, data: Dataset) -> np.ndarray:
    """-(1/n) [(a y^T) * act'(W X^T)] X, a p x d matrix."""
    _check_dims(net, data)
    weights = net.activation.grad(net.preactivations(data.features))
    weights *= net.second_layer[:, None]
    weights *= data.labels[None, :]
    return -(weights @ data.features) / data.n


def one_step_update(net: TwoLayerNet, data: Dataset, eta: float) -> TwoLayerNet:
    step = eta * correlation_loss_gradient(net, data)
    return TwoLayerNet(net.first_layer - step, net.second_layer.copy(), net.activation, net.check_scale)


def _bulk(p: int, d: int, seed: int) -> np.ndarray:
    return rng_for(seed, "first_layer").standard_normal((p, d)) / math.sqrt(d)


def _signs(p: int, seed: int, scale: float) -> np.ndarray:
    signs = rng_for(seed, "second_layer").choice(np.array([-1.0, 1.0]), size=p)
    return signs * (scale / math.sqrt(p))


def init_teacher(p: int, d: int, a_scale: float = 1.0, seed: int = 0, activation: LinkFunction = TANH) -> TwoLayerNet:
    return TwoLayerNet(_bulk(p, d, seed), _signs(p, seed, a_scale), activation)


def init_student(
    p: int, d: int, tau: float, beta_h: np.ndarray, seed: int = 0, activation: LinkFunction = TANH
) -> TwoLayerNet:
    """Same bulk as :func:`init_teacher` with this seed, plus ``tau * abar beta_h^T``."""
    if tau < 0:
        raise ValueError("tau must be >= 0")
    beta_h = np.asarray(beta_h, dtype=float)
    if beta_h.shape != (d,):
        raise ValueError("beta_h has the wrong dimension")
    w = _bulk(p, d, seed)
    abar = rng_for(seed, "spike").standard_normal(p)
    abar /= np.linalg.norm(abar)
    w += tau * np.outer(abar, beta_h)
    return TwoLayerNet(w, _signs(p, seed, 1.0), activation)


def alignment(net: TwoLayerNet | np.ndarray, direction: np.ndarray) -> float:
    """||W direction||_2 for a unit ``direction``."""
    w = net.first_layer if isinstance(net, TwoLayerNet) else np.asarray(net, dtype=float)
    direction = np.asarray(direction, dtype=float)
    _check_unit(direction, "direction", UNIT_TOL)
    return float(np.linalg.norm(w @ direction))


@dataclass(frozen=True)
class AlignmentReport:
    align_e_before: float
    align_e_after: float
    align_h_before: float
    align_h_after: float
    dims: tuple[int, int, int]
    eta: float
    tau: float

    @property
    def easy_gain(self) -> float:
        return self.align_e_after - self.align_e_before

    @property
    def hard_gain(self) -> float:
        return self.align_h_after - self.align_h_before


def _report(before: TwoLayerNet, after: TwoLayerNet, target: MultiIndexTarget, n: int, eta: float, tau: float):
    return AlignmentReport(
        alignment(before, target.beta_e),
        alignment(after, target.beta_e),
        alignment(before, target.beta_h),
        alignment(after, target.beta_h),
        (target.d, before.p, n),
        float(eta),
        float(tau),
    )


@dataclass(frozen=True)
class FeatureTransferResult:
    teacher: AlignmentReport
    student: AlignmentReport
    nets: dict | None = None

    def __iter__(self):
        yield self.teacher
        yield self.student


def run_feature_transfer(
    d: int,
    p_t: int,
    p_s: int,
    n_t: int,
    n_s: int,
    eta_t: float = 1.0,
    eta_s: float = 1.0,
    tau: float = 2.0,
    links: tuple[LinkFunction, LinkFunction] = (HE1, HE2),
    seed: int = 0,
    a_scale: float = 1.0,
    activation: LinkFunction = TANH,
    return_nets: bool = False,
) -> FeatureTransferResult:
    """Teacher step on real labels, then student step on the updated teacher's outputs.

    Unpacks as ``(teacher_report, student_report)``.
    """
    if tau > math.sqrt(d) / 4:
        raise ValueError(f"tau={tau} exceeds sqrt(d)/4 = {math.sqrt(d) / 4:.4g}")
    target = make_target(d, derive_seed(seed, "target"), *links)
    teacher_data = sample_multi_index(target, n_t, derive_seed(seed, "teacher_data"))
    teacher0 = init_teacher(p_t, d, a_scale, derive_seed(seed, "teacher_init"), activation)
    teacher = one_step_update(teacher0, teacher_data, eta_t)

    x_student = rng_for(derive_seed(seed, "student_data"), "features").standard_normal((n_s, d))
    student_data = Dataset(x_student, teacher(x_student))
    student0 = init_student(p_s, d, tau, target.beta_h, derive_seed(seed, "student_init"), activation)
    student = one_step_update(student0, student_data, eta_s)

    nets = None
    if return_nets:
        nets = {
            "target": target,
            "teacher_init": teacher0,
            "teacher": teacher,
            "student_init": student0,
            "student": student,
            "student_data": student_data,
        }
    return FeatureTransferResult(
        _report(teacher0, teacher, target, n_t, eta_t, 0.0),
        _report(student0, student, target, n_s, eta_s, tau),
        nets,
    )
