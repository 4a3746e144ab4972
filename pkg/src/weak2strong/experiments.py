"""Config-driven experiment orchestration, aggregation and persistence."""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable

import numpy as np

from . import __version__
from .feature_lab import LINKS, run_feature_transfer
from .linear_lab import TrialSpectra
from .mp_stieltjes import DomainError
from .seeding import trial_seed
from .theory import LambdaTRule, LinearProblemParams, classify_phase, predict, teacher_risk, risk_gap_ridge

SCHEMA_VERSION = 1

KINDS = ("ContourGrid", "ZetaSweep", "DoubleDescent", "FeatureTransfer", "PhaseMap")

CSV_COLUMNS = (
    "experiment", "kind", "d", "n_t", "n_s", "gamma_t", "gamma_s", "sigma_eps",
    "lambda_t", "lambda_s", "zeta", "tau", "eta_t", "eta_s", "trials",
    "loss_teacher_emp_mean", "loss_teacher_emp_std", "loss_student_emp_mean", "loss_student_emp_std",
    "loss_teacher_theory", "loss_student_theory", "gap_theory", "domain_error",
)
# Appended after the fixed columns; empty where a kind does not produce them.
EXTRA_COLUMNS = (
    "gap_emp_std", "regime", "improve_lo", "improve_hi",
    "align_e_gain_teacher", "align_h_gain_teacher", "align_e_gain_student", "align_h_ratio_student",
)
INT_COLUMNS = {"d", "n_t", "n_s", "trials"}
STR_COLUMNS = {"experiment", "kind", "domain_error", "regime"}


class ConfigError(ValueError):
    """Invalid experiment configuration; ``field`` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class SchemaError(ValueError):
    pass


def log_grid(lo: float, hi: float, n: int) -> list[float]:
    return [float(v) for v in np.geomspace(lo, hi, n)]


@dataclass
class ExperimentConfig:
    kind: str
    name: str = "custom"
    d: int | None = None
    n_t: int | None = None
    n_s: int | None = None
    gamma_t: list[float] = field(default_factory=list)
    gamma_s: float | None = None
    sigma_eps: float = 1.0
    lambda_t: list[float] = field(default_factory=list)
    lambda_s: list[float] = field(default_factory=list)
    zeta: list[float] = field(default_factory=list)
    trials: int = 10
    base_seed: int = 0
    penalty_variant: bool = False
    lambda_t_rule: dict | None = None
    p_t: int | None = None
    p_s: int | None = None
    eta_t: float = 1.0
    eta_s: float = 1.0
    tau: float = 2.0
    a_scale: float = 1.0
    link_e: str = "He1"
    link_h: str = "He2"
    activation: str = "tanh"
    notes: list[str] = field(default_factory=list)

    # -- serialization --
    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("<root>", "config must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        for key in data:
            if key not in known:
                raise ConfigError(key, "unknown field")
        if "kind" not in data:
            raise ConfigError("kind", "missing required field")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    def replace(self, **changes) -> "ExperimentConfig":
        cfg = dataclasses.replace(self, **changes)
        cfg.validate()
        return cfg

    # -- validation --
    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError("kind", f"must be one of {KINDS}")
        if not isinstance(self.trials, int) or self.trials < 1:
            raise ConfigError("trials", "must be an integer >= 1")
        if not isinstance(self.base_seed, int):
            raise ConfigError("base_seed", "must be an integer")
        if not (isinstance(self.sigma_eps, (int, float)) and self.sigma_eps >= 0):
            raise ConfigError("sigma_eps", "must be >= 0")
        for name in ("lambda_t", "lambda_s", "zeta", "gamma_t"):
            vals = getattr(self, name)
            if not isinstance(vals, list) or not all(isinstance(v, (int, float)) and math.isfinite(v) for v in vals):
                raise ConfigError(name, "must be a list of finite numbers")
        if any(v < 0 for v in self.lambda_t + self.lambda_s):
            raise ConfigError("lambda_t" if any(v < 0 for v in self.lambda_t) else "lambda_s", "values must be >= 0")
        if any(not 0 <= z <= 1 for z in self.zeta):
            raise ConfigError("zeta", "values must lie in [0, 1]")
        getattr(self, f"_validate_{self.kind}")()

    def _need_dims(self) -> None:
        for name in ("d", "n_t", "n_s"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ConfigError(name, "must be a positive integer")

    def _need(self, name: str) -> None:
        if not getattr(self, name):
            raise ConfigError(name, "grid must be nonempty")

    def _validate_ContourGrid(self) -> None:
        self._need_dims()
        self._need("lambda_t")
        self._need("lambda_s")
        if len(self.zeta) > 1:
            raise ConfigError("zeta", "contour grids take at most one zeta")
        self._check_ridge_solvable()

    def _validate_ZetaSweep(self) -> None:
        self._need_dims()
        for name in ("lambda_t", "lambda_s", "zeta"):
            self._need(name)
        if any(v <= 0 for v in self.lambda_s):
            raise ConfigError("lambda_s", "weighted ridge needs lambda_s > 0")
        self._check_ridge_solvable()

    def _check_ridge_solvable(self) -> None:
        if self.n_t < self.d and any(v == 0 for v in self.lambda_t):
            raise ConfigError("lambda_t", "lambda_t = 0 needs n_t >= d")
        if (self.n_s < self.d or self.zeta) and any(v == 0 for v in self.lambda_s):
            raise ConfigError("lambda_s", "lambda_s = 0 needs n_s >= d and a plain-ridge student")

    def _validate_DoubleDescent(self) -> None:
        self._need("gamma_t")
        self._need("lambda_s")
        if any(g <= 0 for g in self.gamma_t):
            raise ConfigError("gamma_t", "values must be > 0")
        if not (isinstance(self.gamma_s, (int, float)) and self.gamma_s > 0):
            raise ConfigError("gamma_s", "must be > 0")
        try:
            self.rule()
        except (DomainError, TypeError) as exc:
            raise ConfigError("lambda_t_rule", str(exc)) from None

    def _validate_FeatureTransfer(self) -> None:
        self._need_dims()
        for name in ("p_t", "p_s"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ConfigError(name, "must be a positive integer")
        if self.tau < 0 or self.tau > math.sqrt(self.d) / 4:
            raise ConfigError("tau", f"must lie in [0, sqrt(d)/4 = {math.sqrt(self.d) / 4:.4g}]")
        for name in ("link_e", "link_h", "activation"):
            if getattr(self, name) not in LINKS:
                raise ConfigError(name, f"unknown link; choose from {sorted(LINKS)}")
        if not 0.1 <= self.a_scale <= 10:
            raise ConfigError("a_scale", "must lie in [0.1, 10]")

    def _validate_PhaseMap(self) -> None:
        self._need("lambda_t")
        self._need("lambda_s")
        if any(v <= 0 for v in self.lambda_t):
            raise ConfigError("lambda_t", "phase maps need lambda_t > 0")
        gt, gs = self.gammas()
        if gt is None or gs is None:
            raise ConfigError("gamma_t", "give either d/n_t/n_s or gamma_t (one value) and gamma_s")

    # -- derived quantities --
    def gammas(self) -> tuple[float | None, float | None]:
        if self.d and self.n_t and self.n_s:
            return self.d / self.n_t, self.d / self.n_s
        gt = self.gamma_t[0] if len(self.gamma_t) == 1 else None
        return gt, self.gamma_s

    def rule(self) -> LambdaTRule:
        spec = dict(self.lambda_t_rule or {"kind": "ridgeless"})
        return LambdaTRule(**spec)


# ---------------------------------------------------------------- presets

FIG_GRID = log_grid(1e-3, 1e1, 30)
GAMMA_T_SWEEP = log_grid(0.1, 10.0, 201)
DD_LAMBDA_S = [0.01, 0.1, 1.0]
_INFERRED = "lambda grid range [1e-3, 1e1] is an inferred default"

PRESETS: dict[str, ExperimentConfig] = {
    "fig1_left": ExperimentConfig(
        "ContourGrid", "fig1_left", d=500, n_t=2000, n_s=2000, sigma_eps=1.0,
        lambda_t=FIG_GRID, lambda_s=FIG_GRID, trials=10, notes=[_INFERRED],
    ),
    "fig1_right": ExperimentConfig(
        "ContourGrid", "fig1_right", d=500, n_t=2000, n_s=416, sigma_eps=2.0,
        lambda_t=FIG_GRID, lambda_s=FIG_GRID, trials=10, notes=[_INFERRED],
    ),
    "fig2_left": ExperimentConfig(
        "ContourGrid", "fig2_left", d=500, n_t=2000, n_s=2000, sigma_eps=1.0,
        lambda_t=FIG_GRID, lambda_s=FIG_GRID, zeta=[0.8], trials=10, notes=[_INFERRED],
    ),
    "fig2_right": ExperimentConfig(
        "ContourGrid", "fig2_right", d=500, n_t=2000, n_s=416, sigma_eps=1.0,
        lambda_t=FIG_GRID, lambda_s=FIG_GRID, zeta=[0.88], trials=10, notes=[_INFERRED],
    ),
    "fig3": ExperimentConfig(
        "ZetaSweep", "fig3", d=500, n_t=2000, n_s=2000, sigma_eps=1.0,
        lambda_t=[0.25], lambda_s=log_grid(1e-2, 1e1, 30), zeta=[0.0, 0.68, 0.89, 0.98], trials=1,
        notes=["lambda_s range [1e-2, 1e1] is an inferred default"],
    ),
    "appD_ridgeless": ExperimentConfig(
        "DoubleDescent", "appD_ridgeless", gamma_t=GAMMA_T_SWEEP, gamma_s=0.1, sigma_eps=1.0,
        lambda_s=DD_LAMBDA_S, trials=1, lambda_t_rule={"kind": "ridgeless", "eps": 1e-6},
        notes=["ridgeless teacher approximated by lambda_t = 1e-6", "lambda_s values are inferred"],
    ),
    "appD_optimal": ExperimentConfig(
        "DoubleDescent", "appD_optimal", gamma_t=GAMMA_T_SWEEP, gamma_s=0.1, sigma_eps=1.0,
        lambda_s=DD_LAMBDA_S, trials=1, lambda_t_rule={"kind": "optimal"},
        notes=["lambda_s values are inferred"],
    ),
    "appD_scaled015": ExperimentConfig(
        "DoubleDescent", "appD_scaled015", gamma_t=GAMMA_T_SWEEP, gamma_s=0.1, sigma_eps=1.0,
        lambda_s=DD_LAMBDA_S, trials=1, lambda_t_rule={"kind": "scaled-optimal", "kappa": 0.15},
        notes=["lambda_s values are inferred"],
    ),
    "feature_default": ExperimentConfig(
        "FeatureTransfer", "feature_default", d=512, n_t=4096, n_s=4096, p_t=512, p_s=512,
        eta_t=1.0, eta_s=1.0, tau=2.0, trials=10,
    ),
}


def preset(name: str, d: int | None = None, **overrides) -> ExperimentConfig:
    """A copy of a named preset; ``d`` rescales n_t, n_s (and p) at fixed ratios."""
    if name not in PRESETS:
        raise ConfigError("preset", f"unknown preset {name!r}; valid presets: {', '.join(PRESETS)}")
    cfg = dataclasses.replace(PRESETS[name])
    cfg = ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    if d is not None and cfg.d is not None:
        scale = d / cfg.d
        changes: dict[str, Any] = {"d": d}
        for attr in ("n_t", "n_s", "p_t", "p_s"):
            if getattr(cfg, attr) is not None:
                changes[attr] = max(1, round(getattr(cfg, attr) * scale))
        cfg = dataclasses.replace(cfg, **changes)
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    cfg.validate()
    return cfg


# ---------------------------------------------------------------- records


@dataclass
class ResultRecord:
    experiment: str
    kind: str
    d: int | None = None
    n_t: int | None = None
    n_s: int | None = None
    gamma_t: float | None = None
    gamma_s: float | None = None
    sigma_eps: float | None = None
    lambda_t: float | None = None
    lambda_s: float | None = None
    zeta: float | None = None
    tau: float | None = None
    eta_t: float | None = None
    eta_s: float | None = None
    trials: int = 1
    loss_teacher_emp_mean: float | None = None
    loss_teacher_emp_std: float | None = None
    loss_student_emp_mean: float | None = None
    loss_student_emp_std: float | None = None
    loss_teacher_theory: float | None = None
    loss_student_theory: float | None = None
    gap_theory: float | None = None
    domain_error: str = ""
    gap_emp_std: float | None = None
    regime: str = ""
    improve_lo: float | None = None
    improve_hi: float | None = None
    align_e_gain_teacher: float | None = None
    align_h_gain_teacher: float | None = None
    align_e_gain_student: float | None = None
    align_h_ratio_student: float | None = None
    teacher_losses: tuple = ()
    student_losses: tuple = ()
    seeds: tuple = ()

    @property
    def gap_emp_mean(self) -> float | None:
        if self.loss_student_emp_mean is None or self.loss_teacher_emp_mean is None:
            return None
        return self.loss_student_emp_mean - self.loss_teacher_emp_mean

    def row(self) -> dict:
        return {c: getattr(self, c) for c in CSV_COLUMNS + EXTRA_COLUMNS}


def _std(x: np.ndarray) -> float:
    return float(np.std(x, ddof=1)) if len(x) > 1 else 0.0


def _with_losses(rec: ResultRecord, teacher: Iterable[float], student: Iterable[float]) -> ResultRecord:
    t = np.asarray(list(teacher), dtype=float)
    s = np.asarray(list(student), dtype=float)
    rec.teacher_losses = tuple(float(v) for v in t)
    rec.student_losses = tuple(float(v) for v in s)
    rec.loss_teacher_emp_mean = float(np.mean(t))
    rec.loss_teacher_emp_std = _std(t)
    rec.loss_student_emp_mean = float(np.mean(s))
    rec.loss_student_emp_std = _std(s)
    rec.gap_emp_std = _std(s - t)
    return rec


def _with_theory(rec: ResultRecord, gamma_t, gamma_s, sigma, lt, ls, zeta) -> ResultRecord:
    try:
        pred = predict(LinearProblemParams(gamma_t, gamma_s, sigma, lt, ls, zeta or 0.0))
    except DomainError as exc:
        rec.domain_error = str(exc)
        return rec
    rec.loss_teacher_theory = pred.loss_teacher
    rec.loss_student_theory = pred.loss_student
    rec.gap_theory = pred.gap
    return rec


# ---------------------------------------------------------------- runners

ProgressFn = Callable[[int, int], None]


def _map(fn, items: list, threads: int | None, progress: ProgressFn | None) -> list:
    """Order-preserving parallel map; results never depend on scheduling."""
    total = len(items)
    out: list = [None] * total
    workers = max(1, threads or os.cpu_count() or 1)
    if workers == 1 or total == 1:
        for i, item in enumerate(items):
            out[i] = fn(item)
            if progress:
                progress(i + 1, total)
        return out
    done = 0
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {pool.submit(fn, item): i for i, item in enumerate(items)}
        for fut, i in futures.items():
            out[i] = fut.result()
            done += 1
            if progress:
                progress(done, total)
    return out


def _linear_trial(cfg: ExperimentConfig, seed: int) -> dict:
    spec = TrialSpectra(cfg.d, cfg.n_t, cfg.n_s, cfg.sigma_eps, seed)
    variant = "penalty" if cfg.penalty_variant else "resolvent"
    zetas = cfg.zeta if cfg.zeta else [None]
    teacher = {}
    student = {}
    for lt in cfg.lambda_t:
        beta_t = spec.teacher(lt)
        teacher[lt] = spec.teacher_loss(beta_t)
        for z in zetas:
            student[(lt, z)] = spec.student_losses(beta_t, cfg.lambda_s, z, variant=variant)
    return {"teacher": teacher, "student": student}


def _base(cfg: ExperimentConfig, **kw) -> ResultRecord:
    gt, gs = cfg.gammas()
    return ResultRecord(
        experiment=cfg.name, kind=cfg.kind, d=cfg.d, n_t=cfg.n_t, n_s=cfg.n_s,
        gamma_t=gt, gamma_s=gs, sigma_eps=float(cfg.sigma_eps), trials=cfg.trials, **kw,
    )


def _run_linear(cfg: ExperimentConfig, threads, progress) -> list[ResultRecord]:
    seeds = [trial_seed(cfg.base_seed, i) for i in range(cfg.trials)]
    trials = _map(lambda s: _linear_trial(cfg, s), seeds, threads, progress)
    gt, gs = cfg.gammas()
    zetas = cfg.zeta if cfg.zeta else [None]
    records = []
    outer = [(lt, z) for lt in cfg.lambda_t for z in zetas]
    if cfg.kind == "ZetaSweep":
        outer = [(lt, z) for z in zetas for lt in cfg.lambda_t]
    for lt, z in outer:
        for j, ls in enumerate(cfg.lambda_s):
            rec = _base(cfg, lambda_t=float(lt), lambda_s=float(ls), zeta=None if z is None else float(z))
            rec.seeds = tuple(seeds)
            _with_losses(rec, (tr["teacher"][lt] for tr in trials), (tr["student"][(lt, z)][j] for tr in trials))
            if cfg.penalty_variant and z is not None:
                rec.domain_error = "closed-form prediction covers the resolvent estimator only"
            else:
                _with_theory(rec, gt, gs, cfg.sigma_eps, lt, ls, z)
            records.append(rec)
    return records


def _run_double_descent(cfg: ExperimentConfig, threads, progress) -> list[ResultRecord]:
    rule = cfg.rule()
    records = []
    for ls in cfg.lambda_s:
        for gt in cfg.gamma_t:
            lt = rule(gt, cfg.sigma_eps)
            rec = ResultRecord(
                experiment=cfg.name, kind=cfg.kind, gamma_t=float(gt), gamma_s=float(cfg.gamma_s),
                sigma_eps=float(cfg.sigma_eps), lambda_t=float(lt), lambda_s=float(ls), trials=cfg.trials,
            )
            try:
                p = LinearProblemParams(gt, cfg.gamma_s, cfg.sigma_eps, lt, ls)
                rec.loss_teacher_theory = teacher_risk(lt, gt, cfg.sigma_eps)
                rec.gap_theory = risk_gap_ridge(p)
                rec.loss_student_theory = rec.loss_teacher_theory + rec.gap_theory
            except DomainError as exc:
                rec.domain_error = str(exc)
            records.append(rec)
    if progress:
        progress(1, 1)
    return records


def _run_phase_map(cfg: ExperimentConfig, threads, progress) -> list[ResultRecord]:
    gt, gs = cfg.gammas()
    records = []
    for lt in cfg.lambda_t:
        try:
            phase = classify_phase(lt, gt, gs, cfg.sigma_eps)
        except DomainError as exc:
            phase = None
            reason = str(exc)
        for ls in cfg.lambda_s:
            rec = _base(cfg, lambda_t=float(lt), lambda_s=float(ls))
            _with_theory(rec, gt, gs, cfg.sigma_eps, lt, ls, None)
            if phase is None:
                rec.domain_error = rec.domain_error or reason
            else:
                rec.regime = phase.regime.value
                if phase.lambda_bar is not None:
                    rec.improve_lo, rec.improve_hi = 0.0, phase.lambda_bar
                elif phase.lambda_minus is not None:
                    rec.improve_lo, rec.improve_hi = phase.lambda_minus, phase.lambda_plus
            records.append(rec)
    if progress:
        progress(1, 1)
    return records


def _run_feature(cfg: ExperimentConfig, threads, progress) -> list[ResultRecord]:
    seeds = [trial_seed(cfg.base_seed, i) for i in range(cfg.trials)]
    links = (LINKS[cfg.link_e], LINKS[cfg.link_h])

    def one(seed):
        return run_feature_transfer(
            cfg.d, cfg.p_t, cfg.p_s, cfg.n_t, cfg.n_s, cfg.eta_t, cfg.eta_s, cfg.tau, links, seed,
            a_scale=cfg.a_scale, activation=LINKS[cfg.activation],
        )

    results = _map(one, seeds, threads, progress)
    rec = _base(cfg, tau=float(cfg.tau), eta_t=float(cfg.eta_t), eta_s=float(cfg.eta_s))
    rec.seeds = tuple(seeds)
    rec.domain_error = "alignment experiment: no risk prediction"
    rec.align_e_gain_teacher = float(np.mean([r.teacher.easy_gain for r in results]))
    rec.align_h_gain_teacher = float(np.mean([r.teacher.hard_gain for r in results]))
    rec.align_e_gain_student = float(np.mean([r.student.easy_gain for r in results]))
    rec.align_h_ratio_student = float(np.mean([r.student.align_h_after / r.student.align_h_before for r in results]))
    return [rec]


_RUNNERS = {
    "ContourGrid": _run_linear,
    "ZetaSweep": _run_linear,
    "DoubleDescent": _run_double_descent,
    "FeatureTransfer": _run_feature,
    "PhaseMap": _run_phase_map,
}


def run_experiment(
    config: ExperimentConfig, threads: int | None = None, progress: ProgressFn | None = None
) -> list[ResultRecord]:
    """One record per grid point; deterministic in ``config.base_seed``."""
    config.validate()
    return _RUNNERS[config.kind](config, threads, progress)


# ---------------------------------------------------------------- aggregation

_COORDS = CSV_COLUMNS[:14]


def aggregate(records: list[ResultRecord]) -> list[dict]:
    """Mean, std and standard error per grid point, pooling records that share coordinates."""
    if not records:
        raise ValueError("cannot aggregate an empty record list")
    groups: dict[tuple, list[ResultRecord]] = {}
    for rec in records:
        groups.setdefault(tuple(getattr(rec, c) for c in _COORDS), []).append(rec)
    table = []
    for key, recs in groups.items():
        row = dict(zip(_COORDS, key))
        t = np.array([v for r in recs for v in r.teacher_losses], dtype=float)
        s = np.array([v for r in recs for v in r.student_losses], dtype=float)
        row["trials"] = int(len(t))
        for name, x in (("teacher", t), ("student", s), ("gap", s - t if len(s) == len(t) else np.array([]))):
            if len(x):
                std = _std(x)
                row[f"{name}_mean"] = float(np.mean(x))
                row[f"{name}_std"] = std
                row[f"{name}_sem"] = std / math.sqrt(len(x))
            else:
                row[f"{name}_mean"] = row[f"{name}_std"] = row[f"{name}_sem"] = None
        table.append(row)
    return table


# ---------------------------------------------------------------- persistence


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v).replace("\x00", "\ufffd")  # the csv module cannot encode NUL


def _parse(col: str, text: str):
    if col in STR_COLUMNS:
        return text
    if text == "":
        return None
    if col in INT_COLUMNS:
        return int(text)
    return float(text)


def manifest_for(config: ExperimentConfig | None) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "base_seed": None if config is None else config.base_seed,
        "code_version": __version__,
        "preset": None if config is None else config.name,
        "notes": [] if config is None else list(config.notes),
    }


def dumps_csv(records: list[ResultRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")  # RFC 4180; also forces quoting of bare CR
    w.writerow(CSV_COLUMNS + EXTRA_COLUMNS)
    for rec in records:
        w.writerow([_fmt(getattr(rec, c)) for c in CSV_COLUMNS + EXTRA_COLUMNS])
    return buf.getvalue()


def _json_value(v):
    if isinstance(v, float) and not math.isfinite(v):
        return format(v, ".17g")  # "inf", "-inf", "nan"
    if isinstance(v, tuple):
        return [_json_value(x) for x in v]
    return v


def dumps_json(records: list[ResultRecord], config: ExperimentConfig | None = None) -> str:
    payload = {
        "manifest": manifest_for(config),
        "records": [{k: _json_value(v) for k, v in dataclasses.asdict(r).items()} for r in records],
    }
    return json.dumps(payload, indent=1, sort_keys=False) + "\n"


def write_results(records: list[ResultRecord], path: str, format: str = "csv", config: ExperimentConfig | None = None):
    """Atomic write: temp file in the target directory, then rename."""
    if format == "csv":
        text = dumps_csv(records)
    elif format == "json":
        text = dumps_json(records, config)
    else:
        raise ValueError(f"unknown format {format!r}")
    directory = os.path.dirname(os.path.abspath(path))
    tmp = os.path.join(directory, f".{os.path.basename(path)}.tmp{os.getpid()}")
    try:
        with open(tmp, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _from_json_value(key: str, v):
    if isinstance(v, str) and key not in STR_COLUMNS and key not in ("experiment", "kind"):
        return float(v)
    if isinstance(v, list):
        return tuple(float(x) if isinstance(x, str) else x for x in v)
    return v


def loads_csv(text: str) -> list[ResultRecord]:
    reader = csv.reader(io.StringIO(text, newline=""))
    try:
        header = tuple(next(reader))
    except StopIteration:
        raise SchemaError("empty CSV file") from None
    if header[: len(CSV_COLUMNS)] != CSV_COLUMNS:
        raise SchemaError("CSV header does not match the result schema")
    extras = header[len(CSV_COLUMNS):]
    if any(c not in EXTRA_COLUMNS for c in extras):
        raise SchemaError(f"unexpected CSV columns {extras}")
    records = []
    for lineno, row in enumerate(reader, start=2):
        if len(row) != len(header):
            raise SchemaError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            values = {c: _parse(c, t) for c, t in zip(header, row)}
        except ValueError as exc:
            raise SchemaError(f"line {lineno}: {exc}") from None
        records.append(ResultRecord(**values))
    return records


def loads_json(text: str) -> tuple[list[ResultRecord], dict]:
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc}") from None
    if not isinstance(payload, dict) or "manifest" not in payload or "records" not in payload:
        raise SchemaError("JSON results need 'manifest' and 'records'")
    version = payload["manifest"].get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaError(f"schema_version {version!r} is not supported (expected {SCHEMA_VERSION})")
    known = {f.name for f in dataclasses.fields(ResultRecord)}
    records = []
    for i, raw in enumerate(payload["records"]):
        unknown = set(raw) - known
        if unknown:
            raise SchemaError(f"record {i}: unknown fields {sorted(unknown)}")
        records.append(ResultRecord(**{k: _from_json_value(k, v) for k, v in raw.items()}))
    return records, payload["manifest"]


def read_results(path: str) -> list[ResultRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        return loads_json(text)[0]
    return loads_csv(text)
