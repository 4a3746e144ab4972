"""Deterministic SVG figures from result records."""
from __future__ import annotations

import io
import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .experiments import ResultRecord  # noqa: E402

CONTOUR_LEVELS = 21  # odd, so 0 is always a level

_RC = {
    "svg.hashsalt": "weak2strong",
    "svg.fonttype": "none",
    "font.size": 9,
}


class PlotError(ValueError):
    pass


def symmetric_levels(values: np.ndarray, count: int = CONTOUR_LEVELS) -> np.ndarray:
    """``count`` evenly spaced levels on [-M, M] with M = max |finite value|."""
    finite = values[np.isfinite(values)]
    bound = float(np.max(np.abs(finite))) if finite.size else 0.0
    if bound == 0.0:
        bound = 1e-12
    return np.linspace(-bound, bound, count)


def _field(records: list[ResultRecord], attr) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    lts = sorted({r.lambda_t for r in records})
    lss = sorted({r.lambda_s for r in records})
    z = np.full((len(lss), len(lts)), np.nan)
    ix = {v: i for i, v in enumerate(lts)}
    iy = {v: i for i, v in enumerate(lss)}
    for r in records:
        v = attr(r)
        if v is not None:
            z[iy[r.lambda_s], ix[r.lambda_t]] = v
    return np.array(lts), np.array(lss), z


def _finish(fig) -> str:
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return buf.getvalue()


def contour_svg(records: list[ResultRecord]) -> str:
    """Filled empirical gap, dashed theory contours, solid zero level, dashed lambda_t*."""
    recs = [r for r in records if r.lambda_t is not None and r.lambda_s is not None]
    if not recs:
        raise PlotError("no grid records to plot")
    x, y, emp = _field(recs, lambda r: r.gap_emp_mean)
    _, _, theory = _field(recs, lambda r: r.gap_theory)
    if len(x) < 2 or len(y) < 2:
        raise PlotError("contour plots need at least a 2x2 grid")
    levels = symmetric_levels(np.concatenate([emp.ravel(), theory.ravel()]))
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5.0, 4.0))
        if np.isfinite(emp).any():
            filled = ax.contourf(x, y, emp, levels=levels, cmap="RdBu_r", extend="both")
            filled.set_gid("empirical-gap")
            fig.colorbar(filled, ax=ax, label="L_s - L_t")
        if np.isfinite(theory).any():
            dashed = ax.contour(x, y, theory, levels=levels, colors="tab:red", linestyles="dashed", linewidths=0.6)
            dashed.set_gid("theory-contours")
            lo, hi = np.nanmin(theory), np.nanmax(theory)
            if lo < 0 < hi:
                zero = ax.contour(x, y, theory, levels=[0.0], colors="black", linestyles="solid", linewidths=1.5)
                zero.set_gid("zero-level")
        first = recs[0]
        if first.sigma_eps is not None and first.gamma_t is not None:
            star = first.sigma_eps**2 * first.gamma_t
            line = ax.axvline(star, color="black", linestyle="dashed", linewidth=1.0)
            line.set_gid("lambda-t-star")
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("lambda_t")
        ax.set_ylabel("lambda_s")
        ax.set_title(first.experiment)
        return _finish(fig)


def curve_svg(records: list[ResultRecord]) -> str:
    """Student loss curves: against lambda_s (zeta sweeps) or gamma_t (double descent)."""
    if not records:
        raise PlotError("no records to plot")
    kind = records[0].kind
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5.0, 4.0))
        if kind == "DoubleDescent":
            groups: dict = {}
            for r in records:
                groups.setdefault(r.lambda_s, []).append(r)
            for ls, rs in sorted(groups.items()):
                rs = sorted(rs, key=lambda r: r.gamma_t)
                ax.plot([r.gamma_t for r in rs], [_nan(r.loss_student_theory) for r in rs], label=f"lambda_s={ls:g}")
            ax.set_xlabel("gamma_t")
            ax.axvline(1.0, color="grey", linewidth=0.5)
        else:
            groups = {}
            for r in records:
                groups.setdefault((r.zeta, r.lambda_t), []).append(r)
            for i, ((zeta, lt), rs) in enumerate(sorted(groups.items(), key=lambda kv: (kv[0][0] or 0.0, kv[0][1]))):
                rs = sorted(rs, key=lambda r: r.lambda_s)
                color = f"C{i % 10}"
                xs = [r.lambda_s for r in rs]
                label = f"zeta={zeta:g}" if zeta is not None else f"lambda_t={lt:g}"
                ax.plot(xs, [_nan(r.loss_student_emp_mean) for r in rs], "o", color=color, markersize=3, label=label)
                ax.plot(xs, [_nan(r.loss_student_theory) for r in rs], "--", color=color, linewidth=1.0)
            teacher = [r.loss_teacher_emp_mean for r in records if r.loss_teacher_emp_mean is not None]
            if teacher:
                line = ax.axhline(float(np.mean(teacher)), color="black", linestyle="dashed", linewidth=1.0)
                line.set_gid("teacher-loss")
            ax.set_xlabel("lambda_s")
        ax.set_xscale("log")
        ax.set_ylabel("student loss")
        ax.legend(fontsize=7)
        ax.set_title(records[0].experiment)
        return _finish(fig)


def _nan(v):
    return math.nan if v is None else v


def render(records: list[ResultRecord], kind: str | None = None) -> str:
    if not records:
        raise PlotError("no records to plot")
    if kind is None:
        kind = "contour" if records[0].kind in ("ContourGrid", "PhaseMap") else "curve"
    if kind == "contour":
        return contour_svg(records)
    if kind == "curve":
        return curve_svg(records)
    raise PlotError(f"unknown plot kind {kind!r}")
