"""Figure rendering for run reports.

Everything here is presentation only: values are converted to float at
the last moment, the exact pipeline never sees them.  Figures are
written as PNG next to the delimited report output.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .construction import base_interval
from .funcs import pl_eval

FIGSIZE = (7.0, 3.2)
DPI = 130


def render_plan(plan, e_max: int, m_max: int, path: Path) -> None:
    """Bands I_e with their carved stage intervals and marked rationals."""
    fig, ax = plt.subplots(figsize=FIGSIZE)
    for e in range(e_max + 1):
        band = base_interval(e)
        ax.plot(
            [float(band.lo), float(band.hi)], [e, e],
            color="lightsteelblue", linewidth=7, solid_capstyle="butt",
        )
        for m in range(m_max + 1):
            g = plan.geometry(e, m)
            ax.plot(
                [float(g.interval.lo), float(g.interval.hi)], [e, e],
                color="crimson", linewidth=7, solid_capstyle="butt",
            )
            ax.plot([float(g.q)], [e], marker="|", color="black", markersize=10)
    ax.set_xscale("log", base=2)
    ax.set_xlabel("position in [0,1] (log2 scale)")
    ax.set_ylabel("band index e")
    ax.set_yticks(range(e_max + 1))
    ax.set_title("stage intervals inside their bands")
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def render_function(pieces, double, traces, path: Path) -> None:
    """The pieces of f, the PL double, and the decoded sample points."""
    fig, ax = plt.subplots(figsize=FIGSIZE)
    xs = [float(x) for x, _ in double.knots]
    ys = [float(y) for _, y in double.knots]
    ax.plot(xs, ys, color="gray", linewidth=1, label="extension double")
    for p in pieces.entries:
        ax.plot(
            [float(p.support.lo), float(p.support.hi)],
            [float(p.value), float(p.value)],
            color="crimson", linewidth=3, solid_capstyle="butt",
        )
    ax.plot([0], [0], marker="o", color="crimson", markersize=4)
    for t in traces:
        ax.plot(
            [_to_float(t["q_em"])],
            [_to_float(t["approximation"])],
            marker="x", color="navy", markersize=6,
        )
    ax.set_xlabel("x")
    ax.set_ylabel("f(x)")
    ax.set_title("coded function, extension double, decoded values")
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def _to_float(q_text: str) -> float:
    if "/" in q_text:
        num, den = q_text.split("/")
        return int(num) / int(den)
    return float(int(q_text))


def render_cover(cover, n: int, path: Path) -> None:
    """The first n cover intervals, stacked by index."""
    fig, ax = plt.subplots(figsize=FIGSIZE)
    for idx, iv in enumerate(cover.prefix(n)):
        ax.plot(
            [float(iv.lo), float(iv.hi)], [idx, idx],
            color="seagreen", linewidth=2, solid_capstyle="butt",
        )
    ax.set_xlabel("position")
    ax.set_ylabel("cover index")
    ax.set_title(f"cover prefix ({n} ticks)")
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def render_all(outdir: Path, report, cover) -> list[Path]:
    """Render the standard figure set for a run report; returns the paths."""
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    art = report.artifacts
    if art is not None:
        p = outdir / "plan.png"
        render_plan(art.plan, min(len(report.X) - 1, 4), min(art.depth, 4), p)
        written.append(p)
        f = outdir / "function.png"
        render_function(art.pieces, art.double, report.traces, f)
        written.append(f)
    c = outdir / "cover.png"
    render_cover(cover, 40, c)
    written.append(c)
    return written
