#!/usr/bin/env python3
"""Render the five standard figures from the sweep CLI's CSV output.

Usage:
    plots/render.py --figure N --csv path [--csv path ...] --out image

Reads one or more CSV files produced by ``gmm`` (any mix of modes), groups
the rows by figure-specific keys, and draws: theory curves as lines,
simulation rows as markers with error bars from stderr_eps, the Bayes
baseline as a dashed line, and a vertical line at alpha_star when phase rows
are present. Output format follows the file extension (vector formats such
as .pdf/.svg by default; .png for raster). Rendering is deterministic: a
fixed style and no timestamps embedded in the output.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

#: columns every input CSV must carry (the CLI always writes all of them)
REQUIRED_COLUMNS = (
    "mode", "loss", "alpha", "delta", "rho", "lambda", "m", "q", "b",
    "gamma", "eps_gen", "train_loss", "eps_bayes", "converged", "d",
    "replicates", "stderr_eps", "seed",
)

#: fixed per-loss style so the same loss looks identical across figures
LOSS_STYLE = {
    "square": {"color": "tab:blue", "marker": "o"},
    "logistic": {"color": "tab:orange", "marker": "s"},
    "hinge": {"color": "tab:green", "marker": "^"},
}
FALLBACK_STYLE = {"color": "tab:gray", "marker": "d"}
LINESTYLES = ("-", "--", "-.", ":")
BAYES_STYLE = {"color": "black", "linestyle": "--"}


class SchemaError(Exception):
    """Input CSV does not match the sweep CLI's column layout."""


@dataclass
class Row:
    mode: str
    loss: str
    alpha: float
    delta: float
    rho: float
    lam: float
    eps_gen: float
    train_loss: float
    eps_bayes: float
    stderr_eps: float


def _num(cell: str) -> float:
    if cell == "" or cell is None:
        return math.nan
    if cell == "diverged":
        return math.inf
    return float(cell)


def load_rows(paths: Sequence[Path]) -> List[Row]:
    rows: List[Row] = []
    for path in paths:
        if not path.exists():
            raise SchemaError(f"{path}: file does not exist")
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            missing = [c for c in REQUIRED_COLUMNS if c not in header]
            if missing:
                raise SchemaError(
                    f"{path}: missing required column(s) {', '.join(missing)}")
            for rec in reader:
                rows.append(Row(
                    mode=rec["mode"], loss=rec["loss"],
                    alpha=_num(rec["alpha"]), delta=_num(rec["delta"]),
                    rho=_num(rec["rho"]), lam=_num(rec["lambda"]),
                    eps_gen=_num(rec["eps_gen"]),
                    train_loss=_num(rec["train_loss"]),
                    eps_bayes=_num(rec["eps_bayes"]),
                    stderr_eps=_num(rec["stderr_eps"])))
    return rows


def _style(loss: str) -> Dict[str, str]:
    return LOSS_STYLE.get(loss, FALLBACK_STYLE)


def _fmt_lam(lam: float) -> str:
    if math.isnan(lam):
        return ""
    return f"{lam:g}"


def _sorted_series(rows: List[Row], xattr: str,
                   yattr: str = "eps_gen") -> Tuple[List[float], List[float]]:
    pts = sorted((getattr(r, xattr), getattr(r, yattr)) for r in rows
                 if not math.isnan(getattr(r, yattr)))
    return [p[0] for p in pts], [p[1] for p in pts]


def _group(rows: List[Row], key) -> Dict[tuple, List[Row]]:
    out: Dict[tuple, List[Row]] = defaultdict(list)
    for r in rows:
        out[key(r)].append(r)
    return dict(sorted(out.items(), key=lambda kv: str(kv[0])))


def _draw_bayes(ax, rows: List[Row], xattr: str) -> None:
    bayes = [r for r in rows if r.mode == "bayes"]
    if bayes:
        x, y = _sorted_series(bayes, xattr)
        if len(x) == 1:
            ax.axhline(y[0], label="Bayes-optimal", **BAYES_STYLE)
        else:
            ax.plot(x, y, label="Bayes-optimal", **BAYES_STYLE)


def _draw_phase(ax, rows: List[Row]) -> None:
    for r in rows:
        if r.mode == "phase" and not math.isnan(r.alpha):
            ax.axvline(r.alpha, color="gray", linestyle=":",
                       label=r"$\alpha^*$")


def _draw_theory_and_sim(ax, rows: List[Row], xattr: str) -> None:
    """Theory lines and simulation markers, grouped by (loss, lambda)."""
    theory = _group([r for r in rows if r.mode in ("theory", "landscape")],
                    lambda r: (r.loss, r.lam))
    per_loss_seen: Dict[str, int] = defaultdict(int)
    for (loss, lam), grp in theory.items():
        x, y = _sorted_series(grp, xattr)
        ls = LINESTYLES[per_loss_seen[loss] % len(LINESTYLES)]
        per_loss_seen[loss] += 1
        label = loss if math.isnan(lam) else \
            rf"{loss}, $\lambda$={_fmt_lam(lam)}"
        ax.plot(x, y, linestyle=ls, color=_style(loss)["color"], label=label)
    sims = _group([r for r in rows if r.mode == "simulate"],
                  lambda r: (r.loss, r.lam))
    for (loss, lam), grp in sims.items():
        pts = sorted((r.alpha if xattr == "alpha" else getattr(r, xattr),
                      r.eps_gen, r.stderr_eps) for r in grp
                     if not math.isnan(r.eps_gen))
        if not pts:
            continue
        st = _style(loss)
        ax.errorbar([p[0] for p in pts], [p[1] for p in pts],
                    yerr=[0.0 if math.isnan(p[2]) else p[2] for p in pts],
                    fmt=st["marker"], color=st["color"], markersize=4,
                    capsize=2, linestyle="none",
                    label=f"{loss} (simulation)")
    hebb = [r for r in rows if r.mode == "hebb"]
    if hebb:
        x, y = _sorted_series(hebb, xattr)
        ax.plot(x, y, color="tab:red", linestyle="-.", label="Hebb")


def _finish(ax, xlabel: str, ylabel: str, logx: bool = False) -> None:
    if logx:
        ax.set_xscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    handles, labels = ax.get_legend_handles_labels()
    # drop duplicate labels (e.g. repeated vertical lines)
    seen, hs, ls = set(), [], []
    for h, l in zip(handles, labels):
        if l not in seen:
            seen.add(l)
            hs.append(h)
            ls.append(l)
    if hs:
        ax.legend(hs, ls, fontsize=8)


def render_figure(figure: int, rows: List[Row], ax) -> None:
    if figure in (1, 2):
        _draw_theory_and_sim(ax, rows, "alpha")
        _draw_bayes(ax, rows, "alpha")
        _draw_phase(ax, rows)
        _finish(ax, r"$\alpha = n/d$", r"$\epsilon_{gen}$")
    elif figure in (3, 4):
        if figure == 3:
            groups = _group([r for r in rows if r.mode == "theory"],
                            lambda r: (r.loss, r.alpha))
            for (loss, alpha), grp in groups.items():
                x, y = _sorted_series(grp, "lam")
                ax.plot(x, y, color=_style(loss)["color"],
                        linestyle="-" if alpha <= 2 else "--",
                        label=rf"{loss}, $\alpha$={alpha:g}")
        else:
            groups = _group([r for r in rows if r.mode == "theory"],
                            lambda r: (r.loss, r.rho))
            for (loss, rho), grp in groups.items():
                x, y = _sorted_series(grp, "lam")
                ax.plot(x, y, label=rf"{loss}, $\rho$={rho:g}")
        _draw_bayes(ax, rows, "lam")
        _finish(ax, r"$\lambda$", r"$\epsilon_{gen}$", logx=True)
    elif figure == 5:
        groups = _group([r for r in rows if r.mode == "phase"],
                        lambda r: r.rho)
        for rho, grp in groups.items():
            x, y = _sorted_series(grp, "delta", "alpha")
            ax.plot(x, y, marker=".", label=rf"$\rho$={rho:g}")
        ax.axhline(2.0, color="gray", linestyle=":", linewidth=0.8)
        _finish(ax, r"$\Delta$", r"$\alpha^*$", logx=True)
    else:
        raise SchemaError(f"figure must be in 1..5, got {figure}")


def _savefig(fig, out: Path) -> None:
    """Write the image without embedding timestamps (deterministic bytes)."""
    fmt = out.suffix.lstrip(".").lower() or "pdf"
    metadata: Optional[dict]
    if fmt == "pdf":
        metadata = {"CreationDate": None, "Creator": None, "Producer": None}
    elif fmt == "svg":
        metadata = {"Date": None}
    elif fmt == "png":
        metadata = {"Software": None}
    else:
        metadata = None
    fig.savefig(out, metadata=metadata)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        description="Render figures from sweep CSV output.")
    parser.add_argument("--figure", type=int, required=True,
                        choices=range(1, 6), metavar="N",
                        help="figure id (1-5)")
    parser.add_argument("--csv", action="append", required=True,
                        type=Path, metavar="PATH",
                        help="input CSV (repeatable)")
    parser.add_argument("--out", type=Path, required=True, metavar="PATH",
                        help="output image path (extension picks the format)")
    parser.add_argument("--dpi", type=int, default=150,
                        help="raster resolution (default 150)")
    args = parser.parse_args(argv)

    try:
        rows = load_rows(args.csv)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    matplotlib.rcParams.update({
        "figure.dpi": args.dpi,
        "savefig.dpi": args.dpi,
        "svg.hashsalt": "gmm-figures",
        "axes.grid": True,
        "grid.alpha": 0.3,
    })
    fig, ax = plt.subplots(figsize=(5.0, 3.6), layout="constrained")
    if not rows:
        print("warning: no data rows in input CSV; rendering empty axes",
              file=sys.stderr)
    try:
        render_figure(args.figure, rows, ax)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        plt.close(fig)
        return 2
    args.out.parent.mkdir(parents=True, exist_ok=True)
    _savefig(fig, args.out)
    plt.close(fig)
    return 0


if __name__ == "__main__":
    sys.exit(main())
