#!/usr/bin/env python3
"""Render the CSVs written by `sim run` into PNG figures.

    python scripts/plot_trace.py OUT_DIR [--fig-dir DIR]

OUT_DIR is the directory given to `sim run --out`. Figures land next to
the CSVs unless --fig-dir is set.
"""

import argparse
import json
import re
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402


def columns(df, prefix):
    """Columns named `prefix_<i>` or `prefix_<i>_<j>`, in file order."""
    pat = re.compile(rf"^{re.escape(prefix)}_\d+(_\d+)?$")
    return [c for c in df.columns if pat.match(c)]


def shade_dos(ax, df):
    """Grey bands over rows where the DoS indicator is on."""
    on = df["dos"].astype(bool).to_numpy()
    t = df["t"].to_numpy()
    start = None
    for k, flag in enumerate(on):
        if flag and start is None:
            start = t[k]
        elif not flag and start is not None:
            ax.axvspan(start, t[k], color="0.85", lw=0)
            start = None
    if start is not None:
        ax.axvspan(start, t[-1], color="0.85", lw=0)


def lines(ax, df, cols, log=False):
    for c in cols:
        ax.plot(df["t"], df[c], lw=1, label=c)
    if log:
        ax.set_yscale("log")
    ax.set_xlabel("t [s]")
    ax.grid(alpha=0.3)


def save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    print(path)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out_dir", type=Path)
    ap.add_argument("--fig-dir", type=Path)
    args = ap.parse_args()

    trace = pd.read_csv(args.out_dir / "trace.csv")
    diag = pd.read_csv(args.out_dir / "diagnostics.csv")
    report_path = args.out_dir / "report.json"
    report = json.loads(report_path.read_text()) if report_path.exists() else {}
    fig_dir = args.fig_dir or args.out_dir
    fig_dir.mkdir(parents=True, exist_ok=True)

    # leader estimation
    fig, (a, b) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    shade_dos(a, trace)
    lines(a, trace, columns(trace, "obs_err"), log=True)
    a.set_ylabel("‖Υ̂ᵢ − Υ‖")
    a.legend(fontsize=7)
    shade_dos(b, trace)
    lines(b, trace, ["z_err_norm"], log=True)
    b.set_ylabel("‖z̃‖")
    save(fig, fig_dir / "leader_estimation.png")

    # regulator equations
    fig, (a, b) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    lines(a, trace, columns(trace, "reg_res"), log=True)
    a.set_ylabel("regulator residual")
    a.legend(fontsize=7)
    lines(b, diag, columns(diag, "reg_err"), log=True)
    b.set_ylabel("‖Δ̂ᵢ − Δᵢ‖")
    save(fig, fig_dir / "regulator.png")

    # outputs, one panel per component
    y_cols = columns(trace, "y")
    yk_cols = columns(trace, "yk")
    comps = sorted({int(c.rsplit("_", 1)[1]) for c in y_cols})
    fig, axes = plt.subplots(len(comps), 1, figsize=(7, 2.6 * len(comps)), sharex=True, squeeze=False)
    for ax, j in zip(axes[:, 0], comps):
        for c in yk_cols:
            if c.endswith(f"_{j}"):
                ax.plot(trace["t"], trace[c], "k--", lw=1)
        for c in y_cols:
            if c.endswith(f"_{j}"):
                ax.plot(trace["t"], trace[c], lw=1, label=c)
        ax.set_ylabel(f"output {j}")
        ax.grid(alpha=0.3)
    axes[0, 0].legend(fontsize=7, ncol=2)
    axes[-1, 0].set_xlabel("t [s]")
    save(fig, fig_dir / "outputs.png")

    # planar or spatial view of the outputs with start and end markers
    if len(comps) in (2, 3):
        spatial = len(comps) == 3
        fig = plt.figure(figsize=(6, 6))
        ax = fig.add_subplot(projection="3d" if spatial else None)
        groups = [(yk_cols, "k"), (y_cols, None)]
        for cols, color in groups:
            agents = sorted({c.rsplit("_", 1)[0] for c in cols})
            for agent in agents:
                xs = [trace[f"{agent}_{j}"] for j in comps]
                kw = {"color": color} if color else {}
                (ln,) = ax.plot(*xs, lw=1, **kw)
                c = ln.get_color()
                first = [x.iloc[0] for x in xs]
                last = [x.iloc[-1] for x in xs]
                ax.scatter(*first, facecolors="none", edgecolors=c, marker="s")
                ax.scatter(*last, color=c, marker="s")
        save(fig, fig_dir / "outputs_phase.png")

    # containment error against its ultimate bound
    fig, ax = plt.subplots(figsize=(7, 3.5))
    shade_dos(ax, trace)
    e_cols = [c for c in trace.columns if re.match(r"^e_\d+_norm$", c)]
    lines(ax, trace, e_cols)
    for b in report.get("bounds", []):
        ax.axhline(b["e_bar"], color="r", lw=0.8, ls=":")
    ax.set_ylabel("‖eᵢ‖")
    ax.legend(fontsize=7)
    save(fig, fig_dir / "containment_error.png")

    # adaptive compensation
    fig, (a, b) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    lines(a, trace, columns(trace, "rho"))
    a.set_ylabel("ρ̂ᵢ")
    lines(b, trace, columns(trace, "eps_norm"), log=True)
    b.set_ylabel("‖εᵢ‖")
    save(fig, fig_dir / "adaptive.png")


if __name__ == "__main__":
    main()
