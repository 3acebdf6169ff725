#!/usr/bin/env python3
"""Plot the CSV outputs of the coxsgd experiment commands.

Usage: python3 scripts/plot.py <out-dir>...

Each directory is inspected for the known CSV names and a PNG is written
next to it. The numerics binary never plots; this script is the only
matplotlib dependency in the project.
"""

import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd


def read_csv(path: Path) -> pd.DataFrame:
    return pd.read_csv(path, comment="#")


def plot_pop_gradient(path: Path) -> None:
    df = read_csv(path)
    fig, ax = plt.subplots(figsize=(7, 5))
    for s, group in df.groupby("s"):
        ax.errorbar(group["theta"], group["grad_mean"], yerr=3 * group["grad_se"],
                    marker="o", markersize=3, capsize=2, label=f"s={s}")
    ax.axhline(0.0, color="black", lw=0.8)
    ax.axvline(1.0, color="black", lw=0.8, ls="--")
    ax.set_xlabel(r"$\theta$")
    ax.set_ylabel("mean mini-batch gradient")
    ax.set_title("Population batch score by batch size")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path.with_suffix(".png"), dpi=150)
    print(f"wrote {path.with_suffix('.png')}")


def plot_scaling_rule(path: Path) -> None:
    df = read_csv(path)
    fig, axes = plt.subplots(1, 2, figsize=(11, 4.5), sharey=True)
    rule = df[df["series"] == "rule"]
    for (s, gamma), group in rule.groupby(["s", "gamma"]):
        axes[0].plot(group["epoch"], group["test_loss"], label=f"s={s}, $\\gamma$={gamma:.4f}")
    axes[0].set_title("Rate scaled with batch size")
    fixed = df[df["series"] == "fixed"]
    for (s, gamma), group in fixed.groupby(["s", "gamma"]):
        axes[1].plot(group["epoch"], group["test_loss"], label=f"s={s}, $\\gamma$={gamma:.4f}")
    axes[1].set_title("Fixed rate (rule violated)")
    for ax in axes:
        ax.set_xlabel("epoch")
        ax.legend(fontsize=8)
    axes[0].set_ylabel("test loss")
    fig.tight_layout()
    fig.savefig(path.with_suffix(".png"), dpi=150)
    print(f"wrote {path.with_suffix('.png')}")


def plot_batch_efficiency(path: Path) -> None:
    df = read_csv(path)
    fig, ax = plt.subplots(figsize=(8, 5))
    s_values = sorted(df["s"].unique())
    width = 0.35
    for offset, (strategy, color) in enumerate([("SB", "tab:blue"), ("FB", "tab:orange")]):
        data = [df[(df["strategy"] == strategy) & (df["s"] == s)]["log_err_truth"].values
                for s in s_values]
        positions = [i + (offset - 0.5) * width for i in range(len(s_values))]
        box = ax.boxplot(data, positions=positions, widths=width * 0.9,
                         patch_artist=True, showfliers=False)
        for patch in box["boxes"]:
            patch.set_facecolor(color)
            patch.set_alpha(0.6)
        ax.plot([], [], color=color, label=strategy)
    ax.set_xticks(range(len(s_values)))
    ax.set_xticklabels(s_values)
    ax.set_xlabel("batch size s")
    ax.set_ylabel(r"$\log\,\|\hat\theta-\theta_0\|_2^2$")
    ax.set_title("SB vs FB estimation error across batch sizes")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path.with_suffix(".png"), dpi=150)
    print(f"wrote {path.with_suffix('.png')}")


HANDLERS = {
    "pop_gradient.csv": plot_pop_gradient,
    "scaling_rule.csv": plot_scaling_rule,
    "batch_efficiency.csv": plot_batch_efficiency,
}


def main() -> int:
    if len(sys.argv) < 2:
        print(__doc__)
        return 1
    for arg in sys.argv[1:]:
        root = Path(arg)
        for name, handler in HANDLERS.items():
            path = root / name
            if path.exists():
                handler(path)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
