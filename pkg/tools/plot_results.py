"""Plot the CSV outputs of ``bilevel-tune`` subcommands.

Usage: python tools/plot_results.py RUN_DIR [RUN_DIR ...]

Each directory is inspected for the files a subcommand writes and the
matching figure is saved next to them as PNG. Needs matplotlib.
"""

import csv
import sys
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def col(data, key):
    return [float(r[key]) for r in data]


def plot_bounds(d):
    data = rows(d / "bounds_compare.csv")
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for key, label in (("true_err_sq", "true error"), ("apriori_bound", "a priori"),
                       ("aposteriori_bound", "a posteriori")):
        ax.semilogy(col(data, "iter"), col(data, key), label=label)
    ax.set_xlabel("FISTA iteration")
    ax.set_ylabel("squared distance to minimizer")
    ax.legend()
    fig.tight_layout()
    fig.savefig(d / "bounds_compare.png", dpi=150)


def plot_runlogs(d):
    logs = sorted(d.glob("runlog_*.csv"))
    if not logs:
        return
    fig, axes = plt.subplots(1, 4, figsize=(15, 3.2))
    for path in logs:
        data = [r for r in rows(path) if r["step_type"] != "re_evaluation"]
        name = path.stem[len("runlog_"):]
        best, trace = float("inf"), []
        for r in data:
            best = min(best, float(r["F"]))
            trace.append(best)
        evals = col(data, "eval_index")
        axes[0].semilogy(evals, trace, label=name)
        axes[1].semilogy(col(data, "cum_fista_iters"), trace, label=name)
        axes[2].plot(evals, col(data, "theta1"), label=name)
        axes[3].plot(evals, col(data, "theta2"), label=name)
    for ax, (x, y) in zip(axes, [("evaluations", "best F"), ("FISTA iterations", "best F"),
                                 ("evaluations", "theta1"), ("evaluations", "theta2")]):
        ax.set_xlabel(x)
        ax.set_ylabel(y)
    axes[0].legend(fontsize=6)
    fig.tight_layout()
    fig.savefig(d / "runlogs.png", dpi=150)


def plot_sweep(d):
    data = rows(d / "sweep_finals.csv")
    by = defaultdict(list)
    for r in data:
        by[r["variant"]].append(r)
    fig, axes = plt.subplots(1, 2, figsize=(10, 3.2))
    for name, rs in by.items():
        for ax, key in zip(axes, ("theta1", "theta2")):
            ax.plot(col(rs, "theta0_2"), col(rs, key), "o-", label=name)
    for ax, key in zip(axes, ("theta1", "theta2")):
        ax.set_xlabel("starting theta2")
        ax.set_ylabel(f"final {key}")
    axes[0].legend()
    fig.tight_layout()
    fig.savefig(d / "sweep_finals.png", dpi=150)


def plot_validation(d):
    data = rows(d / "validation_accuracy.csv")
    by = defaultdict(list)
    for r in data:
        by[(r["variant"], r["theta0_2"])].append(r)
    fig, ax = plt.subplots(figsize=(8, 3.5))
    for (name, start), rs in sorted(by.items()):
        ax.plot(col(rs, "digit"), col(rs, "accuracy"), ".-", lw=0.8,
                label=f"{name}, start {float(start):g}")
    ax.set_xlabel("digit")
    ax.set_ylabel("test accuracy")
    ax.legend(fontsize=5, ncol=4)
    fig.tight_layout()
    fig.savefig(d / "validation_accuracy.png", dpi=150)


def main(dirs):
    for d in map(Path, dirs):
        if (d / "bounds_compare.csv").exists():
            plot_bounds(d)
        if (d / "sweep_finals.csv").exists():
            plot_sweep(d)
        if (d / "validation_accuracy.csv").exists():
            plot_validation(d)
        plot_runlogs(d)


if __name__ == "__main__":
    if len(sys.argv) < 2:
        sys.exit(__doc__)
    main(sys.argv[1:])
