"""Figure rendering for the report path.

Every CLI command that writes a report also renders the matching figure(s)
next to the delimited output, unless --no-plot is given. Uses the Agg
backend so headless runs work.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

matplotlib.rcParams.update({
    "figure.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.axisbelow": True,
})

BAR_COLOR = "#4878a8"
REF_COLOR = "#b04a4a"


def save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def scenario_accuracy(rows: list[dict], chance: float, title: str, path) -> None:
    """Per-scenario accuracy bars with occurrence probability annotations."""
    labels = [r["label"] for r in rows]
    accs = [100.0 * r["accuracy"] for r in rows]
    fig, ax = plt.subplots(figsize=(max(6, 0.9 * len(rows)), 4))
    ax.bar(range(len(rows)), accs, color=BAR_COLOR)
    ax.axhline(100.0 * chance, color=REF_COLOR, linestyle="--", linewidth=1,
               label=f"chance {100.0 * chance:.1f}%")
    for i, r in enumerate(rows):
        ax.annotate(f"{100.0 * r['probability']:.2f}%", (i, accs[i]),
                    textcoords="offset points", xytext=(0, 3),
                    ha="center", fontsize=7)
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels(labels, rotation=45, ha="right")
    ax.set_ylabel("accuracy (%)")
    ax.set_ylim(0, 105)
    ax.set_title(title)
    ax.legend(loc="lower left", fontsize=8)
    save(fig, path)


def training_history(epochs: list[dict], title: str, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    xs = [row["epoch"] for row in epochs]
    ax.plot(xs, [row["loss"] for row in epochs], color=REF_COLOR, label="loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax2 = ax.twinx()
    ax2.plot(xs, [row["train_accuracy"] for row in epochs],
             color=BAR_COLOR, label="train accuracy")
    if epochs and "val_accuracy" in epochs[0]:
        ax2.plot(xs, [row["val_accuracy"] for row in epochs],
                 color=BAR_COLOR, linestyle="--", label="val accuracy")
    ax2.set_ylabel("accuracy")
    ax2.set_ylim(0, 1.05)
    ax2.grid(False)
    lines, names = ax.get_legend_handles_labels()
    lines2, names2 = ax2.get_legend_handles_labels()
    ax.legend(lines + lines2, names + names2, loc="center right", fontsize=8)
    ax.set_title(title)
    save(fig, path)


def sweep_bars(levels: list[str], by_setting: dict[str, list[float]],
               title: str, path) -> None:
    """Grouped bars: one group per swept level, one bar per failure setting."""
    fig, ax = plt.subplots(figsize=(max(6, 1.1 * len(levels)), 4))
    n_settings = max(len(by_setting), 1)
    width = 0.8 / n_settings
    for k, (setting, values) in enumerate(sorted(by_setting.items())):
        xs = [i + (k - (n_settings - 1) / 2) * width for i in range(len(levels))]
        ax.bar(xs, [100.0 * v for v in values], width=width, label=setting)
    ax.set_xticks(range(len(levels)))
    ax.set_xticklabels(levels, rotation=45, ha="right")
    ax.set_ylabel("expected accuracy (%)")
    ax.set_ylim(0, 105)
    ax.set_title(title)
    ax.legend(fontsize=8)
    save(fig, path)


def sim_timeline(windows: list[dict], availability: dict[str, float],
                 title: str, path) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    xs = [(w["start_hours"] + w["end_hours"]) / 2 for w in windows]
    ys = [w["accuracy"] if w["accuracy"] is not None else float("nan")
          for w in windows]
    ax.plot(xs, ys, marker="o", markersize=3, color=BAR_COLOR,
            label="stream accuracy")
    ax.set_xlabel("simulated hours")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0, 1.05)
    avail = ", ".join(f"{k}={v:.4f}" for k, v in sorted(availability.items()))
    ax.set_title(f"{title}\navailability: {avail}", fontsize=9)
    ax.legend(fontsize=8)
    save(fig, path)


def bandwidth_bars(rows: list[dict], title: str, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    labels = [r["scheme"] for r in rows]
    ax.bar(range(len(rows)), [r["scalars"] for r in rows], color=BAR_COLOR)
    for i, r in enumerate(rows):
        ax.annotate(str(r["scalars"]), (i, r["scalars"]),
                    textcoords="offset points", xytext=(0, 3), ha="center",
                    fontsize=8)
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels(labels)
    ax.set_ylabel("scalars per inference")
    ax.set_title(title)
    save(fig, path)
