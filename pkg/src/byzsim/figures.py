"""Matplotlib renderings of experiment reports.

Every function writes a PNG next to the delimited output and returns
the path. The Agg backend is forced so rendering works headless; no
window is ever opened.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  backend must be set first

_DPI = 130
_FIGSIZE = (7.0, 4.2)


def _new_axes(title: str, xlabel: str, ylabel: str):
    fig, ax = plt.subplots(figsize=_FIGSIZE, dpi=_DPI)
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(alpha=0.3)
    return fig, ax


def _finish(fig, path: str) -> str:
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def save_accuracy_figure(reports, path: str,
                         baseline: float | None = None,
                         title: str = "Test accuracy") -> str:
    """Accuracy-per-round curve, with the no-attack baseline if given."""
    fig, ax = _new_axes(title, "round", "test accuracy")
    rounds = [r.round_index for r in reports]
    ax.plot(rounds, [r.test_accuracy for r in reports],
            color="tab:blue", label="test accuracy")
    if baseline is not None:
        ax.axhline(baseline, color="tab:gray", linestyle="--",
                   label=f"baseline {baseline:.3f}")
    ax.set_ylim(0.0, 1.05)
    ax.legend(loc="lower right")
    return _finish(fig, path)


def save_selection_figure(reports, path: str,
                          title: str = "Selection rates") -> str:
    """Honest and malicious selected-rate curves for a filtering defense."""
    fig, ax = _new_axes(title, "round", "selected fraction")
    rounds = [r.round_index for r in reports]
    ax.plot(rounds, [r.honest_selected_rate for r in reports],
            color="tab:green", label="honest selected")
    ax.plot(rounds, [r.malicious_selected_rate for r in reports],
            color="tab:red", label="malicious selected")
    ax.set_ylim(-0.05, 1.05)
    ax.legend(loc="center right")
    return _finish(fig, path)


def save_signtrace_figure(rows, path: str,
                          title: str = "Sign statistics") -> str:
    """Positive/negative/zero fractions of the honest mean (solid) and
    of the attack vectors (dashed) per round."""
    fig, ax = _new_axes(title, "round", "fraction of coordinates")
    rounds = [r.round_index for r in rows]
    for attr, color in (("pos_frac", "tab:green"),
                        ("neg_frac", "tab:red"),
                        ("zero_frac", "tab:gray")):
        label = attr.split("_")[0]
        ax.plot(rounds, [getattr(r.honest, attr) for r in rows],
                color=color, label=f"honest {label}")
        mal = [getattr(r.malicious, attr) if r.malicious is not None
               else float("nan") for r in rows]
        ax.plot(rounds, mal, color=color, linestyle="--",
                label=f"malicious {label}")
    ax.set_ylim(-0.05, 1.05)
    ax.legend(loc="upper right", ncols=2, fontsize="small")
    return _finish(fig, path)


def save_impact_figure(cells, path: str,
                       title: str = "Attack impact by defense") -> str:
    """Grouped bars of attack impact (baseline minus best accuracy) for
    the cells of a grid run; errored cells are drawn as gaps."""
    attacks = sorted({c["attack"] for c in cells})
    defenses = sorted({c["defense"] for c in cells})
    impact = {(c["attack"], c["defense"]): c.get("attack_impact")
              for c in cells}
    fig, ax = _new_axes(title, "attack", "accuracy drop vs baseline")
    width = 0.8 / max(len(defenses), 1)
    for j, defense in enumerate(defenses):
        xs = [i + (j - (len(defenses) - 1) / 2) * width
              for i in range(len(attacks))]
        ys = [impact.get((a, defense)) for a in attacks]
        ys = [y if y is not None else float("nan") for y in ys]
        ax.bar(xs, ys, width=width, label=defense)
    ax.set_xticks(range(len(attacks)))
    ax.set_xticklabels(attacks)
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.legend(fontsize="small")
    return _finish(fig, path)
