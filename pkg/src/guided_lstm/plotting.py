"""Figures written next to the CSV reports (Agg backend, PNG files)."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.4),
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 7,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def smooth(values, window=50):
    values = np.asarray(values, dtype=float)
    if len(values) < window or window <= 1:
        return values
    kernel = np.ones(window) / window
    return np.convolve(values, kernel, mode="valid")


def plot_training_curves(rows, path, title=None, window=50):
    """Loss curves (left axis) with validation GAP markers (right axis)."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        it = np.array([r["iteration"] for r in rows])
        for key, color in (("loss_word", "C0"), ("loss_class", "C1")):
            vals = np.array([r.get(key, np.nan) for r in rows], dtype=float)
            if np.all(vals == 0) or np.all(np.isnan(vals)):
                continue
            sm = smooth(vals, window)
            ax.plot(it[len(it) - len(sm):], sm, color=color, lw=1, label=key)
        ax.set_xlabel("iteration")
        ax.set_ylabel("training loss")
        evals = [r for r in rows if "gap" in r]
        if evals:
            ax2 = ax.twinx()
            ax2.plot([r["iteration"] for r in evals], [r["gap"] for r in evals], "o-",
                     color="C2", ms=3, lw=1, label="val GAP")
            ax2.set_ylabel("GAP")
            ax2.set_ylim(0, 1)
        ax.legend(loc="upper right", frameon=False)
        if title:
            ax.set_title(title)
        return _save(fig, path)


def plot_gamma_curves(rows, path, max_curves=12):
    """Equilibrium correctness against injection probability for a few (p, q)."""
    pairs = sorted({(r.p, r.q) for r in rows if r.verdict != "degenerate"})
    step = max(1, len(pairs) // max_curves)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for p, q in pairs[::step]:
            cells = sorted((r for r in rows if (r.p, r.q) == (p, q)), key=lambda r: r.beta)
            b = [c.beta for c in cells]
            style = "-" if p > q else ("--" if p < q else ":")
            line, = ax.plot(b, [c.gamma_closed for c in cells], style, lw=1,
                            label=f"p={p:.2g}, q={q:.2g}")
            ax.errorbar(b, [c.gamma_mc for c in cells], yerr=[3 * c.stderr for c in cells],
                        fmt="o", ms=2, color=line.get_color())
        ax.set_xlabel("label injection probability")
        ax.set_ylabel("equilibrium P(correct)")
        ax.legend(ncol=2, frameon=False)
        return _save(fig, path)


def plot_metric_bars(results, path):
    """Grouped bars of Hit@1/PERR/GAP for several named runs."""
    names = list(results)
    keys = ("hit1", "perr", "gap")
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        x = np.arange(len(names))
        width = 0.8 / len(keys)
        for k, key in enumerate(keys):
            ax.bar(x + (k - 1) * width, [100 * results[n][key] for n in names], width, label=key)
        ax.set_xticks(x)
        ax.set_xticklabels(names, rotation=20, ha="right")
        ax.set_ylabel("%")
        ax.legend(frameon=False)
        return _save(fig, path)
