"""Report figures. Uses the Agg backend; every function writes one PNG."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "figure.figsize": (6.4, 4.0),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 9,
    "legend.fontsize": 8,
    "savefig.dpi": 120,
    # fixed metadata keeps repeated runs byte-identical
    "svg.hashsalt": "habitree",
}


def _paths(tree):
    """Node index sequences from the root to each leaf."""
    return [tree.path(int(l)) for l in tree.leaves]


def _path_series(tree, X, path):
    t = tree.point_times()
    ts, xs = [], []
    for i in path:
        if tree.is_leaf[i]:
            ts.append(t[i, 0])
            xs.append(X[i, 0])
        else:
            ts.extend(t[i])
            xs.extend(X[i])
    return np.array(ts), np.array(xs)


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return str(path)


def plot_consumption(tree, c, F, c_tilde, path, max_paths: int = 16):
    """Consumption, habit and their difference along (up to) ``max_paths`` paths."""
    with plt.rc_context(RC):
        fig, axes = plt.subplots(1, 3, figsize=(10.0, 3.4), sharex=True)
        for p in _paths(tree)[:max_paths]:
            for ax, X in zip(axes, (c, F, c_tilde)):
                ts, xs = _path_series(tree, np.asarray(X), p)
                ax.plot(ts, xs, lw=0.8, color="C0", alpha=0.6)
        for ax, name in zip(axes, ("consumption c", "habit F(c)", "c - F(c)")):
            ax.set_title(name)
            ax.set_xlabel("t")
        fig.tight_layout()
        return _save(fig, path)


def plot_ladder(eps, values, path, target=None):
    """Superhedging value against the strictness margin."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        ax.semilogx(eps, values, "o-", label="price")
        if target is not None:
            ax.axhline(target, ls="--", color="k", lw=0.8, label="limit")
        ax.invert_xaxis()
        ax.set_xlabel("eps")
        ax.set_ylabel("superhedging value")
        ax.legend()
        fig.tight_layout()
        return _save(fig, path)


def plot_policy_comparison(tree, c_numeric, c_closed, path, max_paths: int = 16):
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        for k, p in enumerate(_paths(tree)[:max_paths]):
            ts, a = _path_series(tree, np.asarray(c_numeric), p)
            _, b = _path_series(tree, np.asarray(c_closed), p)
            ax.plot(ts, a, color="C0", lw=1.2, label="solver" if k == 0 else None)
            ax.plot(ts, b, color="C1", lw=0.8, ls="--", label="closed form" if k == 0 else None)
        ax.set_xlabel("t")
        ax.set_ylabel("c*")
        ax.legend()
        fig.tight_layout()
        return _save(fig, path)

