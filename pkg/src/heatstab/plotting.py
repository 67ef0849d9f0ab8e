"""Figures written next to the CSV outputs (non-interactive backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed metadata keeps PNG bytes independent of the run date
_PNG_META = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    fig.savefig(tmp, format="png", dpi=120, metadata=_PNG_META)
    plt.close(fig)
    tmp.replace(path)
    return path


def plot_trajectory(times, norms, path, envelope=None, T=None, gamma=None, title=None) -> Path:
    """Semilog plot of the state norm with the decay envelope and actuation windows."""
    times = np.asarray(times)
    norms = np.asarray(norms)
    fig, ax = plt.subplots(figsize=(7, 4))
    positive = norms > 0
    if positive.any():
        ax.semilogy(times[positive], norms[positive], "k.-", lw=1, ms=3, label="||y(t)||")
    else:
        ax.plot(times, norms, "k.-", lw=1, ms=3, label="||y(t)||")
    if envelope is not None and positive.any():
        ax.semilogy(times, envelope, "r--", lw=1, label="envelope")
    if gamma is not None and positive.any():
        ax.semilogy(times, norms[0] * np.exp(-gamma * times), ":", color="0.5",
                    label=f"exp(-{gamma:g} t)")
    if T is not None:
        i = 0
        while (2 * i + 1) * T < times[-1]:
            ax.axvspan((2 * i + 1) * T, (2 * i + 1.5) * T, color="tab:blue", alpha=0.12, lw=0)
            i += 1
    ax.set_xlabel("t")
    ax.set_ylabel("state norm")
    if title:
        ax.set_title(title)
    ax.legend(loc="best", fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    return _save(fig, path)


def plot_sweep(T, op_norm, m1, path, m2=None) -> Path:
    """Log-log plot of ||F_T|| against its lower bounds over the T sweep."""
    T = np.asarray(T, dtype=float)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.loglog(T, op_norm, "ko-", label="||F_T||")
    ax.loglog(T, m1, "b^--", label="m1(T)")
    if m2 is not None:
        m2 = np.asarray(m2, dtype=float)
        ok = np.isfinite(m2) & (m2 > 0)
        if ok.any():
            ax.loglog(T[ok], m2[ok], "gs:", label="m2(T) (advisory)")
    ax.set_xlabel("T")
    ax.set_ylabel("norm")
    ax.legend(loc="best", fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    return _save(fig, path)
