"""Figures written next to the CSV outputs (Agg backend, no display needed)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.4),
    "figure.dpi": 120,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "legend.frameon": False,
}
POLARITY_COLORS = {1: "tab:red", -1: "tab:blue"}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def histograms(ensembles, path, bins: int = 30) -> Path:
    """Overlaid position-change histograms; ``ensembles`` is ``[(label, deltas_m, polarity)]``."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.0, 3.4))
        for label, d, pol in ensembles:
            ax.hist(np.asarray(d) * 1e9, bins=bins, histtype="stepfilled", alpha=0.35,
                    color=POLARITY_COLORS.get(pol), edgecolor="none")
            ax.hist(np.asarray(d) * 1e9, bins=bins, histtype="step",
                    color=POLARITY_COLORS.get(pol), lw=0.7)
        ax.set_xlabel("position change (nm)")
        ax.set_ylabel("trials")
        return _save(fig, path)


def moments_vs_width(rows, path) -> Path:
    """Fitted |mu| and sigma against pulse width, one line per polarity."""
    with plt.rc_context(STYLE):
        fig, (a1, a2) = plt.subplots(1, 2, figsize=(7.0, 3.0))
        for pol in sorted({r.polarity for r in rows}, reverse=True):
            rs = sorted((r for r in rows if r.polarity == pol), key=lambda r: r.pulse_width)
            T = [r.pulse_width * 1e9 for r in rs]
            c = POLARITY_COLORS.get(pol)
            a1.plot(T, [abs(r.mu) * 1e9 for r in rs], "o-", ms=3, color=c, label=f"polarity {pol:+d}")
            a2.plot(T, [r.sigma * 1e9 for r in rs], "o-", ms=3, color=c)
        a1.set_xlabel("pulse width (ns)")
        a1.set_ylabel("|mean| (nm)")
        a2.set_xlabel("pulse width (ns)")
        a2.set_ylabel("std (nm)")
        a1.legend()
        return _save(fig, path)


def position_dependence(rows, L_dw: float, path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for pol in sorted({r.polarity for r in rows}, reverse=True):
            rs = sorted((r for r in rows if r.polarity == pol), key=lambda r: r.x0)
            f = [r.x0 / L_dw for r in rs]
            mu = np.array([r.mu for r in rs]) * 1e9
            sd = np.array([r.sigma for r in rs]) * 1e9
            c = POLARITY_COLORS.get(pol)
            ax.errorbar(f, mu, yerr=sd, fmt="o-", ms=3, capsize=2, color=c,
                        label=f"polarity {pol:+d}")
        ax.axhline(0, color="k", lw=0.5)
        ax.set_xlabel("initial position / track length")
        ax.set_ylabel("position change (nm)")
        ax.legend()
        return _save(fig, path)


def calibration(table, path) -> Path:
    T = np.linspace(0, table.T[-1], 200)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(T * 1e9, table.mean(T), color="tab:green", label="mean")
        ax.set_xlabel("pulse width (ns)")
        ax.set_ylabel("mean change (weight units)", color="tab:green")
        ax2 = ax.twinx()
        ax2.plot(T * 1e9, table.var(T), color="tab:purple", ls="--", label="variance")
        ax2.set_ylabel("variance (weight units$^2$)", color="tab:purple")
        ax2.grid(False)
        if table.T_min > 0:
            ax.axvline(table.T_min * 1e9, color="0.5", lw=0.7, ls=":")
        return _save(fig, path)


def training_curves(rows, path) -> Path:
    """Train NLL and last-sample test accuracy per epoch from trainer log rows."""
    ep = [r[0] for r in rows]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(ep, [r[4] for r in rows], color="tab:orange")
        ax.set_xlabel("epoch")
        ax.set_ylabel("train NLL per example", color="tab:orange")
        ax2 = ax.twinx()
        ax2.plot(ep, [r[6] for r in rows], color="tab:blue")
        ax2.set_ylabel("test accuracy (last sample)", color="tab:blue")
        ax2.grid(False)
        return _save(fig, path)


def accuracy_vs_bits(table_rows, path, n_samples: int = 64) -> Path:
    """``table_rows`` are ``(bits, sampler, n_samples, accuracy)``."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for sampler, marker in (("sgld", "o"), ("dwsgd", "s"), ("mh-filamentary", "^")):
            pts = sorted((b, a) for b, s, k, a in table_rows if s == sampler and k == n_samples)
            if pts:
                ax.plot([b for b, _ in pts], [100 * a for _, a in pts], marker + "-", ms=4,
                        label=sampler)
        ax.set_xlabel("update precision (bits)")
        ax.set_ylabel(f"test accuracy (%), {n_samples} samples")
        ax.legend()
        return _save(fig, path)


def mh_trace(chain, g_range, path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for i in range(chain.shape[1]):
            ax.plot(chain[:, i], lw=0.8, label=f"device {i}")
        ax.set_ylim(*g_range)
        ax.set_xlabel("step")
        ax.set_ylabel("conductance (uS)")
        ax.legend()
        return _save(fig, path)
