"""Figures written next to the CSV/JSON reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_RC = {
    "figure.figsize": (6.4, 4.0),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 10,
    "savefig.dpi": 120,
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def histogram_vs_target(counts, target_probs, path, title="samples vs target"):
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        counts = np.asarray(counts, dtype=float)
        x = np.arange(counts.size)
        ax.bar(x, counts / counts.sum(), width=1.0, alpha=0.6, label="empirical")
        if target_probs is not None:
            ax.plot(x, target_probs, color="k", lw=1.2, label="target")
        ax.set_xlabel("word value")
        ax.set_ylabel("probability")
        ax.set_title(title)
        ax.legend()
        return _save(fig, path)


def heatmap_2d(counts, target_probs, bits_per_dim, path):
    side = 2 ** bits_per_dim
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(1, 2, figsize=(9, 4))
        emp = np.asarray(counts, dtype=float).reshape(side, side)
        axes[0].imshow(emp / emp.sum(), origin="lower")
        axes[0].set_title("empirical")
        if target_probs is not None:
            axes[1].imshow(np.asarray(target_probs).reshape(side, side), origin="lower")
        axes[1].set_title("target")
        for ax in axes:
            ax.set_xlabel("dim 0")
            ax.set_ylabel("dim 1")
            ax.grid(False)
        return _save(fig, path)


def rng_histogram(values, path, width=8):
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        counts = np.bincount(np.asarray(values).astype(np.int64), minlength=2 ** width)
        ax.bar(np.arange(counts.size), counts, width=1.0)
        ax.axhline(counts.sum() / counts.size, color="k", lw=1)
        ax.set_xlabel("u value")
        ax.set_ylabel("count")
        return _save(fig, path)


def matrix_pair(analytic, empirical, path):
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(1, 2, figsize=(9, 4))
        vmax = max(float(np.max(m)) for m in (analytic, empirical) if m is not None)
        for ax, m, name in zip(axes, (analytic, empirical), ("analytic", "empirical")):
            if m is None:
                ax.axis("off")
                continue
            im = ax.imshow(m, cmap="viridis", vmin=0.0, vmax=vmax)
            ax.set_title(name)
            ax.set_xlabel("candidate")
            ax.set_ylabel("current")
            ax.grid(False)
            fig.colorbar(im, ax=ax, fraction=0.046)
        return _save(fig, path)


def energy_breakdown(parts: dict, path):
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        names = list(parts)
        ax.bar(names, [parts[n] for n in names])
        ax.set_ylabel("energy (fJ)")
        return _save(fig, path)


def throughput_curve(curve, path):
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        bits = [c["n_bits"] for c in curve]
        ax.semilogy(bits, [c["samples_per_s"] for c in curve], marker="o")
        ax.set_xscale("log", base=2)
        ax.set_xticks(bits, [str(b) for b in bits])
        ax.set_xlabel("sample precision (bits)")
        ax.set_ylabel("samples/s")
        return _save(fig, path)


def sweep_curves(rows, param, path):
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(1, 2, figsize=(9, 4))
        x = [r["value"] for r in rows]
        axes[0].plot(x, [r["p_bfr"] for r in rows], marker="o", label="p_BFR")
        axes[0].plot(x, [r["acceptance_rate"] for r in rows], marker="s", label="acceptance")
        axes[0].legend()
        axes[1].semilogy(x, [max(abs(0.5 - r["lambda3"]), 1e-18) for r in rows], marker="o")
        axes[1].set_ylabel("|0.5 - lambda_n|")
        for ax in axes:
            ax.set_xlabel(param)
        return _save(fig, path)
