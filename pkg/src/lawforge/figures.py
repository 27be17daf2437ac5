"""Matplotlib figures rendered next to the delimited outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)


def convergence_figure(rows, path) -> None:
    """Both L2 deviations against the measurement level m, log scale."""
    ms = [r.m for r in rows]
    f_dev = [r.f_deviation for r in rows]
    u_dev = [r.u_deviation for r in rows]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.semilogy(ms, f_dev, "o-", label=r"$\|f_\theta(u, u_x) - u_t\|_{L^2}$")
    ax.semilogy(ms, u_dev, "s-", label=r"$\|u^m - u\|_{L^2}$")
    ax.set_xlabel("measurement level m")
    ax.set_ylabel(r"$L^2$ deviation")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def gap_figure(gaps, path) -> None:
    """Reduced-vs-full operator distance against m, log-log."""
    ms = [m for m, _ in gaps]
    values = [g for _, g in gaps]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.loglog(ms, values, "o-")
    ax.set_xlabel("measurement level m")
    ax.set_ylabel(r"$\|K^m u - K^{full} u\|_{L^2}$")
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
