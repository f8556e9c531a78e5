"""PNG figures written next to the CSV exports (headless Agg backend)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .domain import SpeciesClass  # noqa: E402

COLORS = {"P": "tab:blue", "U": "tab:orange", "N": "tab:green", "F": "tab:red"}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    # fixed metadata keeps repeated renders byte-identical
    fig.savefig(path, dpi=110, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_timeseries(stats, path) -> Path:
    fig, ax = plt.subplots(figsize=(7, 4.5))
    t = stats.epochs
    for s in SpeciesClass:
        m, sd = stats.mean[:, s], stats.std[:, s]
        ax.plot(t, m, color=COLORS[s.name], label=s.name)
        ax.fill_between(t, m - sd, m + sd, color=COLORS[s.name], alpha=0.2, lw=0)
    ax.plot(t, stats.total_mean, color="k", lw=1.2, label="total")
    ax.set_xlabel("years since start")
    ax.set_ylabel("objects")
    ax.legend(ncol=5, fontsize=8)
    ax.set_title(f"ensemble mean +/- 1 std ({stats.n_runs} runs)")
    return _save(fig, Path(path))


def plot_collisions(stats, path) -> Path:
    fig, ax = plt.subplots(figsize=(7, 4))
    t = stats.epochs
    for m, sd, lab in ((stats.catastrophic_mean, stats.catastrophic_std, "catastrophic"),
                       (stats.collisions_mean, stats.collisions_std, "all")):
        ax.plot(t, m, label=lab)
        ax.fill_between(t, m - sd, m + sd, alpha=0.2, lw=0)
    ax.set_xlabel("years since start")
    ax.set_ylabel("cumulative collisions")
    ax.legend()
    return _save(fig, Path(path))


def plot_degrees(links, path, k: int = 10) -> Path:
    from .netanalysis import weighted_degrees

    d_in, d_out = weighted_degrees(links)
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for ax, d, name in ((axes[0], d_in, "in-degree"), (axes[1], d_out, "out-degree")):
        order = np.argsort(-d, kind="stable")[:k]
        labels = [links.grid.node_label(int(i)) for i in order]
        ax.barh(range(len(order))[::-1], d[order], color=[COLORS[lab[0]] for lab in labels])
        ax.set_yticks(range(len(order))[::-1])
        ax.set_yticklabels(labels, fontsize=7)
        ax.set_xlabel(f"weighted {name}")
    return _save(fig, Path(path))


def plot_capacity_1d(model, path, x0s=None, t_end: float = 60.0) -> Path:
    K = model.K
    if x0s is None:
        x0s = [0.25 * K, 0.75 * K, 1.05 * K] if np.isfinite(K) else [1.0]
    t = np.linspace(0.0, t_end, 400)
    fig, ax = plt.subplots(figsize=(7, 4))
    for x0 in x0s:
        sol = model.solution(x0, t)
        ax.plot(t, np.where(np.isfinite(sol.x), sol.x, np.nan), label=f"x0={x0:.3g}")
    if np.isfinite(K):
        ax.axhline(K, color="k", ls="--", lw=1, label=f"K={K:.3g}")
    ax.set_xlabel("years")
    ax.set_ylabel("fragments")
    ax.legend(fontsize=8)
    return _save(fig, Path(path))


def plot_phase_portrait(model, grid_data, path) -> Path:
    X, Y, DX, DY = grid_data
    fig, ax = plt.subplots(figsize=(6, 5))
    speed = np.hypot(DX, DY)
    cs = ax.contourf(X, Y, np.log10(speed + 1e-300), levels=20, cmap="viridis")
    fig.colorbar(cs, ax=ax, label="log10 |(x', y')|")
    ax.streamplot(X, Y, DX, DY, color="w", density=0.8, linewidth=0.6)
    for eq in getattr(model, "equilibria", []) or []:
        ax.plot(eq.x, eq.y, "o", mfc="none" if eq.stability != "stable" else "r", mec="r")
    ax.set_xlabel("fragments x")
    ax.set_ylabel("payloads y")
    return _save(fig, Path(path))


def write_report(out_dir, stats=None, links=None, capacity=None, phase_grid=None) -> list[Path]:
    """Render every figure that the given results support into ``out_dir``."""
    from .capacity import CapacityModel1D

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if stats is not None:
        written += [plot_timeseries(stats, out / "timeseries.png"), plot_collisions(stats, out / "collisions.png")]
    if links is not None and len(links):
        written.append(plot_degrees(links, out / "degrees.png"))
    if capacity is not None:
        if isinstance(capacity, CapacityModel1D):
            written.append(plot_capacity_1d(capacity, out / "capacity.png"))
        elif phase_grid is not None:
            written.append(plot_phase_portrait(capacity, phase_grid, out / "phase_portrait.png"))
    return written
