"""Figure rendering for run artifacts.

Everything draws through the Agg backend straight to PNG files next to the
CSV output; nothing here opens a window or needs a display.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402 - backend must be pinned first
import numpy as np  # noqa: E402

_DPI = 120


def _save(fig, path: Path):
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def _grid_panel(ax, grid, values, label):
    if grid.ndim == 1:
        ax.plot(grid.axes[0], values, lw=1.5)
        ax.set_xlabel("x")
        ax.set_ylabel(label)
    else:
        z = np.asarray(values).reshape(grid.shape)
        mesh = ax.pcolormesh(grid.axes[1], grid.axes[0], z, shading="nearest")
        ax.set_xlabel("x2")
        ax.set_ylabel("x1")
        ax.figure.colorbar(mesh, ax=ax, label=label)


def render_population(out_dir: Path, population):
    fig, ax = plt.subplots(figsize=(6, 4))
    g = population.grid
    if g.ndim == 1:
        ax.bar(g.axes[0], population.weights,
               width=0.9 * np.min(np.diff(g.axes[0])), align="center")
        ax.set_xlabel("x")
        ax.set_ylabel("mass")
    else:
        _grid_panel(ax, g, population.weights, "mass")
    ax.set_title("population")
    _save(fig, out_dir / "population.png")


def render_value(out_dir: Path, value):
    fig, ax = plt.subplots(figsize=(6, 4))
    _grid_panel(ax, value.grid, value.values, "value")
    ax.set_title("value function")
    _save(fig, out_dir / "value.png")


def render_policy(out_dir: Path, policy):
    fig, ax = plt.subplots(figsize=(6, 4))
    _grid_panel(ax, policy.grid, policy.action_values, "action")
    ax.set_title("policy")
    _save(fig, out_dir / "policy.png")


def render_trace(out_dir: Path, trace):
    if not trace:
        return
    fig, ax = plt.subplots(figsize=(6, 4))
    its = [t["iteration"] for t in trace]
    ax.semilogy(its, [max(t["residual"], 1e-17) for t in trace], label="residual")
    ax.semilogy(its, [max(t["aggregator_gap"], 1e-17) for t in trace],
                label="aggregator gap", ls="--")
    ax.set_xlabel("outer iteration")
    ax.legend()
    ax.set_title("convergence trace")
    _save(fig, out_dir / "trace.png")


def render_sweep(out_dir: Path, sweep, parameter: str):
    fig, ax = plt.subplots(figsize=(6, 4))
    solved = [
        (v, r.aggregator_at_eq)
        for v, r in zip(sweep.parameter_values, sweep.results)
        if r is not None
    ]
    if solved:
        xs, ys = zip(*solved)
        ax.plot(xs, ys, marker="o")
    ax.set_xlabel(parameter)
    ax.set_ylabel("aggregator")
    ax.set_title(f"equilibrium aggregator vs {parameter}")
    _save(fig, out_dir / "sweep.png")


def render_sim(out_dir: Path, report):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(report.times, [max(d, 1e-17) for d in report.distances])
    ax.set_xlabel("step")
    ax.set_ylabel("distance to equilibrium")
    ax.set_title(f"panel of {report.agents} agents")
    _save(fig, out_dir / "sim_distance.png")


def render_all(out_dir, spec=None, result=None, sweep=None, parameter=None, sim=None):
    """Render whatever artifacts the caller has; missing pieces are skipped."""
    out_dir = Path(out_dir)
    if result is not None:
        render_population(out_dir, result.population)
        render_value(out_dir, result.value)
        render_policy(out_dir, result.policy)
        render_trace(out_dir, result.trace)
    if sweep is not None:
        render_sweep(out_dir, sweep, parameter or "parameter")
    if sim is not None:
        render_sim(out_dir, sim)
