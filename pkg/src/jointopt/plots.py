"""Figure rendering for run results (headless matplotlib)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.patches import Circle  # noqa: E402


def _draw_joint_markers(ax, assembly, positions):
    for jt, (px, py) in zip(assembly.joints, positions):
        ax.plot(px, py, "+", color="tab:blue", markersize=8)
        if jt.solid_radius:
            ax.add_patch(
                Circle((px, py), jt.solid_radius, fill=False,
                       color="tab:green", linewidth=0.8)
            )
        if jt.hole_radius:
            ax.add_patch(
                Circle((px, py), jt.hole_radius, fill=False,
                       color="tab:red", linewidth=0.8)
            )


def save_part_density(result, part_index: int, path: Path):
    from .driver import density_grid

    assembly = result.assembly
    mesh = assembly.meshes[part_index]
    grid = density_grid(assembly, result.final_state.rho_hat, part_index)
    h = mesh.element_size
    extent = (
        mesh.origin[0],
        mesh.origin[0] + mesh.nx * h,
        mesh.origin[1],
        mesh.origin[1] + mesh.ny * h,
    )
    fig, ax = plt.subplots(figsize=(6, 6 * mesh.ny / mesh.nx + 0.5))
    ax.imshow(grid, cmap="gray_r", vmin=0.0, vmax=1.0, extent=extent,
              origin="upper", interpolation="nearest")
    _draw_joint_markers(ax, assembly, result.final_positions)
    ax.set_title(f"part {mesh.part_id} density")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)


def save_assembly(result, path: Path):
    """Max-composite of all part densities on the global bounding box."""
    from .driver import density_grid

    assembly = result.assembly
    fig, ax = plt.subplots(figsize=(8, 4))
    for i, mesh in enumerate(assembly.meshes):
        grid = density_grid(assembly, result.final_state.rho_hat, i)
        h = mesh.element_size
        extent = (
            mesh.origin[0],
            mesh.origin[0] + mesh.nx * h,
            mesh.origin[1],
            mesh.origin[1] + mesh.ny * h,
        )
        ax.imshow(
            grid, cmap="gray_r", vmin=0.0, vmax=1.0, extent=extent,
            origin="upper", interpolation="nearest",
            alpha=1.0 if i == 0 else 0.6,
        )
    _draw_joint_markers(ax, assembly, result.final_positions)
    ax.set_title("assembly (parts overlaid)")
    ax.autoscale()
    ax.set_aspect("equal")
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)


def save_history(result, path: Path):
    its = [r.iteration for r in result.history]
    if not its:
        fig, ax = plt.subplots()
        ax.set_title("no iterations recorded")
        fig.savefig(path, dpi=150)
        plt.close(fig)
        return
    objs = [r.objective for r in result.history]
    fig, (ax0, ax1) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    ax0.plot(its, objs, lw=1.2)
    ax0.set_ylabel("objective")
    ax0.grid(alpha=0.3)
    for name_idx, name in enumerate(result.constraint_names):
        ax1.plot(its, [r.constraints[name_idx] for r in result.history],
                 lw=1.0, label=name)
    ax1.axhline(0.0, color="k", lw=0.6)
    ax1.set_xlabel("iteration")
    ax1.set_ylabel("constraint value")
    ax1.legend(fontsize=8)
    ax1.grid(alpha=0.3)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)


def render_all(result, out_dir: Path) -> list[Path]:
    out = Path(out_dir)
    written = []
    for i, mesh in enumerate(result.assembly.meshes):
        path = out / f"part{mesh.part_id}_density.png"
        save_part_density(result, i, path)
        written.append(path)
    if len(result.assembly.meshes) > 1:
        path = out / "assembly.png"
        save_assembly(result, path)
        written.append(path)
    path = out / "history.png"
    save_history(result, path)
    written.append(path)
    return written
