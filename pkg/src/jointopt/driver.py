"""The optimization loop: projection continuation, MMA updates, history
recording, and artifact export."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analysis
from .config import ProblemConfig, build_problem, joint_bound_arrays
from .mma import MmaState, mma_step
from .model import Assembly, CaseResponse, ModelState

log = logging.getLogger(__name__)

# Objective values fed to MMA are normalized to ~100 at each reference
# refresh so the subproblem penalty constants keep their usual meaning.
OBJECTIVE_TARGET = 100.0
KS_SPREAD = 20.0


class OptimizationError(RuntimeError):
    """Aborted run; carries a diagnostic snapshot for the dump file."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass
class IterationRecord:
    iteration: int
    objective: float
    c_material: float
    c_joint: float
    constraints: tuple[float, ...]
    beta: float
    change: float
    positions: np.ndarray


@dataclass
class RunResult:
    config: ProblemConfig
    assembly: Assembly
    history: list[IterationRecord]
    constraint_names: list[str]
    final_state: ModelState
    final_response: CaseResponse
    final_constraints: list[analysis.ConstraintValue]
    final_positions: np.ndarray
    final_failure: analysis.FailureEvaluation | None = None
    gamma: float | None = None

    @property
    def final_compliance(self) -> float:
        return self.final_response.total


def _constraint_rows(
    assembly: Assembly,
    state: ModelState,
    config: ProblemConfig,
) -> list[analysis.ConstraintValue]:
    rows = analysis.volume_constraint(
        assembly, state, config.volume.limit, config.volume.scope
    )
    if config.distance is not None:
        eps = config.distance.epsilon
        if eps is None:
            eps = 0.01 * assembly.meshes[0].element_size
        rows.append(
            analysis.min_distance_constraint(
                state.positions,
                config.distance.d0,
                config.distance.exponent,
                eps,
            )
        )
    return rows


def run_optimization(config: ProblemConfig, callback=None) -> RunResult:
    """Execute the configured number of iterations and return the history.

    The loop per iteration: density fields -> masks -> assemble -> solve
    (all failure cases when enabled) -> gradients -> MMA step.  Deterministic
    for a fixed configuration.
    """
    assembly, rho, positions = build_problem(config)
    n_e, n_j = assembly.n_e, assembly.n_j
    failsafe = config.objective.kind == "failsafe"
    cases = (
        analysis.enumerate_failures(n_j, config.objective.failure_mode)
        if failsafe
        else []
    )
    if n_j:
        x_lower, x_upper = joint_bound_arrays(assembly)
        lower = np.concatenate([np.zeros(n_e), x_lower.ravel()])
        upper = np.concatenate([np.ones(n_e), x_upper.ravel()])
    else:
        lower = np.zeros(n_e)
        upper = np.ones(n_e)

    mma_state = MmaState.fresh(lower.size)
    history: list[IterationRecord] = []
    constraint_names: list[str] = []
    gamma = None
    obj_scale = 1.0
    beta_prev = None

    for it in range(config.schedule.iterations):
        beta = config.schedule.beta_at(it)
        state = assembly.prepare(rho, positions, beta)

        if beta != beta_prev:
            # Reference compliance of the intact assembly anchors both the
            # aggregation factor and the objective normalization.
            nominal = assembly.solve_case(state)
            c_ref = nominal.total
            gamma = config.objective.gamma_factor / c_ref
            obj_scale = OBJECTIVE_TARGET / c_ref
            beta_prev = beta
        else:
            nominal = None

        if failsafe:
            evaluation = analysis.evaluate_failure_objective(
                assembly, state, cases, config.objective.degradation, gamma
            )
            objective = evaluation.value
            grad_rho, grad_x = evaluation.grad_rho, evaluation.grad_x
            # History carries the split of the worst (design-driving) case.
            c_material = evaluation.case_material[evaluation.worst_case]
            c_joint = evaluation.case_joint[evaluation.worst_case]
        else:
            response = nominal if nominal is not None else assembly.solve_case(state)
            objective, grad_rho, grad_x, response = analysis.nominal_objective(
                assembly, state, response
            )
            c_material, c_joint = response.material, response.joint

        if not np.isfinite(objective):
            raise OptimizationError(
                f"objective became non-finite at iteration {it}",
                diagnostics=_diagnostics(it, objective, rho, positions, history),
            )

        rows = _constraint_rows(assembly, state, config)
        if not constraint_names:
            constraint_names = [r.name for r in rows]

        h = np.array([r.value for r in rows])
        dh = np.zeros((len(rows), lower.size))
        scale_h = np.ones(len(rows))
        for i, r in enumerate(rows):
            if r.name == "min_distance":
                # Length units; rescaled so all constraints are O(1) for MMA.
                scale_h[i] = config.distance.d0
            if r.grad_rho.size:
                dh[i, :n_e] = r.grad_rho
            if n_j:
                dh[i, n_e:] = r.grad_x.ravel()
        dh /= scale_h[:, None]

        design = (
            np.concatenate([rho, positions.ravel()]) if n_j else rho.copy()
        )
        grad = (
            np.concatenate([grad_rho, grad_x.ravel()]) if n_j else grad_rho
        )
        try:
            new_design, mma_state, _ = mma_step(
                design,
                objective * obj_scale,
                grad * obj_scale,
                h / scale_h,
                dh,
                lower,
                upper,
                mma_state,
            )
        except Exception as exc:
            raise OptimizationError(
                f"MMA step failed at iteration {it}: {exc}",
                diagnostics=_diagnostics(it, objective, rho, positions, history),
            ) from exc

        change = float(np.abs((new_design - design) / (upper - lower)).max())
        history.append(
            IterationRecord(
                iteration=it,
                objective=float(objective),
                c_material=float(c_material),
                c_joint=float(c_joint),
                constraints=tuple(float(v) for v in h),
                beta=float(beta),
                change=change,
                positions=positions.copy(),
            )
        )
        if callback is not None:
            callback(history[-1])
        if it % 10 == 0 or it == config.schedule.iterations - 1:
            log.info(
                "it %4d  obj %.4f  h_max %+.4f  beta %g  change %.4f",
                it, objective, h.max() if h.size else 0.0, beta, change,
            )

        rho = new_design[:n_e]
        positions = new_design[n_e:].reshape(n_j, 2)

    # Final evaluation of the produced design.
    beta = config.schedule.beta_at(max(config.schedule.iterations - 1, 0))
    final_state = assembly.prepare(rho, positions, beta)
    final_response = assembly.solve_case(final_state)
    final_rows = _constraint_rows(assembly, final_state, config)
    if not constraint_names:
        constraint_names = [r.name for r in final_rows]
    final_failure = None
    if failsafe:
        if gamma is None:
            gamma = config.objective.gamma_factor / final_response.total
        final_failure = analysis.evaluate_failure_objective(
            assembly, final_state, cases, config.objective.degradation, gamma
        )
    return RunResult(
        config=config,
        assembly=assembly,
        history=history,
        constraint_names=constraint_names,
        final_state=final_state,
        final_response=final_response,
        final_constraints=final_rows,
        final_positions=positions,
        final_failure=final_failure,
        gamma=gamma,
    )


def _diagnostics(it, objective, rho, positions, history) -> dict:
    return {
        "iteration": it,
        "objective": float(objective),
        "rho_min": float(np.min(rho)),
        "rho_max": float(np.max(rho)),
        "positions": np.asarray(positions).tolist(),
        "history_objectives": [r.objective for r in history[-20:]],
    }


# ----------------------------------------------------------------------
# export
# ----------------------------------------------------------------------


def density_grid(assembly: Assembly, rho_hat: np.ndarray, part_index: int) -> np.ndarray:
    """Part densities as a (ny, nx) grid, top grid row first (image order)."""
    mesh = assembly.meshes[part_index]
    sl = assembly.part_element_slices[part_index]
    return rho_hat[sl].reshape(mesh.ny, mesh.nx)[::-1]


def _write_pgm(path: Path, grid: np.ndarray):
    """Binary portable graymap, one pixel per element, solid drawn dark."""
    ny, nx = grid.shape
    data = np.round(255.0 * (1.0 - np.clip(grid, 0.0, 1.0))).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{nx} {ny}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def _write_grid_csv(path: Path, grid: np.ndarray):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in grid:
            writer.writerow([f"{v:.6f}" for v in row])


def export_results(
    result: RunResult, out_dir, formats=("pgm", "csv", "png")
) -> list[Path]:
    """Write density images/grids, trajectory and history CSVs, a manifest,
    and (optionally) rendered figures.  Returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    assembly = result.assembly
    rho_hat = result.final_state.rho_hat
    written: list[Path] = []

    for i, mesh in enumerate(assembly.meshes):
        grid = density_grid(assembly, rho_hat, i)
        if "pgm" in formats:
            path = out / f"part{mesh.part_id}_density.pgm"
            _write_pgm(path, grid)
            written.append(path)
        if "csv" in formats:
            path = out / f"part{mesh.part_id}_density.csv"
            _write_grid_csv(path, grid)
            written.append(path)

    if "csv" in formats:
        path = out / "history.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["iteration", "objective", "c_material", "c_joint", "beta", "change"]
                + result.constraint_names
            )
            for rec in result.history:
                writer.writerow(
                    [
                        rec.iteration,
                        f"{rec.objective:.10g}",
                        f"{rec.c_material:.10g}",
                        f"{rec.c_joint:.10g}",
                        f"{rec.beta:g}",
                        f"{rec.change:.10g}",
                    ]
                    + [f"{v:.10g}" for v in rec.constraints]
                )
        written.append(path)

        path = out / "joint_trajectory.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "joint", "x", "y"])
            for rec in result.history:
                for j, (px, py) in enumerate(rec.positions):
                    writer.writerow([rec.iteration, j, f"{px:.10g}", f"{py:.10g}"])
        written.append(path)

    manifest = {
        "config": result.config.resolved,
        "final": {
            "compliance": result.final_response.total,
            "c_material": result.final_response.material,
            "c_joint": result.final_response.joint,
            "constraints": {
                r.name: r.value for r in result.final_constraints
            },
            "positions": result.final_positions.tolist(),
        },
        "iterations": len(result.history),
    }
    if result.final_failure is not None:
        manifest["final"]["failure_case_compliances"] = (
            result.final_failure.case_values.tolist()
        )
        manifest["final"]["ks_objective"] = result.final_failure.value
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2))
    written.append(path)

    if "png" in formats:
        from . import plots

        written.extend(plots.render_all(result, out))
    return written
