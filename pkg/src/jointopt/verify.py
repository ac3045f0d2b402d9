"""Central-difference verification of every analytic gradient family.

The check perturbs raw design variables, re-runs the full pipeline (filter,
projection, masks, assembly, solve), and compares the finite-difference
quotients against the analytic gradients.  It backs both the CLI mode and
the randomized acceptance suite.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import analysis
from .config import ProblemConfig, build_problem
from .model import Assembly

log = logging.getLogger(__name__)

PASS_TOL = 1e-3


@dataclass
class GradientCheck:
    name: str
    max_rel_error: float
    n_samples: int

    @property
    def passed(self) -> bool:
        return self.max_rel_error < PASS_TOL


@dataclass
class GradientReport:
    checks: list[GradientCheck]

    @property
    def worst(self) -> float:
        return max(c.max_rel_error for c in self.checks)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def summary(self) -> str:
        lines = []
        for c in self.checks:
            status = "PASS" if c.passed else "FAIL"
            lines.append(
                f"{c.name:<28s} max rel err {c.max_rel_error:.3e} "
                f"({c.n_samples} samples)  {status}"
            )
        return "\n".join(lines)


def relative_errors(analytic: np.ndarray, fd: np.ndarray) -> np.ndarray:
    """Element-wise relative error with a floor at 0.01% of the largest
    gradient entry, below which values are finite-difference noise."""
    analytic = np.atleast_1d(np.asarray(analytic, dtype=float))
    fd = np.atleast_1d(np.asarray(fd, dtype=float))
    scale = max(np.abs(analytic).max(), np.abs(fd).max(), 1e-300)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(fd)), 1e-4 * scale)
    return np.abs(analytic - fd) / denom


def central_difference(fun, x0: np.ndarray, indices, step: float) -> np.ndarray:
    out = np.empty(len(indices))
    for k, i in enumerate(indices):
        x = x0.copy()
        x[i] = x0[i] + step
        f_plus = fun(x)
        x[i] = x0[i] - step
        f_minus = fun(x)
        out[k] = (f_plus - f_minus) / (2.0 * step)
    return out


def _jittered_design(
    assembly: Assembly, rho0, x0, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Randomize the start so the check exercises non-uniform fields, and
    keep joints off the element grid lines (one-sided weight derivatives)."""
    rho = np.clip(rho0 + rng.uniform(-0.15, 0.15, size=assembly.n_e), 0.2, 0.85)
    x = np.asarray(x0, dtype=float).copy()
    if x.size:
        x += rng.uniform(0.05, 0.45, size=x.shape) * rng.choice([-1.0, 1.0], x.shape)
    return rho, x


def verify_gradients(
    config: ProblemConfig,
    samples: int = 8,
    rho_step: float = 1e-5,
    x_step: float = 1e-6,
    seed: int = 0,
) -> GradientReport:
    """Check dc/drho, dc/dx, volume, and minimum-distance gradients by FD."""
    assembly, rho0, x0 = build_problem(config)
    rng = np.random.default_rng(seed)
    rho, x = _jittered_design(assembly, rho0, x0, rng)
    beta = config.schedule.beta_at(0)
    n_e, n_j = assembly.n_e, assembly.n_j
    failsafe = config.objective.kind == "failsafe"

    state = assembly.prepare(rho, x, beta)
    gamma = None
    cases = []
    if failsafe:
        nominal = assembly.solve_case(state)
        gamma = config.objective.gamma_factor / nominal.total
        cases = analysis.enumerate_failures(n_j, config.objective.failure_mode)

    def objective_value(rho_v, x_v) -> float:
        st = assembly.prepare(rho_v, x_v, beta)
        if failsafe:
            ev = analysis.evaluate_failure_objective(
                assembly, st, cases, config.objective.degradation, gamma
            )
            return ev.value
        return assembly.solve_case(st).total

    if failsafe:
        ev = analysis.evaluate_failure_objective(
            assembly, state, cases, config.objective.degradation, gamma
        )
        obj_grad_rho, obj_grad_x = ev.grad_rho, ev.grad_x
        obj_name = "objective(KS)"
    else:
        _, obj_grad_rho, obj_grad_x, _ = analysis.nominal_objective(assembly, state)
        obj_name = "objective(compliance)"

    element_sample = rng.choice(n_e, size=min(samples, n_e), replace=False)
    checks = []

    fd = central_difference(
        lambda r: objective_value(r, x), rho, element_sample, rho_step
    )
    checks.append(
        GradientCheck(
            f"{obj_name}/drho",
            float(relative_errors(obj_grad_rho[element_sample], fd).max()),
            element_sample.size,
        )
    )

    if n_j:
        flat = x.ravel()
        fd = central_difference(
            lambda xv: objective_value(rho, xv.reshape(n_j, 2)),
            flat,
            range(flat.size),
            x_step,
        )
        checks.append(
            GradientCheck(
                f"{obj_name}/dx",
                float(relative_errors(obj_grad_x.ravel(), fd).max()),
                flat.size,
            )
        )

    for scope in ("global", "per_part"):
        rows = analysis.volume_constraint(assembly, state, 0.5, scope)

        def volume_values(rho_v, x_v):
            st = assembly.prepare(rho_v, x_v, beta)
            vals = analysis.volume_constraint(assembly, st, 0.5, scope)
            return np.array([v.value for v in vals])

        errs = []
        for i in element_sample:
            r_p = rho.copy(); r_p[i] += rho_step
            r_m = rho.copy(); r_m[i] -= rho_step
            fd_col = (volume_values(r_p, x) - volume_values(r_m, x)) / (2 * rho_step)
            ana_col = np.array([row.grad_rho[i] for row in rows])
            errs.append(relative_errors(ana_col, fd_col))
        n_checked = element_sample.size
        if n_j:
            flat = x.ravel()
            for i in range(flat.size):
                xp = flat.copy(); xp[i] += x_step
                xm = flat.copy(); xm[i] -= x_step
                fd_col = (
                    volume_values(rho, xp.reshape(n_j, 2))
                    - volume_values(rho, xm.reshape(n_j, 2))
                ) / (2 * x_step)
                ana_col = np.array([row.grad_x.ravel()[i] for row in rows])
                errs.append(relative_errors(ana_col, fd_col))
            n_checked += flat.size
        checks.append(
            GradientCheck(
                f"volume({scope})",
                float(np.max([e.max() for e in errs])),
                n_checked,
            )
        )

    if config.distance is not None and n_j >= 2:
        eps = config.distance.epsilon or 0.01 * assembly.meshes[0].element_size
        row = analysis.min_distance_constraint(
            x, config.distance.d0, config.distance.exponent, eps
        )
        flat = x.ravel()
        fd = central_difference(
            lambda xv: analysis.min_distance_constraint(
                xv.reshape(n_j, 2), config.distance.d0,
                config.distance.exponent, eps,
            ).value,
            flat,
            range(flat.size),
            x_step,
        )
        checks.append(
            GradientCheck(
                "min_distance",
                float(relative_errors(row.grad_x.ravel(), fd).max()),
                flat.size,
            )
        )

    report = GradientReport(checks)
    log.info("gradient verification:\n%s", report.summary())
    return report
