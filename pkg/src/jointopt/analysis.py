"""Objectives and constraints with analytic design gradients.

Compliance gradients combine the self-adjoint density term with two position
terms: the direct one through the coupling rows (a Lagrange pairing) and the
indirect one through the moving masks.  The fail-safe objective aggregates
per-failure-case compliances with a stabilized log-sum-exp.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .density import chain_to_design
from .joints import coupling_position_derivative
from .mesh import SolveError
from .model import Assembly, CaseResponse, ModelState


@dataclass(frozen=True)
class ComplianceResult:
    """Total strain energy split into part and joint contributions."""

    total: float
    material: float
    joint: float
    per_part: np.ndarray
    per_joint: np.ndarray


@dataclass(frozen=True)
class FailureCase:
    """A set of simultaneously failed joints."""

    failed_joints: tuple[int, ...]


@dataclass
class ConstraintValue:
    """Constraint value with gradients over both design variable groups."""

    value: float
    grad_rho: np.ndarray           # (n_elements,)
    grad_x: np.ndarray             # (n_joints, 2)
    name: str = ""


@dataclass
class FailureEvaluation:
    """Aggregated worst-case objective and its gradients."""

    value: float
    grad_rho: np.ndarray
    grad_x: np.ndarray
    case_values: np.ndarray
    weights: np.ndarray
    worst_case: int
    case_material: np.ndarray = None
    case_joint: np.ndarray = None


def compliance(response: CaseResponse) -> ComplianceResult:
    """Compliance split c = c_material + c_joint from a solved case."""
    return ComplianceResult(
        total=response.total,
        material=response.material,
        joint=response.joint,
        per_part=response.per_part,
        per_joint=response.per_joint,
    )


def enumerate_failures(n_j: int, m: int) -> list[FailureCase]:
    """All C(n_j, m) failure combinations in lexicographic order."""
    if not 1 <= m <= n_j:
        raise ValueError(f"failure mode must lie in [1, {n_j}], got {m}")
    return [FailureCase(c) for c in itertools.combinations(range(n_j), m)]


def case_scale(n_j: int, case: FailureCase, degradation: float) -> np.ndarray:
    """Per-joint stiffness multipliers with the failed joints degraded."""
    scale = np.ones(n_j)
    scale[list(case.failed_joints)] = degradation
    return scale


def ks_aggregate(values, gamma: float) -> tuple[float, np.ndarray]:
    """Stabilized log-sum-exp upper bound of the maximum.

    Returns the aggregate and the weights exp(gamma*(c_d - c_KS)), which sum
    to one and scale each case's gradient contribution.
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("cannot aggregate an empty value list")
    if gamma <= 0:
        raise ValueError(f"aggregation factor must be positive, got {gamma}")
    peak = values.max()
    shifted = np.exp(gamma * (values - peak))
    c_ks = peak + np.log(shifted.sum()) / gamma
    weights = np.exp(gamma * (values - c_ks))
    return float(c_ks), weights


def _compliance_density_slope(
    assembly: Assembly, state: ModelState, response: CaseResponse
) -> np.ndarray:
    """d(compliance)/d(rho_hat), the self-adjoint sensitivity."""
    return -assembly.simp.slope(state.rho_hat) * response.element_energy


def grad_compliance_density(
    assembly: Assembly, state: ModelState, response: CaseResponse
) -> np.ndarray:
    """d(compliance)/d(rho), chained through masks, projection, and filter."""
    slope = _compliance_density_slope(assembly, state, response)
    return chain_to_design(slope, state.density, state.mask_diag)


def _position_gradient(
    assembly: Assembly,
    state: ModelState,
    weighted: list[tuple[float, CaseResponse]],
    d_rho_hat_slope: np.ndarray,
) -> np.ndarray:
    """Weighted coupling term plus the mask term for all joint coordinates.

    The coupling contribution of each solved case is -2 lam^T (dG/dx) u_m,
    the Lagrange pairing induced by the symmetric augmented matrix; the mask
    term reuses the (already weighted) rho_hat slope.
    """
    grad = np.zeros((assembly.n_j, 2))
    if assembly.n_j == 0:
        return grad
    for i in range(assembly.n_j):
        d_dx, d_dy = coupling_position_derivative(i, state.coupling)
        for weight, resp in weighted:
            lam, u_m = resp.solution.lam, resp.solution.u_m
            grad[i, 0] += weight * (-2.0 * (lam @ (d_dx @ u_m)))
            grad[i, 1] += weight * (-2.0 * (lam @ (d_dy @ u_m)))
        grad[i, 0] += d_rho_hat_slope @ state.d_rho_hat_dx[i, 0]
        grad[i, 1] += d_rho_hat_slope @ state.d_rho_hat_dx[i, 1]
    return grad


def grad_compliance_position(
    assembly: Assembly, state: ModelState, response: CaseResponse
) -> np.ndarray:
    """d(compliance)/d(joint positions), shape (n_joints, 2)."""
    slope = _compliance_density_slope(assembly, state, response)
    return _position_gradient(assembly, state, [(1.0, response)], slope)


def nominal_objective(
    assembly: Assembly, state: ModelState, response: CaseResponse | None = None
) -> tuple[float, np.ndarray, np.ndarray, CaseResponse]:
    """Compliance of the intact assembly with both gradient blocks."""
    if response is None:
        response = assembly.solve_case(state)
    grad_rho = grad_compliance_density(assembly, state, response)
    grad_x = grad_compliance_position(assembly, state, response)
    return response.total, grad_rho, grad_x, response


def evaluate_failure_objective(
    assembly: Assembly,
    state: ModelState,
    cases: list[FailureCase],
    degradation: float,
    gamma: float,
) -> FailureEvaluation:
    """Aggregate the compliances of all failure cases of the highest mode.

    Each case re-solves the system with the failed joints' stiffness scaled
    by ``degradation``; coupling rows stay, so failed springs remain
    kinematically tied but carry ~zero stiffness.
    """
    responses = []
    for case in cases:
        scale = case_scale(assembly.n_j, case, degradation)
        try:
            responses.append(assembly.solve_case(state, joint_scale=scale))
        except SolveError as exc:
            raise SolveError(
                f"failure case {case.failed_joints} is singular: {exc}"
            ) from exc
    values = np.array([r.total for r in responses])
    c_ks, weights = ks_aggregate(values, gamma)

    slope = np.zeros(assembly.n_e)
    for w, resp in zip(weights, responses):
        slope += w * _compliance_density_slope(assembly, state, resp)
    grad_rho = chain_to_design(slope, state.density, state.mask_diag)
    grad_x = _position_gradient(
        assembly, state, list(zip(weights, responses)), slope
    )
    return FailureEvaluation(
        value=c_ks,
        grad_rho=grad_rho,
        grad_x=grad_x,
        case_values=values,
        weights=weights,
        worst_case=int(values.argmax()),
        case_material=np.array([r.material for r in responses]),
        case_joint=np.array([r.joint for r in responses]),
    )


def volume_constraint(
    assembly: Assembly,
    state: ModelState,
    limit: float,
    scope: str = "global",
) -> list[ConstraintValue]:
    """h = V/V0 - limit, globally or once per part.

    Gradients chain the piecewise-constant volume sensitivity v_j / V0
    through the same mask/projection/filter stack as the objective.
    """
    if not 0.0 < limit <= 1.0:
        raise ValueError(f"volume fraction limit must lie in (0,1], got {limit}")
    if scope == "global":
        scopes = [(slice(None), "volume")]
    elif scope == "per_part":
        scopes = [
            (esl, f"volume_part{mesh.part_id}")
            for esl, mesh in zip(assembly.part_element_slices, assembly.meshes)
        ]
    else:
        raise ValueError(f"unknown volume scope {scope!r}")

    out = []
    for esl, name in scopes:
        v = assembly.volumes
        v0 = v[esl].sum()
        value = float(state.rho_hat[esl] @ v[esl] / v0 - limit)
        dh_dhat = np.zeros(assembly.n_e)
        dh_dhat[esl] = v[esl] / v0
        grad_rho = chain_to_design(dh_dhat, state.density, state.mask_diag)
        grad_x = np.zeros((assembly.n_j, 2))
        for i in range(assembly.n_j):
            grad_x[i, 0] = dh_dhat @ state.d_rho_hat_dx[i, 0]
            grad_x[i, 1] = dh_dhat @ state.d_rho_hat_dx[i, 1]
        out.append(ConstraintValue(value, grad_rho, grad_x, name))
    return out


def min_distance_constraint(
    positions: np.ndarray,
    d0: float,
    exponent: float = 8.0,
    epsilon: float = 0.01,
) -> ConstraintValue:
    """Aggregated minimum-distance constraint over all joint pairs.

    The squared distances are mapped reciprocally so a p-norm can bound the
    minimum; ``epsilon`` keeps coincident points finite.  Negative values
    mean all pairs are farther apart than ``d0``.
    """
    x = np.asarray(positions, dtype=float).reshape(-1, 2)
    n_j = x.shape[0]
    if n_j < 2:
        raise ValueError("minimum distance needs at least two joints")
    p = float(exponent)
    pairs = [
        (i, j, float(np.sum((x[j] - x[i]) ** 2)))
        for i in range(n_j)
        for j in range(i)
    ]
    total = float(sum((s + epsilon) ** (-p) for _, _, s in pairs))
    value = d0 - total ** (-1.0 / (2.0 * p))

    grad_x = np.zeros((n_j, 2))
    prefactor = -0.5 * total ** (-1.0 / (2.0 * p) - 1.0)
    for i, j, s in pairs:
        t = (s + epsilon) ** (-p - 1.0)
        diff = x[j] - x[i]
        grad_x[i] += prefactor * t * (-2.0 * diff)
        grad_x[j] += prefactor * t * (2.0 * diff)
    return ConstraintValue(
        float(value), np.zeros(0), grad_x, name="min_distance"
    )


def pairwise_distances(positions: np.ndarray) -> np.ndarray:
    """All pairwise reference-point distances (diagnostics and acceptance)."""
    x = np.asarray(positions, dtype=float).reshape(-1, 2)
    out = []
    for i in range(x.shape[0]):
        for j in range(i):
            out.append(float(np.hypot(*(x[j] - x[i]))))
    return np.array(out)
