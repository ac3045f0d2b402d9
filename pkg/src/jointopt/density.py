"""Density pipeline: conic filtering per part, smooth projection, and the
power-law stiffness interpolation, plus the reverse chain rule shared by all
density gradients."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .mesh import PartMesh


@dataclass(frozen=True)
class SimpLaw:
    """Power-law interpolation E = e_min + (e0 - e_min) * rho^p.

    ``e0``/``e_min`` may be scalars or per-element arrays.
    """

    e0: np.ndarray | float = 1.0
    e_min: np.ndarray | float = 1e-9
    p: float = 3.0

    def __post_init__(self):
        if np.any(np.asarray(self.e_min) > 1e-6 * np.asarray(self.e0)):
            raise ValueError("e_min must be at most 1e-6 * e0")
        if self.p < 1.0:
            raise ValueError(f"penalty exponent must be >= 1, got {self.p}")

    def modulus(self, rho_hat: np.ndarray) -> np.ndarray:
        return self.e_min + (self.e0 - self.e_min) * rho_hat**self.p

    def slope(self, rho_hat: np.ndarray) -> np.ndarray:
        return self.p * (self.e0 - self.e_min) * rho_hat ** (self.p - 1.0)


def build_filter(mesh: PartMesh, radius: float) -> sp.csr_matrix:
    """Normalized conic density filter for one part.

    Row i holds w(c_j - c_i) v_j / sum_k w(c_k - c_i) v_k with
    w(x) = max(radius - |x|, 0), restricted to elements of this part only.
    A radius at or below the element size degenerates to the identity.
    """
    if radius <= 0:
        raise ValueError(f"filter radius must be positive, got {radius}")
    h = mesh.element_size
    nx, ny = mesh.nx, mesh.ny
    reach = int(np.ceil(radius / h))
    v = h * h

    rows, cols, data = [], [], []
    col_idx = np.arange(nx)
    row_idx = np.arange(ny)
    for di in range(-reach, reach + 1):
        for dj in range(-reach, reach + 1):
            w = radius - h * np.hypot(di, dj)
            if w <= 0.0:
                continue
            rr = row_idx[(row_idx + di >= 0) & (row_idx + di < ny)]
            cc = col_idx[(col_idx + dj >= 0) & (col_idx + dj < nx)]
            if rr.size == 0 or cc.size == 0:
                continue
            base = rr[:, None] * nx + cc[None, :]
            rows.append(base.ravel())
            cols.append(((rr[:, None] + di) * nx + (cc[None, :] + dj)).ravel())
            data.append(np.full(base.size, w * v))
    mat = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(mesh.n_elements, mesh.n_elements),
    ).tocsr()
    row_sums = np.asarray(mat.sum(axis=1)).ravel()
    return sp.diags(1.0 / row_sums) @ mat


def project(rho_tilde: np.ndarray, beta: float, eta: float = 0.5) -> np.ndarray:
    """Smooth threshold of the filtered field toward 0/1."""
    if beta <= 0:
        raise ValueError(f"projection steepness must be positive, got {beta}")
    if not 0.0 < eta < 1.0:
        raise ValueError(f"projection threshold must lie in (0,1), got {eta}")
    denom = np.tanh(beta * eta) + np.tanh(beta * (1.0 - eta))
    return (np.tanh(beta * eta) + np.tanh(beta * (rho_tilde - eta))) / denom


def project_derivative(
    rho_tilde: np.ndarray, beta: float, eta: float = 0.5
) -> np.ndarray:
    denom = np.tanh(beta * eta) + np.tanh(beta * (1.0 - eta))
    return beta * (1.0 - np.tanh(beta * (rho_tilde - eta)) ** 2) / denom


def simp_modulus(rho_hat: np.ndarray, law: SimpLaw) -> np.ndarray:
    return law.modulus(np.asarray(rho_hat, dtype=float))


@dataclass
class DensityState:
    """The design field and its filtered/projected companions.

    Built by :meth:`forward`, so the three fields are always consistent.
    """

    rho: np.ndarray
    rho_tilde: np.ndarray
    rho_bar: np.ndarray
    beta: float
    eta: float
    filter_op: sp.csr_matrix = field(repr=False)

    @classmethod
    def forward(
        cls, rho: np.ndarray, filter_op: sp.csr_matrix, beta: float, eta: float = 0.5
    ) -> "DensityState":
        rho = np.asarray(rho, dtype=float)
        rho_tilde = filter_op @ rho
        return cls(rho, rho_tilde, project(rho_tilde, beta, eta), beta, eta, filter_op)

    def projection_slope(self) -> np.ndarray:
        return project_derivative(self.rho_tilde, self.beta, self.eta)


def chain_to_design(
    d_rho_hat: np.ndarray, state: DensityState, mask_diag: np.ndarray | None = None
) -> np.ndarray:
    """Pull a gradient w.r.t. the modified densities back to the raw design.

    Applies the diagonal mask factor, the projection slope, then the filter
    transpose.  ``mask_diag=None`` means no joints modify the field.
    """
    g = np.asarray(d_rho_hat, dtype=float)
    if mask_diag is not None:
        g = g * mask_diag
    g = g * state.projection_slope()
    return state.filter_op.T @ g
