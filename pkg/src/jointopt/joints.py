"""Joints: spring patterns, the joint stiffness block, and the coupling rows.

A joint is a pattern of two-node springs that moves rigidly with its
reference point.  Each spring node is a slave tied to the containing element
of one part by bilinear interpolation; one coupling equation per slave DOF
enters the system through Lagrange multipliers.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import PartMesh, shape_functions, shape_gradients


class CouplingError(ValueError):
    """A spring fell outside the domain of a part it must attach to."""


@dataclass(frozen=True)
class SpringPattern:
    """Spring offsets relative to the reference point, equal stiffness each."""

    offsets: np.ndarray  # (n_springs, 2)
    stiffness: float     # per spring

    @property
    def n_springs(self) -> int:
        return self.offsets.shape[0]

    @property
    def resultant(self) -> float:
        return self.stiffness * self.n_springs


def _ring(count: int, radius: float) -> np.ndarray:
    angles = 2.0 * np.pi * np.arange(count) / count
    return radius * np.column_stack([np.cos(angles), np.sin(angles)])


def generate_pattern(kind: str, radii, k_c: float) -> SpringPattern:
    """Concentric spring layouts used for the two connection types.

    ``circular`` (spot-weld style): 25 springs -- one at the reference point,
    8 at half the force-transfer radius, 16 at the full radius.  ``ring``
    (bolt style): 12 springs on each of the two given radii.  The per-spring
    stiffness is k_c / count so the resultant is exactly k_c.
    """
    radii = [float(r) for r in np.atleast_1d(radii)]
    if any(r <= 0 for r in radii):
        raise ValueError(f"pattern radii must be positive, got {radii}")
    if kind == "circular":
        if len(radii) != 1:
            raise ValueError("circular pattern takes a single force radius")
        r = radii[0]
        offsets = np.vstack([np.zeros((1, 2)), _ring(8, r / 2.0), _ring(16, r)])
    elif kind == "ring":
        if len(radii) != 2 or radii[1] <= radii[0]:
            raise ValueError("ring pattern takes two increasing radii")
        offsets = np.vstack([_ring(12, radii[0]), _ring(12, radii[1])])
    else:
        raise ValueError(f"unknown pattern kind {kind!r}")
    if k_c <= 0:
        raise ValueError(f"resultant stiffness must be positive, got {k_c}")
    return SpringPattern(offsets=offsets, stiffness=k_c / len(offsets))


@dataclass(frozen=True)
class Joint:
    """A fastener: movable reference point, spring pattern, and NDS shape."""

    ref_point: np.ndarray          # initial position of the reference point
    pattern: SpringPattern
    connected_parts: tuple[int, int]
    nds_mode: str                  # "hole" | "solid" | "ring"
    k_c: float
    solid_radius: float | None = None
    hole_radius: float | None = None
    bounds: tuple[float, float, float, float] | None = None  # xl, xu, yl, yu

    def __post_init__(self):
        if self.nds_mode not in ("hole", "solid", "ring"):
            raise ValueError(f"unknown NDS mode {self.nds_mode!r}")
        if self.nds_mode in ("solid", "ring") and not self.solid_radius:
            raise ValueError(f"mode {self.nds_mode!r} requires solid_radius")
        if self.nds_mode in ("hole", "ring") and not self.hole_radius:
            raise ValueError(f"mode {self.nds_mode!r} requires hole_radius")
        if self.k_c <= 0:
            raise ValueError("joint stiffness k_c must be positive")
        if len(self.connected_parts) != 2:
            raise ValueError("a joint connects exactly two parts")

    @property
    def outer_radius(self) -> float:
        """Radius of the largest geometric feature carried by the joint."""
        return max(self.solid_radius or 0.0, self.hole_radius or 0.0)

    @property
    def n_spring_dofs(self) -> int:
        return 4 * self.pattern.n_springs


def joint_dof_slices(joints: list[Joint]) -> list[slice]:
    """Slices of each joint's spring DOFs inside u_c (joint-major layout)."""
    slices, start = [], 0
    for jt in joints:
        slices.append(slice(start, start + jt.n_spring_dofs))
        start += jt.n_spring_dofs
    return slices


def assemble_joint_block(
    joints: list[Joint], scale: np.ndarray | None = None
) -> sp.csr_matrix:
    """Block-diagonal spring stiffness K_c over all joints.

    Each spring occupies 4 consecutive DOFs (Ax, Ay, Bx, By) and contributes
    the two-node block k*[[I, -I], [-I, I]].  ``scale`` holds an optional
    per-joint stiffness multiplier (used to degrade failed joints).
    """
    n_c = sum(jt.n_spring_dofs for jt in joints)
    if scale is None:
        scale = np.ones(len(joints))
    scale = np.asarray(scale, dtype=float)
    if scale.shape != (len(joints),):
        raise ValueError("need one stiffness scale per joint")
    rows, cols, data = [], [], []
    start = 0
    for jt, sc in zip(joints, scale):
        k = jt.pattern.stiffness * sc
        base = start + 4 * np.arange(jt.pattern.n_springs)
        for d in (0, 1):
            rows.extend([base + d, base + 2 + d, base + d, base + 2 + d])
            cols.extend([base + d, base + 2 + d, base + 2 + d, base + d])
            data.extend(
                [
                    np.full(base.size, k),
                    np.full(base.size, k),
                    np.full(base.size, -k),
                    np.full(base.size, -k),
                ]
            )
        start += jt.n_spring_dofs
    if not rows:
        return sp.csr_matrix((0, 0))
    return sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_c, n_c),
    ).tocsr()


@dataclass
class CouplingMatrix:
    """G over [u_m, u_c] plus the geometry needed for its x-derivative.

    Rows are ordered exactly like u_c (joint-major, spring-major, connected
    part A before B, x before y), so the u_c block of G is -I.  One
    "attachment" below is a (joint, spring, part) triple producing two rows.
    """

    matrix: sp.csr_matrix
    n_m: int
    n_c: int
    att_joint: np.ndarray       # (n_att,) owning joint index
    att_row: np.ndarray         # (n_att,) row of the attachment's x-equation
    att_xdofs: np.ndarray       # (n_att, 4) master x-DOFs (y-DOFs are +1)
    att_xi: np.ndarray          # (n_att, 2) local coordinates in [-1, 1]
    att_jacobian: np.ndarray    # (n_att,) d(xi)/d(position) = 2 / element_size


def _locate(mesh: PartMesh, point: np.ndarray) -> tuple[int, int, float, float]:
    """Containing element of a point using half-open cells [x, x+h)."""
    rel = (point - mesh.origin) / mesh.element_size
    ex, ey = int(np.floor(rel[0])), int(np.floor(rel[1]))
    if not (0 <= ex < mesh.nx and 0 <= ey < mesh.ny):
        raise CouplingError("point outside part domain")
    xi = 2.0 * (rel[0] - ex) - 1.0
    eta = 2.0 * (rel[1] - ey) - 1.0
    return ex, ey, xi, eta


def build_coupling(
    joints: list[Joint], positions: np.ndarray, meshes: list[PartMesh]
) -> CouplingMatrix:
    """Coupling rows tying every spring slave DOF to its part's element.

    ``positions`` holds the current reference points, shape (n_joints, 2).
    """
    positions = np.asarray(positions, dtype=float).reshape(len(joints), 2)
    n_m = sum(m.n_dofs for m in meshes)
    n_c = sum(jt.n_spring_dofs for jt in joints)
    mesh_by_id = {m.part_id: m for m in meshes}

    rows, cols, data = [], [], []
    att_joint, att_row, att_xdofs, att_xi, att_jac = [], [], [], [], []
    uc = 0
    for j, jt in enumerate(joints):
        for s, offset in enumerate(jt.pattern.offsets):
            point = positions[j] + offset
            for pid in jt.connected_parts:
                mesh = mesh_by_id[pid]
                try:
                    ex, ey, xi, eta = _locate(mesh, point)
                except CouplingError:
                    raise CouplingError(
                        f"spring {s} of joint {j} at {tuple(point)} lies "
                        f"outside part {pid}"
                    ) from None
                weights = shape_functions(xi, eta)
                nodes = mesh.element_nodes[ey * mesh.nx + ex]
                xdofs = 2 * nodes + mesh.dof_offset
                for d in (0, 1):
                    rows.extend([uc + d] * 4 + [uc + d])
                    cols.extend(list(xdofs + d) + [n_m + uc + d])
                    data.extend(list(weights) + [-1.0])
                att_joint.append(j)
                att_row.append(uc)
                att_xdofs.append(xdofs)
                att_xi.append((xi, eta))
                att_jac.append(2.0 / mesh.element_size)
                uc += 2
    matrix = sp.coo_matrix(
        (np.array(data), (np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64))),
        shape=(n_c, n_m + n_c),
    ).tocsr()
    return CouplingMatrix(
        matrix=matrix,
        n_m=n_m,
        n_c=n_c,
        att_joint=np.array(att_joint, dtype=np.int64),
        att_row=np.array(att_row, dtype=np.int64),
        att_xdofs=np.array(att_xdofs, dtype=np.int64).reshape(-1, 4),
        att_xi=np.array(att_xi, dtype=float).reshape(-1, 2),
        att_jacobian=np.array(att_jac, dtype=float),
    )


def coupling_position_derivative(
    joint_index: int, coupling: CouplingMatrix
) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """dG/dx and dG/dy of one joint over the material columns.

    The slave coefficients are constant, so the derivative lives entirely in
    the master-weight entries.  Every spring of the joint moves rigidly with
    the reference point, hence d(position)/d(x_joint) is the identity.
    """
    sel = coupling.att_joint == joint_index
    if not np.any(sel):
        raise IndexError(f"joint {joint_index} has no attachments")
    xi = coupling.att_xi[sel]
    jac = coupling.att_jacobian[sel]
    xdofs = coupling.att_xdofs[sel]
    xrows = coupling.att_row[sel]

    n_att = xi.shape[0]
    dn = np.empty((n_att, 4, 2))
    for i in range(n_att):
        dn[i] = shape_gradients(xi[i, 0], xi[i, 1])
    dwdx = dn[:, :, 0] * jac[:, None]
    dwdy = dn[:, :, 1] * jac[:, None]

    # Same weight derivatives appear in the x-equation (x master DOFs) and
    # the y-equation (y master DOFs) of each attachment.
    rows = np.concatenate([np.repeat(xrows, 4), np.repeat(xrows + 1, 4)])
    cols = np.concatenate([xdofs.ravel(), (xdofs + 1).ravel()])
    shape = (coupling.n_c, coupling.n_m)
    d_dx = sp.coo_matrix(
        (np.concatenate([dwdx.ravel(), dwdx.ravel()]), (rows, cols)), shape=shape
    ).tocsr()
    d_dy = sp.coo_matrix(
        (np.concatenate([dwdy.ravel(), dwdy.ravel()]), (rows, cols)), shape=shape
    ).tocsr()
    return d_dx, d_dy
