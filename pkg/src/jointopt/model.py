"""Problem assembly: meshes, joints, filter, and loads bound into one
structure whose forward solves feed the objectives, constraints, and the
finite-difference checks."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .density import DensityState, SimpLaw, build_filter
from .joints import (
    CouplingMatrix,
    Joint,
    assemble_joint_block,
    build_coupling,
    joint_dof_slices,
)
from .masks import MaskField, MaskSpec, apply_nds, single_mask
from .mesh import (
    AugmentedSystem,
    PartMesh,
    Solution,
    assemble_material_block,
    element_stiffness_q4,
    solve_augmented,
)


@dataclass
class ModelState:
    """One design point, fully prepared for solves and gradients."""

    rho: np.ndarray
    positions: np.ndarray          # (n_joints, 2)
    beta: float
    density: DensityState
    rho_hat: np.ndarray
    mask_diag: np.ndarray          # d rho_hat / d rho_bar
    d_rho_hat_dx: np.ndarray       # (n_joints, 2, n_elements)
    young: np.ndarray
    system: AugmentedSystem
    coupling: CouplingMatrix | None


@dataclass
class CaseResponse:
    """A solved load case with the quantities reused by every gradient."""

    solution: Solution
    total: float
    material: float                # u_m^T K_m u_m
    joint: float                   # u_c^T K_c u_c
    per_part: np.ndarray
    per_joint: np.ndarray
    element_energy: np.ndarray     # unit-modulus u_e^T ke u_e per element
    external_work: float


class Assembly:
    """Immutable problem geometry with forward evaluation methods."""

    def __init__(
        self,
        meshes: list[PartMesh],
        joints: list[Joint],
        *,
        filter_radius: float,
        penalty: float = 3.0,
        e0=1.0,
        nu=0.3,
        emin_ratio: float = 1e-9,
        f_m: np.ndarray,
        fixed_dofs,
        alpha: float = 10.0,
        eta: float = 0.5,
    ):
        offset = 0
        rebased = []
        for mesh in meshes:
            rebased.append(mesh.with_dof_offset(offset))
            offset += mesh.n_dofs
        self.meshes = rebased
        self.joints = list(joints)
        self.alpha = float(alpha)
        self.eta = float(eta)

        self.n_m = offset
        self.n_e = sum(m.n_elements for m in self.meshes)
        self.n_j = len(self.joints)

        self.centers = np.vstack([m.element_centers for m in self.meshes])
        self.element_part = np.concatenate(
            [np.full(m.n_elements, m.part_id) for m in self.meshes]
        )
        self.volumes = np.concatenate(
            [np.full(m.n_elements, m.element_size**2) for m in self.meshes]
        )

        el_start = np.cumsum([0] + [m.n_elements for m in self.meshes])
        self.part_element_slices = [
            slice(el_start[i], el_start[i + 1]) for i in range(len(self.meshes))
        ]
        dof_start = np.cumsum([0] + [m.n_dofs for m in self.meshes])
        self.part_dof_slices = [
            slice(dof_start[i], dof_start[i + 1]) for i in range(len(self.meshes))
        ]
        self.joint_slices = joint_dof_slices(self.joints)
        self.n_c = sum(jt.n_spring_dofs for jt in self.joints)

        nus = nu if not np.isscalar(nu) else [nu] * len(self.meshes)
        self.nus = [float(v) for v in nus]
        e0s = e0 if not np.isscalar(e0) else [e0] * len(self.meshes)
        e0_el = np.concatenate(
            [np.full(m.n_elements, float(v)) for m, v in zip(self.meshes, e0s)]
        )
        self.simp = SimpLaw(e0=e0_el, e_min=emin_ratio * e0_el, p=float(penalty))

        self.filter_radius = float(filter_radius)
        self.filter_op = sp.block_diag(
            [build_filter(m, self.filter_radius) for m in self.meshes], format="csr"
        )

        self._edofs = [m.element_dofs() for m in self.meshes]
        self._kes = [element_stiffness_q4(v) for v in self.nus]
        # Per-joint element selections for the NDS masks (connected parts only).
        self._joint_elements = [
            np.isin(self.element_part, jt.connected_parts) for jt in self.joints
        ]

        self.f_m = np.asarray(f_m, dtype=float)
        if self.f_m.shape != (self.n_m,):
            raise ValueError(f"load vector must have length {self.n_m}")
        self.fixed_dofs = np.asarray(sorted(set(int(i) for i in fixed_dofs)), dtype=np.int64)
        if self.fixed_dofs.size == 0:
            raise ValueError("at least one fixed DOF is required")

    # ------------------------------------------------------------------
    # forward pipeline
    # ------------------------------------------------------------------

    def joint_mask_fields(
        self, positions: np.ndarray
    ) -> list[tuple[str, MaskField | None, MaskField | None]]:
        """Per-joint NDS masks over all elements, neutral on unconnected parts."""
        positions = np.asarray(positions, dtype=float).reshape(self.n_j, 2)
        fields = []
        for j, jt in enumerate(self.joints):
            sel = self._joint_elements[j]
            plus = minus = None
            if jt.nds_mode in ("solid", "ring"):
                spec = MaskSpec(jt.solid_radius, self.alpha, "solid")
                plus = self._scatter_mask(positions[j], spec, sel)
            if jt.nds_mode in ("hole", "ring"):
                spec = MaskSpec(jt.hole_radius, self.alpha, "hole")
                minus = self._scatter_mask(positions[j], spec, sel)
            fields.append((jt.nds_mode, plus, minus))
        return fields

    def _scatter_mask(self, point, spec: MaskSpec, sel: np.ndarray) -> MaskField:
        local = single_mask(point, spec, self.centers[sel])
        values = np.ones(self.n_e)
        d_dx = np.zeros(self.n_e)
        d_dy = np.zeros(self.n_e)
        values[sel] = local.values
        d_dx[sel] = local.d_dx
        d_dy[sel] = local.d_dy
        return MaskField(values=values, d_dx=d_dx, d_dy=d_dy)

    def prepare(self, rho: np.ndarray, positions, beta: float) -> ModelState:
        """Run the density pipeline and assemble the system for one design."""
        rho = np.asarray(rho, dtype=float)
        if rho.shape != (self.n_e,):
            raise ValueError(f"design vector must have length {self.n_e}")
        positions = np.asarray(positions, dtype=float).reshape(self.n_j, 2)

        density = DensityState.forward(rho, self.filter_op, beta, self.eta)
        if self.n_j:
            joint_masks = self.joint_mask_fields(positions)
            rho_hat, mask_diag, d_dx = apply_nds(density.rho_bar, joint_masks)
        else:
            rho_hat = density.rho_bar
            mask_diag = np.ones(self.n_e)
            d_dx = np.zeros((0, 2, self.n_e))

        young = self.simp.modulus(rho_hat)
        k_m = assemble_material_block(self.meshes, young, self.nus)
        if self.n_j:
            coupling = build_coupling(self.joints, positions, self.meshes)
            k_c = assemble_joint_block(self.joints)
            g = coupling.matrix
        else:
            coupling = None
            k_c = sp.csr_matrix((0, 0))
            g = sp.csr_matrix((0, self.n_m))
        system = AugmentedSystem(
            material_block=k_m,
            joint_block=k_c,
            coupling_block=g,
            part_slices=self.part_dof_slices,
            joint_slices=self.joint_slices,
        )
        return ModelState(
            rho=rho,
            positions=positions,
            beta=float(beta),
            density=density,
            rho_hat=rho_hat,
            mask_diag=mask_diag,
            d_rho_hat_dx=d_dx,
            young=young,
            system=system,
            coupling=coupling,
        )

    def solve_case(
        self, state: ModelState, joint_scale: np.ndarray | None = None
    ) -> CaseResponse:
        """Solve one load case, optionally with degraded joint stiffness."""
        system = state.system
        if joint_scale is not None:
            system = system.with_joint_block(
                assemble_joint_block(self.joints, joint_scale)
            )
        sol = solve_augmented(system, self.f_m, self.fixed_dofs)

        w_m = system.material_block @ sol.u_m
        per_part = np.array(
            [sol.u_m[s] @ w_m[s] for s in self.part_dof_slices]
        )
        if self.n_c:
            w_c = system.joint_block @ sol.u_c
            per_joint = np.array([sol.u_c[s] @ w_c[s] for s in self.joint_slices])
        else:
            per_joint = np.zeros(0)
        material = float(per_part.sum())
        joint = float(per_joint.sum())
        return CaseResponse(
            solution=sol,
            total=material + joint,
            material=material,
            joint=joint,
            per_part=per_part,
            per_joint=per_joint,
            element_energy=self.element_energy(sol.u_m),
            external_work=float(self.f_m @ sol.u_m),
        )

    def element_energy(self, u_m: np.ndarray) -> np.ndarray:
        """Unit-modulus strain energy u_e^T ke u_e of every element."""
        out = np.empty(self.n_e)
        for ke, edofs, esl in zip(self._kes, self._edofs, self.part_element_slices):
            u = u_m[edofs]
            out[esl] = np.einsum("ni,ij,nj->n", u, ke, u)
        return out

    def default_joint_bounds(self, joint: Joint) -> tuple[float, float, float, float]:
        """Overlap box of the two connected parts inset by the outer radius."""
        a, b = (self._mesh_box(pid) for pid in joint.connected_parts)
        inset = joint.outer_radius
        xl, xu = max(a[0], b[0]) + inset, min(a[1], b[1]) - inset
        yl, yu = max(a[2], b[2]) + inset, min(a[3], b[3]) - inset
        if xl >= xu or yl >= yu:
            raise ValueError(
                f"parts {joint.connected_parts} leave no room for a joint "
                f"with outer radius {inset}"
            )
        return (xl, xu, yl, yu)

    def _mesh_box(self, part_id: int) -> tuple[float, float, float, float]:
        mesh = next(m for m in self.meshes if m.part_id == part_id)
        x0, y0 = mesh.origin
        return (
            x0,
            x0 + mesh.nx * mesh.element_size,
            y0,
            y0 + mesh.ny * mesh.element_size,
        )
