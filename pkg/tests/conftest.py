"""Shared builders: small deterministic assemblies and randomized two-part
instances with joints of every NDS mode."""
import numpy as np
import pytest

from jointopt import Assembly, Joint, build_part_mesh, generate_pattern


def make_single_part_assembly(nx=8, ny=6, load_node=None, **kwargs):
    """Left-clamped cantilever strip with a unit tip load."""
    mesh = build_part_mesh(nx, ny, 1.0, (0, 0), part_id=0)
    fixed = []
    for iy in range(ny + 1):
        n = iy * (nx + 1)
        fixed += [2 * n, 2 * n + 1]
    f = np.zeros(mesh.n_dofs)
    if load_node is None:
        load_node = (ny // 2) * (nx + 1) + nx
    f[2 * load_node + 1] = -1.0
    defaults = dict(filter_radius=1.6, penalty=3.0, f_m=f, fixed_dofs=fixed)
    defaults.update(kwargs)
    return Assembly([mesh], [], **defaults)


def make_two_part_assembly(
    nx=10,
    ny=8,
    overlap=5,
    joints_spec=(("ring", (8.0, 4.0)),),
    k_c=5.0,
    pattern_kind="ring",
    pattern_radii=(1.1, 1.5),
    filter_radius=1.6,
    stabilize_second_part=False,
    rng=None,
):
    """Two overlapping strips joined by small joints.

    ``joints_spec`` is a sequence of (mode, (x, y)) or (mode, (x, y), radii)
    tuples; default radii are solid 2.0 / hole 0.9.  With
    ``stabilize_second_part`` the free part gets one pinned corner node so the
    system stays solvable even with every joint degraded.
    """
    m0 = build_part_mesh(nx, ny, 1.0, (0, 0), part_id=0)
    m1 = build_part_mesh(nx, ny, 1.0, (nx - overlap, 0), part_id=1)

    fixed = []
    for iy in range(ny + 1):
        n = iy * (nx + 1)
        fixed += [2 * n, 2 * n + 1]
    f = np.zeros(m0.n_dofs + m1.n_dofs)
    if rng is None:
        tip = (ny // 2) * (nx + 1) + nx
        f[m0.n_dofs + 2 * tip + 1] = -1.0
    else:
        for _ in range(3):
            node = int(rng.integers(0, m1.n_nodes))
            f[m0.n_dofs + 2 * node + int(rng.integers(0, 2))] += rng.uniform(-1, 1)
        if not np.any(f):
            f[m0.n_dofs + 1] = -1.0
    if stabilize_second_part:
        corner = nx  # bottom-right node of part 1
        fixed += [m0.n_dofs + 2 * corner, m0.n_dofs + 2 * corner + 1]

    pattern = generate_pattern(pattern_kind, pattern_radii, k_c)
    joints = []
    for spec in joints_spec:
        mode, pos = spec[0], spec[1]
        solid, hole = (spec[2] if len(spec) > 2 else (2.0, 0.9))
        joints.append(
            Joint(
                ref_point=np.asarray(pos, dtype=float),
                pattern=pattern,
                connected_parts=(0, 1),
                nds_mode=mode,
                k_c=k_c,
                solid_radius=solid if mode in ("solid", "ring") else None,
                hole_radius=hole if mode in ("hole", "ring") else None,
            )
        )
    return Assembly(
        [m0, m1],
        joints,
        filter_radius=filter_radius,
        penalty=3.0,
        f_m=f,
        fixed_dofs=fixed,
    )


def random_instance(seed: int):
    """Randomized two-part instance exercising all NDS modes.

    Returns (assembly, rho, positions).  Joints sit off the element grid so
    the coupling weights are differentiable at the evaluation point, and the
    second part carries one pinned node so every failure case stays solvable.
    """
    rng = np.random.default_rng(seed)
    nx = int(rng.integers(9, 13))
    ny = int(rng.integers(7, 11))
    overlap = int(rng.integers(5, 7))
    n_j = int(rng.integers(1, 4))
    modes = ["ring", "hole", "solid"]
    rng.shuffle(modes)

    x_lo = nx - overlap + 2.2
    x_hi = nx - 2.2
    y_lo, y_hi = 2.2, ny - 2.2
    specs = []
    taken = []
    for j in range(n_j):
        for _ in range(50):
            pos = (rng.uniform(x_lo, x_hi), rng.uniform(y_lo, y_hi))
            # keep springs apart and off grid lines
            frac = (pos[0] % 1.0, pos[1] % 1.0)
            if min(frac) < 0.08 or max(frac) > 0.92:
                continue
            if all(np.hypot(pos[0] - t[0], pos[1] - t[1]) > 1.2 for t in taken):
                break
        taken.append(pos)
        specs.append((modes[j % 3], pos, (1.8, 0.7)))

    assembly = make_two_part_assembly(
        nx=nx,
        ny=ny,
        overlap=overlap,
        joints_spec=specs,
        k_c=float(rng.uniform(2.0, 8.0)),
        pattern_kind="ring",
        pattern_radii=(0.9, 1.3),
        stabilize_second_part=True,
        rng=rng,
    )
    rho = rng.uniform(0.25, 0.85, size=assembly.n_e)
    positions = np.array(taken)
    return assembly, rho, positions


@pytest.fixture
def small_assembly():
    return make_single_part_assembly()


@pytest.fixture
def coupled_assembly():
    return make_two_part_assembly(
        joints_spec=(("ring", (7.3, 4.2)),), stabilize_second_part=False
    )
