"""Run configuration: JSON schema, validation, and problem construction."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .joints import Joint, generate_pattern
from .mesh import build_part_mesh
from .model import Assembly

log = logging.getLogger(__name__)

DEFAULTS = {
    "alpha": 10.0,
    "penalty": 3.0,
    "filter_radius": 4.0,
    "emin_ratio": 1e-9,
    "distance_exponent": 8.0,
    "degradation": 1e-6,
    "gamma_factor": 20.0,
    "iterations": 200,
    "beta_steps": [[0, 2.0], [50, 4.0], [100, 8.0]],
}

# Connection presets: spot welds need only a solid material zone; bolts need
# a ring of material around a mounting hole.
JOINT_PRESETS = {
    "spot": {
        "nds_mode": "solid",
        "solid_radius": 8.0,
        "pattern": {"kind": "circular", "radii": [4.0]},
    },
    "bolt": {
        "nds_mode": "ring",
        "solid_radius": 10.0,
        "hole_radius": 4.0,
        "pattern": {"kind": "ring", "radii": [6.0, 8.0]},
    },
}


class ConfigError(ValueError):
    """A configuration file failed validation."""


@dataclass
class PartSpec:
    nx: int
    ny: int
    element_size: float
    origin: tuple[float, float]
    e0: float = 1.0
    nu: float = 0.3


@dataclass
class SelectorSpec:
    """Matches part nodes by coordinate value or [lo, hi] range."""

    part: int
    x: tuple[float, float] | None = None
    y: tuple[float, float] | None = None


@dataclass
class SupportSpec:
    selector: SelectorSpec
    fix: str  # "x" | "y" | "xy"


@dataclass
class LoadSpec:
    selector: SelectorSpec
    force: tuple[float, float]
    split: bool = False  # divide the force among all matched nodes


@dataclass
class JointGroupSpec:
    connected_parts: tuple[int, int]
    positions: list[tuple[float, float]]
    k_c: float
    nds_mode: str
    pattern_kind: str
    pattern_radii: list[float]
    solid_radius: float | None = None
    hole_radius: float | None = None
    bounds: tuple[float, float, float, float] | None = None


@dataclass
class ObjectiveSpec:
    kind: str = "nominal"  # "nominal" | "failsafe"
    failure_mode: int = 1
    degradation: float = DEFAULTS["degradation"]
    gamma_factor: float = DEFAULTS["gamma_factor"]


@dataclass
class VolumeSpec:
    scope: str  # "global" | "per_part"
    limit: float


@dataclass
class DistanceSpec:
    d0: float
    exponent: float = DEFAULTS["distance_exponent"]
    epsilon: float | None = None  # default 0.01 * element size


@dataclass
class ScheduleSpec:
    iterations: int = DEFAULTS["iterations"]
    beta_steps: list[tuple[int, float]] = field(
        default_factory=lambda: [tuple(s) for s in DEFAULTS["beta_steps"]]
    )
    penalty: float = DEFAULTS["penalty"]
    filter_radius: float = DEFAULTS["filter_radius"]

    def beta_at(self, iteration: int) -> float:
        beta = self.beta_steps[0][1]
        for start, value in self.beta_steps:
            if iteration >= start:
                beta = value
        return beta


@dataclass
class ProblemConfig:
    parts: list[PartSpec]
    supports: list[SupportSpec]
    loads: list[LoadSpec]
    joints: JointGroupSpec | None
    objective: ObjectiveSpec
    volume: VolumeSpec
    distance: DistanceSpec | None
    schedule: ScheduleSpec
    alpha: float = DEFAULTS["alpha"]
    emin_ratio: float = DEFAULTS["emin_ratio"]
    resolved: dict = field(default_factory=dict, repr=False)

    @property
    def n_joints(self) -> int:
        return 0 if self.joints is None else len(self.joints.positions)


def _require(cond: bool, where: str, message: str):
    if not cond:
        raise ConfigError(f"{where}: {message}")


def _range_of(value, where: str) -> tuple[float, float]:
    if np.isscalar(value):
        v = float(value)
        return (v, v)
    _require(
        isinstance(value, (list, tuple)) and len(value) == 2,
        where,
        f"expected a number or [lo, hi], got {value!r}",
    )
    lo, hi = float(value[0]), float(value[1])
    _require(lo <= hi, where, f"range is inverted: {value!r}")
    return (lo, hi)


def _parse_selector(raw: dict, where: str, n_parts: int) -> SelectorSpec:
    _require("part" in raw, where, "missing 'part'")
    part = int(raw["part"])
    _require(0 <= part < n_parts, where, f"part {part} does not exist")
    x = _range_of(raw["x"], f"{where}.x") if "x" in raw else None
    y = _range_of(raw["y"], f"{where}.y") if "y" in raw else None
    _require(x is not None or y is not None, where, "needs 'x' and/or 'y'")
    return SelectorSpec(part=part, x=x, y=y)


def _parse_joints(raw: dict, n_parts: int) -> JointGroupSpec:
    where = "joints"
    preset = JOINT_PRESETS.get(raw.get("type", ""), {})
    merged = {**preset, **{k: v for k, v in raw.items() if k != "type"}}
    if "type" in raw and raw["type"] not in JOINT_PRESETS:
        raise ConfigError(f"{where}.type: unknown preset {raw['type']!r}")

    _require("positions" in merged, where, "missing 'positions'")
    positions = [tuple(map(float, p)) for p in merged["positions"]]
    if "count" in merged:
        _require(
            int(merged["count"]) == len(positions),
            f"{where}.count",
            f"count {merged['count']} != {len(positions)} positions",
        )
    connected = tuple(int(p) for p in merged.get("connected_parts", (0, 1)))
    _require(len(connected) == 2, f"{where}.connected_parts", "exactly two parts")
    for pid in connected:
        _require(0 <= pid < n_parts, f"{where}.connected_parts", f"part {pid} missing")
    _require(connected[0] != connected[1], f"{where}.connected_parts",
             "a joint must connect two distinct parts")

    mode = merged.get("nds_mode")
    _require(mode in ("hole", "solid", "ring"), f"{where}.nds_mode",
             f"expected hole|solid|ring, got {mode!r}")
    pattern = merged.get("pattern")
    _require(isinstance(pattern, dict) and "kind" in pattern and "radii" in pattern,
             f"{where}.pattern", "needs 'kind' and 'radii'")
    k_c = float(merged.get("k_c", 10.0))
    _require(k_c > 0, f"{where}.k_c", "must be positive")

    bounds = merged.get("bounds")
    if bounds is not None:
        _require(len(bounds) == 4, f"{where}.bounds", "expected [xl, xu, yl, yu]")
        bounds = tuple(float(v) for v in bounds)
    return JointGroupSpec(
        connected_parts=connected,
        positions=positions,
        k_c=k_c,
        nds_mode=mode,
        pattern_kind=pattern["kind"],
        pattern_radii=[float(r) for r in pattern["radii"]],
        solid_radius=merged.get("solid_radius"),
        hole_radius=merged.get("hole_radius"),
        bounds=bounds,
    )


def config_from_dict(raw: dict) -> ProblemConfig:
    """Validate a configuration tree and fill defaults."""
    _require(isinstance(raw, dict), "config", "top level must be an object")
    _require("parts" in raw and raw["parts"], "parts", "at least one part required")

    parts = []
    for i, p in enumerate(raw["parts"]):
        where = f"parts[{i}]"
        for key in ("nx", "ny"):
            _require(key in p and int(p[key]) >= 1, where, f"'{key}' must be >= 1")
        h = float(p.get("element_size", 1.0))
        _require(h > 0, where, "element_size must be positive")
        nu = float(p.get("nu", 0.3))
        _require(-1.0 < nu < 0.5, where, f"nu must lie in (-1, 0.5), got {nu}")
        e0 = float(p.get("e0", 1.0))
        _require(e0 > 0, where, "e0 must be positive")
        parts.append(
            PartSpec(
                nx=int(p["nx"]),
                ny=int(p["ny"]),
                element_size=h,
                origin=tuple(map(float, p.get("origin", (0.0, 0.0)))),
                e0=e0,
                nu=nu,
            )
        )

    _require("supports" in raw and raw["supports"], "supports", "required")
    supports = []
    for i, s in enumerate(raw["supports"]):
        where = f"supports[{i}]"
        fix = s.get("fix", "xy")
        _require(fix in ("x", "y", "xy"), f"{where}.fix", f"expected x|y|xy, got {fix!r}")
        supports.append(SupportSpec(_parse_selector(s, where, len(parts)), fix))

    _require("loads" in raw and raw["loads"], "loads", "required")
    loads = []
    for i, l in enumerate(raw["loads"]):
        where = f"loads[{i}]"
        _require("force" in l and len(l["force"]) == 2, f"{where}.force",
                 "expected [fx, fy]")
        loads.append(
            LoadSpec(
                _parse_selector(l, where, len(parts)),
                tuple(map(float, l["force"])),
                split=bool(l.get("split", False)),
            )
        )

    joints = None
    if raw.get("joints"):
        joints = _parse_joints(raw["joints"], len(parts))

    obj_raw = raw.get("objective", {})
    kind = obj_raw.get("kind", "nominal")
    _require(kind in ("nominal", "failsafe"), "objective.kind",
             f"expected nominal|failsafe, got {kind!r}")
    objective = ObjectiveSpec(
        kind=kind,
        failure_mode=int(obj_raw.get("failure_mode", 1)),
        degradation=float(obj_raw.get("degradation", DEFAULTS["degradation"])),
        gamma_factor=float(obj_raw.get("gamma_factor", DEFAULTS["gamma_factor"])),
    )
    if kind == "failsafe":
        _require(joints is not None, "objective", "failsafe needs joints")
        n_j = len(joints.positions)
        _require(1 <= objective.failure_mode <= n_j, "objective.failure_mode",
                 f"must lie in [1, {n_j}]")
        _require(0 < objective.degradation < 1, "objective.degradation",
                 "must lie in (0, 1)")

    cons = raw.get("constraints", {})
    _require("volume" in cons, "constraints.volume", "required")
    vol_raw = cons["volume"]
    scope = vol_raw.get("scope", "global")
    _require(scope in ("global", "per_part"), "constraints.volume.scope",
             f"expected global|per_part, got {scope!r}")
    limit = float(vol_raw.get("limit", 0.0))
    _require(0.0 < limit <= 1.0, "constraints.volume.limit",
             f"must lie in (0, 1], got {limit}")
    volume = VolumeSpec(scope=scope, limit=limit)

    distance = None
    if "min_distance" in cons and cons["min_distance"] is not None:
        d_raw = cons["min_distance"]
        _require(joints is not None and len(joints.positions) >= 2,
                 "constraints.min_distance", "needs at least two joints")
        d0 = float(d_raw["d0"])
        _require(d0 > 0, "constraints.min_distance.d0", "must be positive")
        distance = DistanceSpec(
            d0=d0,
            exponent=float(d_raw.get("exponent", DEFAULTS["distance_exponent"])),
            epsilon=d_raw.get("epsilon"),
        )

    sched_raw = raw.get("schedule", {})
    iterations = int(sched_raw.get("iterations", DEFAULTS["iterations"]))
    _require(iterations >= 0, "schedule.iterations", "must be >= 0")
    beta_steps = [
        (int(it), float(b))
        for it, b in sched_raw.get("beta_steps", DEFAULTS["beta_steps"])
    ]
    _require(beta_steps and beta_steps[0][0] == 0, "schedule.beta_steps",
             "first step must start at iteration 0")
    _require(all(b > 0 for _, b in beta_steps), "schedule.beta_steps",
             "projection steepness must be positive")
    _require(all(beta_steps[i][0] < beta_steps[i + 1][0]
                 for i in range(len(beta_steps) - 1)),
             "schedule.beta_steps", "iterations must increase")
    penalty = float(sched_raw.get("penalty", DEFAULTS["penalty"]))
    _require(penalty >= 1.0, "schedule.penalty", "must be >= 1")
    filter_radius = float(sched_raw.get("filter_radius", DEFAULTS["filter_radius"]))
    _require(filter_radius > 0, "schedule.filter_radius", "must be positive")
    schedule = ScheduleSpec(iterations, beta_steps, penalty, filter_radius)

    config = ProblemConfig(
        parts=parts,
        supports=supports,
        loads=loads,
        joints=joints,
        objective=objective,
        volume=volume,
        distance=distance,
        schedule=schedule,
        alpha=float(raw.get("alpha", DEFAULTS["alpha"])),
        emin_ratio=float(raw.get("emin_ratio", DEFAULTS["emin_ratio"])),
        resolved=raw,
    )
    _cross_validate(config)
    return config


def load_config(path) -> ProblemConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(raw)


def _part_box(part: PartSpec) -> tuple[float, float, float, float]:
    x0, y0 = part.origin
    return (x0, x0 + part.nx * part.element_size, y0, y0 + part.ny * part.element_size)


def _cross_validate(config: ProblemConfig):
    if config.joints is None:
        return
    jg = config.joints
    boxes = [_part_box(config.parts[p]) for p in jg.connected_parts]
    outer = max(jg.solid_radius or 0.0, jg.hole_radius or 0.0)
    xl = max(b[0] for b in boxes) + outer
    xu = min(b[1] for b in boxes) - outer
    yl = max(b[2] for b in boxes) + outer
    yu = min(b[3] for b in boxes) - outer
    _require(xl < xu and yl < yu, "joints",
             "connected parts leave no overlap for the joints")
    bounds = jg.bounds or (xl, xu, yl, yu)
    _require(bounds[0] >= xl - 1e-9 and bounds[1] <= xu + 1e-9
             and bounds[2] >= yl - 1e-9 and bounds[3] <= yu + 1e-9,
             "joints.bounds",
             f"must stay inside the inset overlap [{xl}, {xu}] x [{yl}, {yu}]")
    for i, (px, py) in enumerate(jg.positions):
        _require(bounds[0] <= px <= bounds[1] and bounds[2] <= py <= bounds[3],
                 f"joints.positions[{i}]",
                 f"({px}, {py}) outside bounds {bounds}")
    if config.distance is None and len(jg.positions) >= 2:
        pos = np.asarray(jg.positions)
        for i in range(len(pos)):
            for j in range(i):
                if np.hypot(*(pos[i] - pos[j])) < 2 * outer:
                    log.warning(
                        "initial NDS of joints %d and %d overlap and no "
                        "minimum-distance constraint is enabled", j, i
                    )


def _select_nodes(mesh, selector: SelectorSpec) -> np.ndarray:
    coords = mesh.node_coords
    keep = np.ones(coords.shape[0], dtype=bool)
    tol = 1e-9 * max(1.0, float(np.abs(coords).max()))
    if selector.x is not None:
        keep &= (coords[:, 0] >= selector.x[0] - tol) & (
            coords[:, 0] <= selector.x[1] + tol
        )
    if selector.y is not None:
        keep &= (coords[:, 1] >= selector.y[0] - tol) & (
            coords[:, 1] <= selector.y[1] + tol
        )
    return np.flatnonzero(keep)


def build_problem(config: ProblemConfig) -> tuple[Assembly, np.ndarray, np.ndarray]:
    """Construct the assembly plus the initial design (rho, positions)."""
    meshes = []
    for i, p in enumerate(config.parts):
        meshes.append(
            build_part_mesh(p.nx, p.ny, p.element_size, p.origin, part_id=i)
        )
    offset = 0
    rebased = []
    for m in meshes:
        rebased.append(m.with_dof_offset(offset))
        offset += m.n_dofs
    meshes = rebased
    n_m = offset

    fixed = set()
    for i, sup in enumerate(config.supports):
        mesh = meshes[sup.selector.part]
        nodes = _select_nodes(mesh, sup.selector)
        if nodes.size == 0:
            raise ConfigError(f"supports[{i}]: selector matches no nodes")
        for n in nodes:
            if "x" in sup.fix:
                fixed.add(mesh.dof_offset + 2 * int(n))
            if "y" in sup.fix:
                fixed.add(mesh.dof_offset + 2 * int(n) + 1)

    f_m = np.zeros(n_m)
    for i, load in enumerate(config.loads):
        mesh = meshes[load.selector.part]
        nodes = _select_nodes(mesh, load.selector)
        if nodes.size == 0:
            raise ConfigError(f"loads[{i}]: selector matches no nodes")
        fx, fy = load.force
        if load.split:
            fx, fy = fx / nodes.size, fy / nodes.size
        for n in nodes:
            f_m[mesh.dof_offset + 2 * int(n)] += fx
            f_m[mesh.dof_offset + 2 * int(n) + 1] += fy

    joints = []
    if config.joints is not None:
        jg = config.joints
        pattern = generate_pattern(jg.pattern_kind, jg.pattern_radii, jg.k_c)
        for pos in jg.positions:
            joints.append(
                Joint(
                    ref_point=np.asarray(pos, dtype=float),
                    pattern=pattern,
                    connected_parts=jg.connected_parts,
                    nds_mode=jg.nds_mode,
                    k_c=jg.k_c,
                    solid_radius=jg.solid_radius,
                    hole_radius=jg.hole_radius,
                    bounds=jg.bounds,
                )
            )

    assembly = Assembly(
        meshes,
        joints,
        filter_radius=config.schedule.filter_radius,
        penalty=config.schedule.penalty,
        e0=[p.e0 for p in config.parts],
        nu=[p.nu for p in config.parts],
        emin_ratio=config.emin_ratio,
        f_m=f_m,
        fixed_dofs=sorted(fixed),
        alpha=config.alpha,
    )

    rho0 = np.full(assembly.n_e, config.volume.limit)
    x0 = np.array([jt.ref_point for jt in joints], dtype=float).reshape(-1, 2)
    return assembly, rho0, x0


def joint_bound_arrays(
    assembly: Assembly,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-coordinate lower/upper bounds, defaulting to the inset overlap."""
    lower = np.zeros((assembly.n_j, 2))
    upper = np.zeros((assembly.n_j, 2))
    for i, jt in enumerate(assembly.joints):
        xl, xu, yl, yu = jt.bounds or assembly.default_joint_bounds(jt)
        lower[i] = (xl, yl)
        upper[i] = (xu, yu)
    return lower, upper
