"""Movable non-design-space masks.

A mask is a smooth per-element field in (0, 1): ~0 inside a circle around a
joint's reference point, ~1 outside, with a tanh transition.  Hole masks
multiply material away; solid masks force material in through the complement
construction; both at once yield rings.  All fields carry analytic partials
with respect to the owning joint's coordinates.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NDS_MODES = ("hole", "solid", "ring")


@dataclass(frozen=True)
class MaskSpec:
    """Circle radius, transition sharpness, and which way the mask acts."""

    radius: float
    alpha: float = 10.0
    polarity: str = "hole"  # "hole" removes material, "solid" protects it

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError(f"mask radius must be positive, got {self.radius}")
        if self.alpha <= 0:
            raise ValueError(f"mask sharpness must be positive, got {self.alpha}")
        if self.polarity not in ("hole", "solid"):
            raise ValueError(f"unknown mask polarity {self.polarity!r}")


@dataclass
class MaskField:
    """Mask values and their partials w.r.t. the owning joint's coordinates."""

    values: np.ndarray
    d_dx: np.ndarray
    d_dy: np.ndarray


@dataclass
class CombinedMask:
    """Product of several masks; partial rows align with the input order.

    Row i of ``d_dx`` is d(prod)/dx_i = (d mask_i/dx_i) * prod_{j != i} mask_j.
    """

    values: np.ndarray
    d_dx: np.ndarray  # (n_masks, n_elements)
    d_dy: np.ndarray


def single_mask(ref_point, spec: MaskSpec, centers: np.ndarray) -> MaskField:
    """Evaluate one circular mask at the given element centers.

    The level function is ((cx-x)/r)^2 + ((cy-y)/r)^2 - 1, zero on the
    circle outline, and the mask is (tanh(alpha*E) + 1) / 2.
    """
    ref = np.asarray(ref_point, dtype=float).reshape(2)
    centers = np.asarray(centers, dtype=float)
    dx = centers[:, 0] - ref[0]
    dy = centers[:, 1] - ref[1]
    r = spec.radius
    level = (dx / r) ** 2 + (dy / r) ** 2 - 1.0
    t = np.tanh(spec.alpha * level)
    sech2 = 1.0 - t * t
    scale = spec.alpha / (r * r)
    return MaskField(
        values=(t + 1.0) / 2.0,
        d_dx=-scale * dx * sech2,
        d_dy=-scale * dy * sech2,
    )


def combine(masks: list[MaskField], size: int | None = None) -> CombinedMask:
    """Element-wise product of masks with per-mask partials (product rule).

    An empty list yields the all-ones mask; ``size`` is then required.
    """
    if not masks:
        if size is None:
            raise ValueError("size is required to combine an empty mask list")
        return CombinedMask(
            values=np.ones(size), d_dx=np.zeros((0, size)), d_dy=np.zeros((0, size))
        )
    vals = np.vstack([m.values for m in masks])
    n = vals.shape[1]
    if any(m.values.shape != (n,) for m in masks):
        raise ValueError("mask fields must all have the same length")
    # prefix[i] = prod of masks < i, suffix[i] = prod of masks > i
    k = len(masks)
    prefix = np.ones((k, n))
    suffix = np.ones((k, n))
    for i in range(1, k):
        prefix[i] = prefix[i - 1] * vals[i - 1]
        suffix[k - 1 - i] = suffix[k - i] * vals[k - i]
    others = prefix * suffix
    d_dx = np.vstack([m.d_dx for m in masks]) * others
    d_dy = np.vstack([m.d_dy for m in masks]) * others
    return CombinedMask(values=prefix[-1] * vals[-1], d_dx=d_dx, d_dy=d_dy)


def apply_nds(
    rho_bar: np.ndarray,
    joint_masks: list[tuple[str, MaskField | None, MaskField | None]],
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Impose every joint's non-design space on the projected densities.

    ``joint_masks`` holds one (mode, solid_mask, hole_mask) triple per joint;
    hole joints carry only a hole mask, solid joints only a solid mask, ring
    joints both.  With the combined solid mask p and hole mask m the modified
    field is rho_hat = (1 - p + rho_bar * p) * m, which reduces to the pure
    hole/solid forms when the other mask is absent.

    Returns (rho_hat, d rho_hat/d rho_bar as a diagonal vector, and the
    per-joint position partials with shape (n_joints, 2, n_elements)).
    """
    rho_bar = np.asarray(rho_bar, dtype=float)
    n = rho_bar.shape[0]
    solid_owner, solid_fields = [], []
    hole_owner, hole_fields = [], []
    for j, (mode, plus, minus) in enumerate(joint_masks):
        if mode not in NDS_MODES:
            raise ValueError(f"unknown NDS mode {mode!r}")
        if mode in ("solid", "ring"):
            if plus is None:
                raise ValueError(f"joint {j}: mode {mode!r} requires a solid mask")
            solid_owner.append(j)
            solid_fields.append(plus)
        if mode in ("hole", "ring"):
            if minus is None:
                raise ValueError(f"joint {j}: mode {mode!r} requires a hole mask")
            hole_owner.append(j)
            hole_fields.append(minus)
        for f in (plus, minus):
            if f is not None and f.values.shape != (n,):
                raise ValueError(f"joint {j}: mask length {f.values.shape} != {n}")

    psi_p = combine(solid_fields, size=n)
    psi_m = combine(hole_fields, size=n)

    interp = 1.0 - psi_p.values + rho_bar * psi_p.values
    rho_hat = interp * psi_m.values
    diag = psi_p.values * psi_m.values

    d_x = np.zeros((len(joint_masks), 2, n))
    solid_factor = (rho_bar - 1.0) * psi_m.values
    for row, j in enumerate(solid_owner):
        d_x[j, 0] += solid_factor * psi_p.d_dx[row]
        d_x[j, 1] += solid_factor * psi_p.d_dy[row]
    for row, j in enumerate(hole_owner):
        d_x[j, 0] += interp * psi_m.d_dx[row]
        d_x[j, 1] += interp * psi_m.d_dy[row]
    return rho_hat, diag, d_x
