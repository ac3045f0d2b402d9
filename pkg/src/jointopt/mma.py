"""Method of moving asymptotes for the mixed density/position design vector.

One step builds the separable convex approximation around the current
iterate and solves it with a primal-dual interior-point Newton method.  All
variables are rescaled to [0, 1] internally so densities and joint
coordinates (which span hundreds of length units) share the same asymptote
heuristics; gradients are rescaled accordingly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ASY_INIT = 0.5
ASY_INCREASE = 1.2
ASY_DECREASE = 0.7
ALBEFA = 0.1
RAA0 = 1e-5
MOVE_LIMIT = 0.2
KKT_TOL = 1e-9
# Closest the asymptotes may come to the iterate (in [0,1] units).  The
# textbook safeguard of 0.01 caps terminal accuracy at ~1e-2 when the
# gradient vanishes at an interior optimum; a much smaller floor lets the
# oscillation damping collapse the asymptotes onto such optima.
ASY_MIN_DISTANCE = 1e-6
ASY_MAX_DISTANCE = 10.0
_MAX_NEWTON = 200
_MAX_LINESEARCH = 50


class SubproblemError(RuntimeError):
    """The convex subproblem is hopeless (e.g. all-zero constraint gradient)."""


@dataclass
class MmaState:
    """Asymptotes and the two previous iterates, in the scaled [0,1] space."""

    low: np.ndarray
    upp: np.ndarray
    z_prev1: np.ndarray
    z_prev2: np.ndarray
    iteration: int = 0

    @classmethod
    def fresh(cls, n: int) -> "MmaState":
        return cls(
            low=np.zeros(n),
            upp=np.ones(n),
            z_prev1=np.zeros(n),
            z_prev2=np.zeros(n),
        )


def mma_step(
    x: np.ndarray,
    objective: float,
    obj_grad: np.ndarray,
    constraints: np.ndarray,
    constraint_grads: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
    state: MmaState,
    move: float = MOVE_LIMIT,
) -> tuple[np.ndarray, MmaState, dict]:
    """One MMA update; returns the new iterate, state, and diagnostics.

    ``constraints`` holds the h_i <= 0 values, ``constraint_grads`` is
    (m, n).  The returned iterate satisfies the box bounds exactly.
    """
    x = np.asarray(x, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    n = x.size
    span = upper - lower
    if np.any(span <= 0):
        raise ValueError("upper bounds must exceed lower bounds")
    constraints = np.atleast_1d(np.asarray(constraints, dtype=float))
    if constraints.size == 0:
        # Unconstrained problems run against one inactive placeholder row.
        constraints = np.array([-1.0])
        constraint_grads = np.zeros((1, n))
    m = constraints.size
    dfdz = np.atleast_2d(np.asarray(constraint_grads, dtype=float)) * span
    df0dz = np.asarray(obj_grad, dtype=float) * span
    if dfdz.shape != (m, n):
        raise ValueError(f"constraint gradients must be ({m}, {n})")

    hopeless = (constraints > 0) & (np.abs(dfdz).max(axis=1) == 0.0)
    if np.any(hopeless):
        raise SubproblemError(
            f"constraint {int(np.flatnonzero(hopeless)[0])} is violated but "
            "has an all-zero gradient"
        )

    z = (x - lower) / span
    state.iteration += 1
    k = state.iteration
    if k <= 2:
        low = z - ASY_INIT
        upp = z + ASY_INIT
    else:
        trend = (z - state.z_prev1) * (state.z_prev1 - state.z_prev2)
        factor = np.ones(n)
        factor[trend > 0] = ASY_INCREASE
        factor[trend < 0] = ASY_DECREASE
        low = z - factor * (state.z_prev1 - state.low)
        upp = z + factor * (state.upp - state.z_prev1)
        low = np.clip(low, z - ASY_MAX_DISTANCE, z - ASY_MIN_DISTANCE)
        upp = np.clip(upp, z + ASY_MIN_DISTANCE, z + ASY_MAX_DISTANCE)

    alfa = np.maximum.reduce([low + ALBEFA * (z - low), z - move, np.zeros(n)])
    beta = np.minimum.reduce([upp - ALBEFA * (upp - z), z + move, np.ones(n)])

    ux = upp - z
    xl = z - low
    p0 = np.maximum(df0dz, 0.0)
    q0 = np.maximum(-df0dz, 0.0)
    pq0 = 0.001 * (p0 + q0) + RAA0
    p0 = (p0 + pq0) * ux**2
    q0 = (q0 + pq0) * xl**2
    pp = np.maximum(dfdz, 0.0)
    qq = np.maximum(-dfdz, 0.0)
    pq = 0.001 * (pp + qq) + RAA0
    pp = (pp + pq) * ux[None, :] ** 2
    qq = (qq + pq) * xl[None, :] ** 2
    b = pp @ (1.0 / ux) + qq @ (1.0 / xl) - constraints

    a0, a = 1.0, np.zeros(m)
    c = 1000.0 * np.ones(m)
    d = np.ones(m)
    z_new, y, zvar, lam, residual = _solve_subproblem(
        low, upp, alfa, beta, p0, q0, pp, qq, a0, a, b, c, d
    )

    state.z_prev2 = state.z_prev1.copy() if k > 1 else z.copy()
    state.z_prev1 = z.copy()
    state.low = low
    state.upp = upp

    info = {
        "subproblem_residual": residual,
        "lambda": lam,
        "artificial_y": y,
        "artificial_z": zvar,
    }
    return lower + z_new * span, state, info


def _solve_subproblem(low, upp, alfa, beta, p0, q0, pp, qq, a0, a, b, c, d):
    """Primal-dual Newton solve of the MMA subproblem to KKT_TOL."""
    m, n = pp.shape
    epsi = 1.0
    x = 0.5 * (alfa + beta)
    y = np.ones(m)
    z = 1.0
    lam = np.ones(m)
    xsi = np.maximum(1.0 / (x - alfa), 1.0)
    eta = np.maximum(1.0 / (beta - x), 1.0)
    mu = np.maximum(1.0, 0.5 * c)
    zet = 1.0
    s = np.ones(m)

    def residuals(x, y, z, lam, xsi, eta, mu, zet, s, epsi):
        ux = upp - x
        xl = x - low
        plam = p0 + pp.T @ lam
        qlam = q0 + qq.T @ lam
        gvec = pp @ (1.0 / ux) + qq @ (1.0 / xl)
        rex = plam / ux**2 - qlam / xl**2 - xsi + eta
        rey = c + d * y - mu - lam
        rez = a0 - zet - a @ lam
        relam = gvec - a * z - y + s - b
        rexsi = xsi * (x - alfa) - epsi
        reeta = eta * (beta - x) - epsi
        remu = mu * y - epsi
        rezet = zet * z - epsi
        res = lam * s - epsi
        full = np.concatenate(
            [rex, rey, [rez], relam, rexsi, reeta, remu, [rezet], res]
        )
        return full, np.linalg.norm(full), np.abs(full).max()

    residumax = 1.0
    while epsi > KKT_TOL:
        _, residunorm, residumax = residuals(x, y, z, lam, xsi, eta, mu, zet, s, epsi)
        for _ in range(_MAX_NEWTON):
            if residumax <= 0.9 * epsi:
                break
            ux = upp - x
            xl = x - low
            plam = p0 + pp.T @ lam
            qlam = q0 + qq.T @ lam
            gvec = pp @ (1.0 / ux) + qq @ (1.0 / xl)
            gg = pp / ux[None, :] ** 2 - qq / xl[None, :] ** 2

            delx = plam / ux**2 - qlam / xl**2 - epsi / (x - alfa) + epsi / (beta - x)
            dely = c + d * y - lam - epsi / y
            delz = a0 - a @ lam - epsi / z
            dellam = gvec - a * z - y - b + epsi / lam

            diagx = 2.0 * (plam / ux**3 + qlam / xl**3)
            diagx = diagx + xsi / (x - alfa) + eta / (beta - x)
            diagy = d + mu / y
            diaglam = s / lam
            diaglamyi = diaglam + 1.0 / diagy

            if m < n:
                blam = dellam + dely / diagy - gg @ (delx / diagx)
                alam = np.diag(diaglamyi) + gg @ (gg / diagx).T
                aa = np.block(
                    [[alam, a[:, None]], [a[None, :], np.array([[-zet / z]])]]
                )
                bb = np.concatenate([blam, [delz]])
                sol = np.linalg.solve(aa, bb)
                dlam = sol[:m]
                dz = sol[m]
                dx = -delx / diagx - (gg.T @ dlam) / diagx
            else:
                diaglamyiinv = 1.0 / diaglamyi
                dellamyi = dellam + dely / diagy
                axx = np.diag(diagx) + gg.T @ (gg * diaglamyiinv[:, None])
                azz = zet / z + a @ (a * diaglamyiinv)
                axz = -(gg.T @ (a * diaglamyiinv))
                bx = delx + gg.T @ (dellamyi * diaglamyiinv)
                bz = delz - a @ (dellamyi * diaglamyiinv)
                aa = np.block([[axx, axz[:, None]], [axz[None, :], np.array([[azz]])]])
                bb = np.concatenate([-bx, [-bz]])
                sol = np.linalg.solve(aa, bb)
                dx = sol[:n]
                dz = sol[n]
                dlam = (gg @ dx) * diaglamyiinv - dz * (a * diaglamyiinv)
                dlam = dlam + dellamyi * diaglamyiinv

            dy = -dely / diagy + dlam / diagy
            dxsi = -xsi + epsi / (x - alfa) - (xsi * dx) / (x - alfa)
            deta = -eta + epsi / (beta - x) + (eta * dx) / (beta - x)
            dmu = -mu + epsi / y - (mu * dy) / y
            dzet = -zet + epsi / z - zet * dz / z
            ds = -s + epsi / lam - (s * dlam) / lam

            bundle = np.concatenate([y, [z], lam, xsi, eta, mu, [zet], s])
            dbundle = np.concatenate([dy, [dz], dlam, dxsi, deta, dmu, [dzet], ds])
            step_bound = np.max(
                np.concatenate(
                    [
                        -1.01 * dbundle / bundle,
                        -1.01 * dx / (x - alfa),
                        1.01 * dx / (beta - x),
                        [1.0],
                    ]
                )
            )
            steg = 1.0 / step_bound

            old = (x.copy(), y.copy(), z, lam.copy(), xsi.copy(), eta.copy(),
                   mu.copy(), zet, s.copy())
            resinew = 2.0 * residunorm
            for _ in range(_MAX_LINESEARCH):
                if resinew <= residunorm:
                    break
                x = old[0] + steg * dx
                y = old[1] + steg * dy
                z = old[2] + steg * dz
                lam = old[3] + steg * dlam
                xsi = old[4] + steg * dxsi
                eta = old[5] + steg * deta
                mu = old[6] + steg * dmu
                zet = old[7] + steg * dzet
                s = old[8] + steg * ds
                _, resinew, residumax = residuals(
                    x, y, z, lam, xsi, eta, mu, zet, s, epsi
                )
                steg /= 2.0
            residunorm = resinew
        epsi *= 0.1
    return x, y, z, lam, residumax
