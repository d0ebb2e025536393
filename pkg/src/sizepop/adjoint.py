"""Adjoint and sensitivity systems for the forward scheme.

The adjoint is the exact transpose of the discrete forward step, marched
backward from a zero terminal condition with the running cost source, rather
than a separate discretization of a continuous dual system.  That choice
buys two machine-precision identities the optimizer relies on:

  * one-step duality  <forward_step(u), v> = <u, adjoint_step(v)>,
  * the pairing  -c * integral(z) = integral(delta * r * p * phi0)
    between the sensitivity z in a control direction delta and the adjoint
    trace phi0 at the newborn boundary,

and consequently exact gradients of the discrete objective.

Conventions: the adjoint source is the negative constant -c (configurable),
so phi <= 0 for nonnegative data and the projected optimality update
beta = F(-r p phi0 / (c rho)) holds with the signs written out in the
optimizer.  phi is the per-cell state sensitivity in density units; it is
consistent with the continuous dual field away from the newborn boundary,
while in the bottom size cell it keeps the boundary-blend dilution of the
transport stencil (that is the true sensitivity of the scheme).  phi0 is
the multiplier on the newborn boundary value rescaled to the same units and
converges to the boundary trace of the dual field; everything the optimizer
consumes goes through phi0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forward import StateSolution, StepContext, solve_state
from .model import Field, ValidatedScenario, control_array


@dataclass(frozen=True)
class AdjointSolution:
    """Adjoint field phi (zero at t = T) and its newborn-boundary trace."""

    phi: Field
    phi_at_zero: Field


@dataclass(frozen=True)
class SensitivitySolution:
    """Directional state derivative for a control perturbation delta."""

    z: Field


def _check_state_match(vsc: ValidatedScenario, beta_arr: np.ndarray, state: StateSolution) -> None:
    if state.p.grid != vsc.grid:
        raise ValueError("state was solved on a different grid")
    if state.beta.shape != beta_arr.shape or not np.array_equal(state.beta, beta_arr):
        raise ValueError("state was solved with a different control")


def solve_adjoint(vsc: ValidatedScenario, beta, state: StateSolution,
                  ctx: StepContext | None = None) -> AdjointSolution:
    """Backward march of the transposed one-step operator.

    The running source is the derivative of the population term of the cost
    with respect to the density (one per unit (s,t,x) volume), accumulated
    with the same quadrature weights the cost uses; the final time level
    carries zero weight, so phi(., T, .) = 0 exactly.  In growth cases with
    a size exit (a/c) the transpose never propagates information from beyond
    s_f, which realizes the zero boundary value there structurally.
    """
    ctx = ctx or StepContext(vsc)
    grid = vsc.grid
    beta_arr = control_array(grid, beta)
    _check_state_match(vsc, beta_arr, state)

    c = vsc.cost.c
    wx = grid.space_weights() * grid.dx
    source = grid.ds * grid.dt * wx[None, :] * np.ones((grid.Ns, 1))
    lam = np.zeros((grid.Ns, grid.Nx))
    phi = np.zeros((grid.Ns, grid.Nt + 1, grid.Nx))
    phi0 = np.zeros((grid.Nt + 1, grid.Nx))
    for j in range(grid.Nt - 1, -1, -1):
        lam, yhat = ctx.apply_step_adjoint(beta_arr, j, lam)
        lam = lam + source
        phi[:, j, :] = -c * lam / (grid.ds * wx[None, :])
        if ctx.has_renewal:
            phi0[j] = -c * yhat / (vsc.gamma0_t[j] * grid.dt * wx)
    out = AdjointSolution(
        phi=Field(grid, ("size", "time", "space"), phi),
        phi_at_zero=Field(grid, ("time", "space"), phi0),
    )
    out.phi.check_finite()
    out.phi_at_zero.check_finite()
    return out


def solve_sensitivity(vsc: ValidatedScenario, beta, state: StateSolution, delta,
                      ctx: StepContext | None = None) -> SensitivitySolution:
    """Forward march of the linearized system in the direction delta.

    Same transport, reaction and diffusion as the state solve, zero initial
    data, and the newborn boundary picks up the extra birth term
    integral(r * delta * p) ds / gamma(0,t) alongside the usual
    integral(r * beta * z).  In growth cases without a renewal boundary the
    control cannot influence the state and z stays identically zero.
    """
    ctx = ctx or StepContext(vsc)
    grid = vsc.grid
    beta_arr = control_array(grid, beta)
    delta_arr = control_array(grid, delta)
    _check_state_match(vsc, beta_arr, state)

    p = state.p.values
    z = np.zeros((grid.Ns, grid.Nt + 1, grid.Nx))
    for j in range(grid.Nt):
        if ctx.has_renewal:
            eta = (vsc.r_grid[:, j, :] * delta_arr[:, j, :] * p[:, j, :]).sum(axis=0)
            eta = eta * (grid.ds / vsc.gamma0_t[j])
            b = (ctx.renewal_weights(beta_arr, j) * z[:, j, :]).sum(axis=0) + eta
        else:
            b = np.zeros(grid.Nx)
        v2 = ctx.transport_reaction(j, z[:, j, :], b, with_source=False)
        z[:, j + 1, :] = ctx.diffusion.solve(v2)
    out = SensitivitySolution(z=Field(grid, ("size", "time", "space"), z))
    out.z.check_finite()
    return out


def duality_residual(vsc: ValidatedScenario, beta, state: StateSolution,
                     adjoint: AdjointSolution, delta,
                     ctx: StepContext | None = None) -> float:
    """Relative defect of the sensitivity/adjoint pairing.

    Compares -c * integral(z) against integral(delta * r * p * phi0) under
    the discrete volume quadrature; with the transposed adjoint both sides
    agree to rounding error.
    """
    ctx = ctx or StepContext(vsc)
    grid = vsc.grid
    delta_arr = control_array(grid, delta)
    z = solve_sensitivity(vsc, beta, state, delta_arr, ctx=ctx).z.values
    w = grid.volume_weights()
    lhs = -vsc.cost.c * float((w * z).sum())
    rhs = float((w * delta_arr * vsc.r_grid * state.p.values
                 * adjoint.phi_at_zero.values[None, :, :]).sum())
    return abs(lhs - rhs) / max(1.0, abs(rhs))


def assemble_step_matrix(ctx: StepContext, beta, j: int, adjoint: bool = False) -> np.ndarray:
    """Dense matrix of the linear one-step map (or its adjoint) at level j.

    Intended for small-grid verification; columns are the images of the unit
    vectors on the flattened (size, space) slice.
    """
    grid = ctx.vsc.grid
    beta_arr = control_array(grid, beta)
    n = grid.Ns * grid.Nx
    mat = np.empty((n, n))
    for col in range(n):
        e = np.zeros(n)
        e[col] = 1.0
        u = e.reshape(grid.Ns, grid.Nx)
        if adjoint:
            out, _ = ctx.apply_step_adjoint(beta_arr, j, u)
        else:
            out = ctx.apply_step_linear(beta_arr, j, u)
        mat[:, col] = out.ravel()
    return mat


def solve_state_and_adjoint(vsc: ValidatedScenario, beta, ctx: StepContext | None = None):
    """Convenience pair used by the optimizer loop and diagnostics."""
    ctx = ctx or StepContext(vsc)
    state = solve_state(vsc, beta, ctx=ctx)
    return state, solve_adjoint(vsc, beta, state, ctx=ctx), ctx
