"""Forward time marching of the size-structured density with diffusion.

Each step from t_j to t_{j+1} is a Lie splitting of three sub-operators:

  1. newborn boundary value from the birth integral (midpoint rule in size),
  2. semi-Lagrangian transport along growth characteristics, scaled by the
     decay factor from the size divergence of the growth rate, followed by
     an exact-in-mortality reaction (multiply by exp(-mu*dt), add f*dt),
  3. one backward-Euler diffusion step in space per size cell, with a
     second-order Neumann ghost-point closure solved by the Thomas algorithm.

Everything the step operator needs that does not depend on the control is
precomputed once per scenario into a StepContext: characteristic feet and
interpolation stencils, boundary-crossing times, decay factors, reaction
coefficients and the prefactored tridiagonal diffusion matrix.  The one-step
map is affine in the state, and the control enters only through the newborn
boundary value, linearly; the adjoint module exploits both facts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .characteristics import RK4_SUBSTEPS, _bisect, _trace_raw, decay_factor, trace_curve
from .model import Field, NumericalError, ValidatedScenario, control_array


class TridiagFactor:
    """Prefactored Thomas solve for a fixed tridiagonal matrix.

    Solves A x = rhs for many right-hand sides, vectorized over leading axes
    of `rhs`; `transposed()` returns the factor of A^T.
    """

    def __init__(self, sub: np.ndarray, diag: np.ndarray, sup: np.ndarray):
        n = len(diag)
        self.sub = np.asarray(sub, dtype=float)
        self.diag = np.asarray(diag, dtype=float)
        self.sup = np.asarray(sup, dtype=float)
        self.n = n
        low = np.empty(n - 1)
        dp = np.empty(n)
        dp[0] = diag[0]
        for i in range(1, n):
            low[i - 1] = sub[i - 1] / dp[i - 1]
            dp[i] = diag[i] - low[i - 1] * sup[i - 1]
        self._low = low
        self._dprime = dp

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        n = self.n
        y = np.array(rhs, dtype=float, copy=True)
        for i in range(1, n):
            y[..., i] -= self._low[i - 1] * y[..., i - 1]
        y[..., n - 1] /= self._dprime[n - 1]
        for i in range(n - 2, -1, -1):
            y[..., i] = (y[..., i] - self.sup[i] * y[..., i + 1]) / self._dprime[i]
        return y

    def transposed(self) -> "TridiagFactor":
        return TridiagFactor(self.sup, self.diag, self.sub)


def neumann_diffusion_factor(nx: int, dx: float, k: float, dt: float) -> TridiagFactor:
    """Factor of I - k*dt*Lxx with ghost-point Neumann closure.

    The closure doubles the off-diagonal entries in the boundary rows, which
    makes the trapezoid node weights a left null vector of Lxx: spatial mass
    is conserved exactly per implicit step.
    """
    a = k * dt / dx**2
    diag = np.full(nx, 1.0 + 2.0 * a)
    sub = np.full(nx - 1, -a)
    sup = np.full(nx - 1, -a)
    sub[-1] = -2.0 * a
    sup[0] = -2.0 * a
    return TridiagFactor(sub, diag, sup)


@dataclass(frozen=True)
class StepTables:
    """Control-independent transport data for one time step.

    For each size cell: the interpolation stencil at the characteristic foot
    (two cell indices and weights, premultiplied by the decay factor), the
    coefficient on the newborn boundary value (from feet that crossed s = 0
    during the step, or from interpolation below the first cell center), and
    the effective reaction interval.
    """

    lo_idx: np.ndarray
    hi_idx: np.ndarray
    lo_w: np.ndarray
    hi_w: np.ndarray
    bnode_w: np.ndarray
    dt_eff: np.ndarray


class StepContext:
    """Precomputed stepping machinery for one validated scenario."""

    def __init__(self, vsc: ValidatedScenario):
        self.vsc = vsc
        grid = vsc.grid
        gamma = vsc.rates.gamma
        self.has_renewal = vsc.growth_case.has_renewal
        ns, nt, nx = grid.Ns, grid.Nt, grid.Nx
        ds, dt = grid.ds, grid.dt
        s = grid.s_centers

        self.tables: list[StepTables] = []
        self.E = np.empty((nt, ns, nx))
        self.Fsrc = np.empty((nt, ns, nx))
        n_sub = RK4_SUBSTEPS
        for j in range(nt):
            t0, t1 = grid.t_points[j], grid.t_points[j + 1]
            # one vectorized backward sweep over all cells: curve values at the
            # RK4 substep nodes give the feet, the step midpoints, and the
            # trapezoid quadrature for the decay factor in one pass
            node_t = t1 + (t0 - t1) * np.arange(n_sub + 1) / n_sub
            svals = trace_curve(gamma, grid, t1, s, node_t)
            feet_raw = svals[-1]
            in_domain = (svals >= 0.0) & (svals <= grid.s_f)
            dsg = np.zeros_like(svals)
            if in_domain.any():
                dsg[in_domain] = gamma.ds(
                    s=svals[in_domain],
                    t=np.broadcast_to(node_t[:, None], svals.shape)[in_domain],
                )
            q_all = np.exp(np.trapezoid(dsg, node_t, axis=0))  # node_t descends: sign flips

            lo_idx = np.zeros(ns, dtype=int)
            hi_idx = np.zeros(ns, dtype=int)
            lo_w = np.zeros(ns)
            hi_w = np.zeros(ns)
            bnode_w = np.zeros(ns)
            dt_eff = np.full(ns, dt)
            s_mid = np.clip(svals[n_sub // 2], 0.0, grid.s_f)
            t_mid = np.full(ns, 0.5 * (t0 + t1))
            for i in range(ns):
                foot_raw = feet_raw[i]
                if foot_raw < 0.0 and self.has_renewal:
                    # characteristic entered through s = 0 during the step
                    t_c = _bisect(lambda eta: _trace_raw(gamma, grid, t1, s[i], eta), t0, t1)
                    q = decay_factor(t_c, t1, t1, s[i], gamma, grid)
                    bnode_w[i] = q
                    dt_eff[i] = t1 - t_c
                    t_mid[i] = 0.5 * (t_c + t1)
                    s_mid[i] = min(max(_trace_raw(gamma, grid, t1, s[i], t_mid[i]), 0.0), grid.s_f)
                else:
                    foot = min(max(foot_raw, 0.0), grid.s_f)
                    q = q_all[i]
                    if foot >= s[0]:
                        i0 = min(int((foot - s[0]) / ds), ns - 2)
                        theta = min(max((foot - s[i0]) / ds, 0.0), 1.0)
                        lo_idx[i], hi_idx[i] = i0, i0 + 1
                        lo_w[i], hi_w[i] = q * (1.0 - theta), q * theta
                    elif self.has_renewal:
                        # blend the newborn boundary value with the first cell
                        theta = foot / s[0]
                        lo_w[i] = q * theta
                        bnode_w[i] = q * (1.0 - theta)
                    else:
                        # no boundary data in cases c/d: constant extrapolation
                        lo_w[i] = q
            self.tables.append(
                StepTables(lo_idx=lo_idx, hi_idx=hi_idx, lo_w=lo_w, hi_w=hi_w,
                           bnode_w=bnode_w, dt_eff=dt_eff)
            )
            mu_mid = vsc.rates.mu(s=s_mid[:, None], t=t_mid[:, None], x=grid.x_points[None, :])
            f_mid = vsc.rates.f(s=s_mid[:, None], t=t_mid[:, None], x=grid.x_points[None, :])
            self.E[j] = np.exp(-mu_mid * dt_eff[:, None])
            self.Fsrc[j] = f_mid * dt_eff[:, None]

        self.diffusion = neumann_diffusion_factor(nx, grid.dx, vsc.k, dt)
        self.diffusion_T = self.diffusion.transposed()

    # -- control-dependent pieces -------------------------------------------

    def renewal_weights(self, beta: np.ndarray, j: int) -> np.ndarray:
        """Coefficients of the birth integral at level j: r*beta*ds/gamma(0,t)."""
        grid = self.vsc.grid
        return self.vsc.r_grid[:, j, :] * beta[:, j, :] * (grid.ds / self.vsc.gamma0_t[j])

    def newborn_value(self, beta: np.ndarray, j: int, p_slice: np.ndarray) -> np.ndarray:
        """Boundary density p(0, t_j, x) from immigration plus births."""
        if not self.has_renewal:
            return np.zeros(self.vsc.grid.Nx)
        rb = self.renewal_weights(beta, j)
        return (rb * p_slice).sum(axis=0) + self.vsc.C_grid[j] / self.vsc.gamma0_t[j]

    def transport_reaction(self, j: int, p_slice: np.ndarray, b: np.ndarray,
                           with_source: bool = True) -> np.ndarray:
        tb = self.tables[j]
        v = (tb.lo_w[:, None] * p_slice[tb.lo_idx, :]
             + tb.hi_w[:, None] * p_slice[tb.hi_idx, :]
             + tb.bnode_w[:, None] * b[None, :])
        out = self.E[j] * v
        if with_source:
            out += self.Fsrc[j]
        return out

    def step(self, beta: np.ndarray, j: int, p_slice: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Full affine step: returns (p at level j+1, newborn value at level j)."""
        b = self.newborn_value(beta, j, p_slice)
        v2 = self.transport_reaction(j, p_slice, b)
        return self.diffusion.solve(v2), b

    def apply_step_linear(self, beta: np.ndarray, j: int, u: np.ndarray) -> np.ndarray:
        """Linear part of the one-step map (immigration and feed dropped)."""
        if self.has_renewal:
            b = (self.renewal_weights(beta, j) * u).sum(axis=0)
        else:
            b = np.zeros(self.vsc.grid.Nx)
        return self.diffusion.solve(self.transport_reaction(j, u, b, with_source=False))

    def apply_step_adjoint(self, beta: np.ndarray, j: int,
                           lam: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Exact transpose of apply_step_linear.

        Also returns the multiplier yhat(x) the step places on the newborn
        boundary value, which is the raw material for the adjoint trace at
        s = 0.
        """
        tb = self.tables[j]
        m = self.E[j] * self.diffusion_T.solve(lam)
        out = np.zeros_like(lam)
        np.add.at(out, tb.lo_idx, tb.lo_w[:, None] * m)
        np.add.at(out, tb.hi_idx, tb.hi_w[:, None] * m)
        yhat = (tb.bnode_w[:, None] * m).sum(axis=0)
        if self.has_renewal:
            out += self.renewal_weights(beta, j) * yhat[None, :]
        return out, yhat


@dataclass(frozen=True)
class StateSolution:
    """Density over the full grid plus the recorded newborn boundary trace
    and the total population per time level.  Keeps the control it was
    solved with so dependent solves can detect mismatches."""

    p: Field
    newborn_density: Field
    total_population: np.ndarray
    beta: np.ndarray


def compute_renewal(p_slice: Field, rates, beta_slice, t: float) -> Field:
    """Newborn density p(0, t, x) = [C + birth integral] / gamma(0, t).

    `p_slice` and `beta_slice` are (size, space) fields at time t; the birth
    integral uses the midpoint rule over size cells.  Only growth cases with
    gamma(0, t) > 0 carry this boundary condition.
    """
    grid = p_slice.grid
    g0 = float(rates.gamma(s=0.0, t=t))
    if g0 <= 0.0:
        raise ValueError("renewal undefined in growth case c/d: gamma(0,t) <= 0")
    s = grid.s_centers[:, None]
    x = grid.x_points[None, :]
    rv = rates.r(s=s, t=t, x=x)
    bv = beta_slice.values if isinstance(beta_slice, Field) else np.broadcast_to(
        np.asarray(beta_slice, dtype=float), (grid.Ns, grid.Nx))
    integral = (rv * bv * p_slice.values).sum(axis=0) * grid.ds
    cval = rates.C(t=np.full(grid.Nx, t), x=grid.x_points)
    return Field(grid, ("space",), (cval + integral) / g0)


def step_transport_reaction(vsc: ValidatedScenario, p_j: Field, beta, j: int,
                            ctx: StepContext | None = None) -> Field:
    """Transport + reaction part of one step (everything but diffusion)."""
    ctx = ctx or StepContext(vsc)
    beta_arr = control_array(vsc, beta)
    b = ctx.newborn_value(beta_arr, j, p_j.values)
    return Field(vsc.grid, ("size", "space"), ctx.transport_reaction(j, p_j.values, b))


def step_diffusion(p_tilde: Field, k: float, dt: float) -> Field:
    """One backward-Euler Neumann diffusion step per size cell."""
    if not k > 0:
        raise ValueError("diffusion coefficient must be positive")
    grid = p_tilde.grid
    factor = neumann_diffusion_factor(grid.Nx, grid.dx, k, dt)
    return Field(grid, p_tilde.axes, factor.solve(p_tilde.values))


def total_population(p: Field) -> np.ndarray:
    """P(t): midpoint-in-size, trapezoid-in-space quadrature per time level."""
    grid = p.grid
    w = grid.space_weights() * grid.dx
    return (p.values * w[None, None, :]).sum(axis=(0, 2)) * grid.ds


def solve_state(vsc: ValidatedScenario, beta, ctx: StepContext | None = None) -> StateSolution:
    """March the density from the initial slice to the horizon.

    Records the newborn boundary value at every level (for cases without a
    renewal boundary this is the constant extrapolation of the first size
    cell) and the total population.  Aborts on the first non-finite value.
    """
    ctx = ctx or StepContext(vsc)
    grid = vsc.grid
    beta_arr = control_array(vsc, beta)
    p = np.empty((grid.Ns, grid.Nt + 1, grid.Nx))
    newborn = np.empty((grid.Nt + 1, grid.Nx))
    p[:, 0, :] = vsc.p0_grid
    for j in range(grid.Nt):
        p_next, b = ctx.step(beta_arr, j, p[:, j, :])
        if not np.all(np.isfinite(p_next)):
            i, k = np.argwhere(~np.isfinite(p_next))[0]
            raise NumericalError(f"non-finite density at (i={i}, j={j + 1}, k={k})")
        newborn[j] = b if ctx.has_renewal else p[0, j, :]
        p[:, j + 1, :] = p_next
    newborn[grid.Nt] = (
        ctx.newborn_value(beta_arr, grid.Nt, p[:, grid.Nt, :])
        if ctx.has_renewal else p[0, grid.Nt, :]
    )
    p_field = Field(grid, ("size", "time", "space"), p)
    beta_frozen = beta_arr.copy()
    beta_frozen.flags.writeable = False
    return StateSolution(
        p=p_field,
        newborn_density=Field(grid, ("time", "space"), newborn),
        total_population=total_population(p_field),
        beta=beta_frozen,
    )
