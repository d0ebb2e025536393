"""Built-in verification oracles, each with an independently derived answer.

Every oracle computes its expected value from something other than the code
path it checks: the heat-mode factor from the eigenvalue of the tridiagonal
operator, transport from the closed-form characteristic solution, the mass
budget from flux bookkeeping over the transport weight geometry, duality
from the transpose construction applied to raw matrices, gradients from
central differences of the cost, and the optimizer result from exhaustive
enumeration of a quantized control lattice.
"""

from __future__ import annotations

import numpy as np

from . import presets
from .forward import StepContext, solve_state, step_diffusion
from .model import Field, Grid3, ValidatedScenario
from .adjoint import duality_residual, solve_adjoint
from .optimizer import evaluate_cost, gradient_field, optimize

ORACLE_NAMES = (
    "heat_mode_decay",
    "pure_transport",
    "mass_balance",
    "transpose_duality",
    "fd_gradient",
    "brute_force_optimum",
)


def _result(name, passed, measured, tolerance, detail=""):
    return {
        "name": name,
        "passed": bool(passed),
        "measured": float(measured),
        "tolerance": float(tolerance),
        "detail": detail,
    }


def oracle_heat_mode_decay() -> dict:
    """Backward-Euler Neumann step: constants, mass, first-cosine decay.

    The expected amplitude factor is 1/(1 + k*dt*lambda_1) with
    lambda_1 = 2(1 - cos(pi*dx/L))/dx^2, the exact eigenvalue of the
    ghost-closed tridiagonal operator for the first cosine mode.
    """
    grid = Grid3(Ns=2, Nt=2, Nx=51, s_f=1.0, T=1.0, L=1.0)
    k, dt = 0.01, 0.01
    x = grid.x_points
    rng = np.random.default_rng(0)

    const = Field(grid, ("size", "space"), np.full((2, grid.Nx), 3.25))
    err_const = float(np.abs(step_diffusion(const, k, dt).values - 3.25).max())

    rnd = rng.random((2, grid.Nx))
    w = grid.space_weights() * grid.dx
    out = step_diffusion(Field(grid, ("size", "space"), rnd), k, dt).values
    err_mass = abs(float((out * w).sum() - (rnd * w).sum())) / abs(float((rnd * w).sum()))

    lam1 = 2.0 * (1.0 - np.cos(np.pi * grid.dx / grid.L)) / grid.dx**2
    factor = 1.0 / (1.0 + k * lam1 * dt)
    mode = np.cos(np.pi * x / grid.L)
    got = step_diffusion(Field(grid, ("size", "space"), np.tile(mode, (2, 1))), k, dt).values
    err_mode = float(np.abs(got - factor * mode[None, :]).max())

    worst = max(err_const, err_mass, err_mode)
    return _result("heat_mode_decay", worst <= 1e-12, worst, 1e-12,
                   f"const={err_const:.2e} mass={err_mass:.2e} mode={err_mode:.2e}")


def _transport_l1_error(Ns: int) -> float:
    vsc = presets.pure_transport(Ns, Ns, T=0.6)
    st = solve_state(vsc, 0.0)
    grid = vsc.grid
    a, b, T = 0.3, 0.4, grid.T
    s = grid.s_centers
    s0 = (s + a / b) * np.exp(-b * T) - a / b
    exact = np.where(s0 >= 0, np.exp(-(((s0 - 0.3) / 0.08) ** 2)) * np.exp(-b * T), 0.0)
    return float(np.abs(st.p.values[:, -1, 1] - exact).sum() * grid.ds)


def oracle_pure_transport() -> dict:
    """Advection-only run against the closed-form characteristic solution.

    gamma = a + b*s gives psi analytically and a uniform decay factor
    exp(-b*t); the L1 error must be first order: halving the grid must
    reduce it by a factor in [1.6, 2.4].
    """
    e_coarse = _transport_l1_error(60)
    e_fine = _transport_l1_error(120)
    ratio = e_coarse / e_fine
    ok = 1.6 <= ratio <= 2.4
    return _result("pure_transport", ok, ratio, 2.0,
                   f"L1 errors {e_coarse:.3e} -> {e_fine:.3e}, halving ratio {ratio:.3f}")


def mass_budget_residuals(vsc: ValidatedScenario, beta, ctx: StepContext | None = None):
    """Per-step residuals of two mass budgets.

    discrete: departures summed from the transport weight geometry plus the
    reaction and renewal bookkeeping reproduce P(t_{j+1}) - P(t_j) exactly
    (diffusion conserves mass); catches mass leaks in the marching.
    physical: time-centered rate-based budget
    dP/dt = births + feed - deaths - outflow with the size-exit flux from an
    extrapolated boundary trace; first-order consistent.
    """
    ctx = ctx or StepContext(vsc)
    st = solve_state(vsc, beta, ctx=ctx)
    grid = vsc.grid
    P = st.total_population
    wx = grid.space_weights() * grid.dx
    ds, dt = grid.ds, grid.dt
    p = st.p.values
    nb = st.newborn_density.values
    mu, f = vsc.mu_grid, vsc.f_grid
    g_sf, gamma0 = vsc.gamma_sf_t, vsc.gamma0_t
    discrete = np.empty(grid.Nt)
    physical = np.empty(grid.Nt)
    for j in range(grid.Nt):
        tb = ctx.tables[j]
        colsum = np.zeros(grid.Ns)
        np.add.at(colsum, tb.lo_idx, tb.lo_w)
        np.add.at(colsum, tb.hi_idx, tb.hi_w)
        pj = p[:, j, :]
        b = nb[j]
        v = (tb.lo_w[:, None] * pj[tb.lo_idx, :] + tb.hi_w[:, None] * pj[tb.hi_idx, :]
             + tb.bnode_w[:, None] * b[None, :])
        outflow_d = float((((1.0 - colsum)[:, None] * pj) * wx[None, :]).sum() * ds)
        births_d = float((tb.bnode_w.sum() * b * wx).sum() * ds)
        deaths_d = float((((1.0 - ctx.E[j]) * v) * wx[None, :]).sum() * ds)
        feed_d = float((ctx.Fsrc[j] * wx[None, :]).sum() * ds)
        discrete[j] = (P[j + 1] - P[j]) - (births_d + feed_d - deaths_d - outflow_d)

        deaths = float((0.5 * (mu[:, j, :] * p[:, j, :] + mu[:, j + 1, :] * p[:, j + 1, :])
                        * wx[None, :]).sum() * ds)
        feed = float((0.5 * (f[:, j, :] + f[:, j + 1, :]) * wx[None, :]).sum() * ds)
        pm = 0.5 * (p[:, j, :] + p[:, j + 1, :])
        p_sf = 1.5 * pm[-1, :] - 0.5 * pm[-2, :]
        outflow = float((0.5 * (g_sf[j] + g_sf[j + 1]) * p_sf * wx).sum())
        births = float((gamma0[j] * nb[j] * wx).sum())
        physical[j] = (P[j + 1] - P[j]) / dt - (births + feed - deaths - outflow)
    return discrete, physical, P


def oracle_mass_balance() -> dict:
    vsc = presets.mass_balance_preset(48)
    discrete, physical, P = mass_budget_residuals(vsc, 0.4)
    scale = float(P.max())
    d_rel = float(np.abs(discrete).max()) / (scale * vsc.grid.dt)
    p_rel = float(np.abs(physical).max()) / scale
    ok = d_rel <= 1e-12 and p_rel <= 1e-3
    return _result("mass_balance", ok, max(d_rel, p_rel), 1e-3,
                   f"discrete flux bookkeeping {d_rel:.2e} (tol 1e-12), physical budget {p_rel:.2e}")


def oracle_transpose_duality(seed: int = 0, corrupt_adjoint_sign: bool = False) -> dict:
    """<forward_step u, v> vs <u, adjoint_step v> plus the sensitivity pairing.

    The fault-injection hook flips the sign of one entry of the transposed
    step so the oracle demonstrably fails on a corrupted adjoint.
    """
    vsc = presets.tiny_random(seed=seed)
    ctx = StepContext(vsc)
    grid = vsc.grid
    rng = np.random.default_rng(seed + 1)
    beta = 0.2 + rng.random((grid.Ns, grid.Nt + 1, grid.Nx))
    worst = 0.0
    for trial in range(100):
        j = int(rng.integers(0, grid.Nt))
        u = rng.standard_normal((grid.Ns, grid.Nx))
        v = rng.standard_normal((grid.Ns, grid.Nx))
        au = ctx.apply_step_linear(beta, j, u)
        atv, _ = ctx.apply_step_adjoint(beta, j, v)
        if corrupt_adjoint_sign:
            atv = atv.copy()
            atv[0, 0] = -atv[0, 0]
        lhs = float((au * v).sum())
        rhs = float((u * atv).sum())
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), 1e-300))
    state = solve_state(vsc, beta, ctx=ctx)
    adj = solve_adjoint(vsc, beta, state, ctx=ctx)
    delta = rng.standard_normal(beta.shape)
    resid = duality_residual(vsc, beta, state, adj, delta, ctx=ctx)
    ok = worst <= 1e-12 and resid <= 1e-10
    return _result("transpose_duality", ok, max(worst, resid), 1e-12,
                   f"pairing {worst:.2e} (tol 1e-12), sensitivity identity {resid:.2e} (tol 1e-10)")


def gradient_check(vsc: ValidatedScenario, n_directions: int = 5, seed: int = 0,
                   ctx: StepContext | None = None) -> list[dict]:
    """Directional derivatives of the cost vs central differences."""
    ctx = ctx or StepContext(vsc)
    grid = vsc.grid
    rng = np.random.default_rng(seed)
    beta = vsc.phi_l_grid + 0.35 * (vsc.phi_m_grid - vsc.phi_l_grid)
    state = solve_state(vsc, beta, ctx=ctx)
    adj = solve_adjoint(vsc, beta, state, ctx=ctx)
    g = gradient_field(state, adj, vsc.rates, vsc.cost).values
    w = grid.volume_weights()
    eps = 1e-6 * max(float(np.abs(beta).max()), 1.0)
    rows = []
    for d_idx in range(n_directions):
        delta = rng.standard_normal(beta.shape)
        analytic = float((w * g * delta).sum())
        bp = beta + eps * delta
        bm = beta - eps * delta
        jp = evaluate_cost(solve_state(vsc, bp, ctx=ctx), bp, vsc.cost)
        jm = evaluate_cost(solve_state(vsc, bm, ctx=ctx), bm, vsc.cost)
        fd = (jp - jm) / (2.0 * eps)
        rel = abs(analytic - fd) / max(abs(fd), 1e-300)
        rows.append({"direction": d_idx, "analytic": analytic, "fd": fd,
                     "rel_err": rel, "passed": rel < 1e-6})
    return rows


def oracle_fd_gradient(seed: int = 0) -> dict:
    vsc = presets.smooth_default(12, 12, 6, seed=seed)
    rows = gradient_check(vsc, n_directions=5, seed=seed)
    worst = max(r["rel_err"] for r in rows)
    return _result("fd_gradient", all(r["passed"] for r in rows), worst, 1e-6,
                   f"{len(rows)} random directions, worst relative error {worst:.2e}")


def brute_force_search(vsc: ValidatedScenario, n_levels: int = 21,
                       ctx: StepContext | None = None):
    """Exhaustive cost minimization over controls constant in (size, space)
    with one quantized value per active time level."""
    ctx = ctx or StepContext(vsc)
    grid = vsc.grid
    lo = float(vsc.phi_l_grid.max())
    hi = float(vsc.phi_m_grid.min())
    levels = np.linspace(lo, hi, n_levels)
    n_dof = grid.Nt  # the final level carries no cost weight

    def control(vals):
        b = np.full((grid.Ns, grid.Nt + 1, grid.Nx), lo)
        for j, v in enumerate(vals):
            b[:, j, :] = v
        return b

    best_J = np.inf
    best_vals = None
    for multi in np.ndindex(*(n_levels,) * n_dof):
        vals = levels[list(multi)]
        b = control(vals)
        J = evaluate_cost(solve_state(vsc, b, ctx=ctx), b, vsc.cost)
        if J < best_J:
            best_J, best_vals = J, vals
    # cost sensitivity to one quantization step around the winner
    step = levels[1] - levels[0]
    sens = 0.0
    for d in range(n_dof):
        for sign in (-1.0, 1.0):
            vals = best_vals.copy()
            vals[d] += sign * step
            if vals[d] < lo - 1e-12 or vals[d] > hi + 1e-12:
                continue
            b = control(vals)
            sens = max(sens, abs(evaluate_cost(solve_state(vsc, b, ctx=ctx), b, vsc.cost) - best_J))
    return best_J, best_vals, sens


def oracle_brute_force_optimum() -> dict:
    vsc = presets.brute_force_instance()
    ctx = StepContext(vsc)
    best_J, _, sens = brute_force_search(vsc, n_levels=21, ctx=ctx)
    rep = optimize(vsc, ctx=ctx, compute_diagnostics=False)
    gap = rep.J_history[-1] - best_J
    ok = rep.status == "converged" and gap <= sens + 1e-12
    return _result("brute_force_optimum", ok, gap, sens,
                   f"optimize J - exhaustive min J = {gap:.3e}, one-step sensitivity {sens:.3e}")


def run_oracles(names=None, seed: int = 0, corrupt_adjoint_sign: bool = False) -> dict:
    """Run the oracle suite and return a machine-readable report."""
    aliases = {"gradcheck": "fd_gradient"}
    selected = [aliases.get(n, n) for n in names] if names else list(ORACLE_NAMES)
    unknown = set(selected) - set(ORACLE_NAMES)
    if unknown:
        raise ValueError(f"unknown oracle(s) {sorted(unknown)}; available: {ORACLE_NAMES}")
    results = []
    for name in selected:
        if name == "heat_mode_decay":
            results.append(oracle_heat_mode_decay())
        elif name == "pure_transport":
            results.append(oracle_pure_transport())
        elif name == "mass_balance":
            results.append(oracle_mass_balance())
        elif name == "transpose_duality":
            results.append(oracle_transpose_duality(seed=seed,
                                                    corrupt_adjoint_sign=corrupt_adjoint_sign))
        elif name == "fd_gradient":
            results.append(oracle_fd_gradient(seed=seed))
        elif name == "brute_force_optimum":
            results.append(oracle_brute_force_optimum())
    return {
        "seed": seed,
        "oracles": results,
        "all_passed": all(r["passed"] for r in results),
    }
