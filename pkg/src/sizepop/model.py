"""Core data model: grids, fields, vital rates, control bounds, scenarios.

All types are plain frozen dataclasses and are immutable once validated, so a
validated scenario can be shared read-only across concurrent runs.  The grid
is a tensor product of cell-centered size samples, node time levels and node
space points; fields store dense arrays in (size, time, space) order over
whichever of the three axes they vary.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import rates as rate_lib
from .rates import RateField

GROWTH_CASES = ("a", "b", "c", "d")


class ScenarioValidationError(ValueError):
    """One or more scenario invariants are violated; lists each by name."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("scenario validation failed:\n  " + "\n  ".join(self.violations))


class NumericalError(RuntimeError):
    """A solver produced a non-finite value; carries the offending index."""


@dataclass(frozen=True)
class Grid3:
    """Tensor-product discretization of (s, t, x) in [0,s_f]x[0,T]x[0,L].

    Size uses cell centers s_i = (i + 1/2)*ds so the newborn boundary s = 0 is
    never a sample point; time and space use nodes t_j = j*dt, x_k = k*dx.
    """

    Ns: int
    Nt: int
    Nx: int
    s_f: float
    T: float
    L: float

    @property
    def ds(self) -> float:
        return self.s_f / self.Ns

    @property
    def dt(self) -> float:
        return self.T / self.Nt

    @property
    def dx(self) -> float:
        return self.L / (self.Nx - 1)

    @property
    def s_centers(self) -> np.ndarray:
        return (np.arange(self.Ns) + 0.5) * self.ds

    @property
    def t_points(self) -> np.ndarray:
        return np.arange(self.Nt + 1) * self.dt

    @property
    def x_points(self) -> np.ndarray:
        return np.arange(self.Nx) * self.dx

    def axis_len(self, axis: str) -> int:
        return {"size": self.Ns, "time": self.Nt + 1, "space": self.Nx}[axis]

    def axis_coords(self, axis: str) -> np.ndarray:
        return {"size": self.s_centers, "time": self.t_points, "space": self.x_points}[axis]

    def space_weights(self) -> np.ndarray:
        """Trapezoid node weights in x (half weight at the two ends)."""
        w = np.ones(self.Nx)
        w[0] = w[-1] = 0.5
        return w

    def time_weights(self) -> np.ndarray:
        """Left-endpoint rule weights over the Nt+1 time levels.

        The final level carries zero weight, which is what makes the
        discrete-transpose adjoint vanish identically at t = T.
        """
        w = np.ones(self.Nt + 1)
        w[-1] = 0.0
        return w

    def volume_weights(self) -> np.ndarray:
        """Quadrature weights for integrals over (s, t, x): midpoint in size,
        left-endpoint in time, trapezoid in space.  Shape (Ns, Nt+1, Nx)."""
        wt = self.time_weights() * self.dt
        wx = self.space_weights() * self.dx
        return self.ds * wt[None, :, None] * wx[None, None, :] * np.ones((self.Ns, 1, 1))

    def flatten_index(self, i: int, j: int, k: int) -> int:
        return (i * (self.Nt + 1) + j) * self.Nx + k

    def unflatten_index(self, flat: int) -> tuple[int, int, int]:
        k = flat % self.Nx
        rest = flat // self.Nx
        return rest // (self.Nt + 1), rest % (self.Nt + 1), k

    def validate(self) -> list[str]:
        bad = []
        if self.Ns < 2:
            bad.append(f"grid invariant violated: Ns >= 2 (got {self.Ns})")
        if self.Nt < 2:
            bad.append(f"grid invariant violated: Nt >= 2 (got {self.Nt})")
        if self.Nx < 2:
            bad.append(f"grid invariant violated: Nx >= 2 (got {self.Nx})")
        if not self.s_f > 0:
            bad.append(f"grid invariant violated: s_f > 0 (got {self.s_f})")
        if not self.T > 0:
            bad.append(f"grid invariant violated: T > 0 (got {self.T})")
        if not self.L > 0:
            bad.append(f"grid invariant violated: L > 0 (got {self.L})")
        return bad


@dataclass(frozen=True)
class Field:
    """Dense sampled scalar field over a subset of the grid axes.

    Values are stored in row-major (size, time, space) order restricted to
    the active axes and are frozen after construction.
    """

    grid: Grid3
    axes: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        if tuple(a for a in ("size", "time", "space") if a in self.axes) != self.axes:
            raise ValueError(f"axes must be in (size, time, space) order, got {self.axes}")
        expected = tuple(self.grid.axis_len(a) for a in self.axes)
        vals = np.ascontiguousarray(np.asarray(self.values, dtype=float))
        if vals.shape != expected:
            raise ValueError(f"field shape {vals.shape} does not match axes {self.axes} -> {expected}")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    def check_finite(self) -> None:
        if not np.all(np.isfinite(self.values)):
            idx = tuple(int(v) for v in np.argwhere(~np.isfinite(self.values))[0])
            raise NumericalError(f"non-finite field value at {dict(zip(self.axes, idx))}")

    @staticmethod
    def full(grid: Grid3, axes: tuple[str, ...], value: float) -> "Field":
        shape = tuple(grid.axis_len(a) for a in axes)
        return Field(grid, axes, np.full(shape, float(value)))


@dataclass(frozen=True)
class VitalRates:
    """Demographic coefficients: growth gamma(s,t), mortality mu(s,t,x),
    female ratio r(s,t,x), immigration f(s,t,x) of sized individuals,
    immigration C(t,x) of newborns, and the initial density p0(s,x)."""

    gamma: RateField
    mu: RateField
    r: RateField
    f: RateField
    C: RateField
    p0: RateField

    @staticmethod
    def constants(gamma=1.0, mu=0.1, r=0.5, f=0.0, C=0.0, p0=1.0) -> "VitalRates":
        def mk(v, axes):
            return v if isinstance(v, RateField) else rate_lib.constant(v, axes)

        return VitalRates(
            gamma=mk(gamma, ("size", "time")),
            mu=mk(mu, ("size", "time", "space")),
            r=mk(r, ("size", "time", "space")),
            f=mk(f, ("size", "time", "space")),
            C=mk(C, ("time", "space")),
            p0=mk(p0, ("size", "space")),
        )


@dataclass(frozen=True)
class ControlBounds:
    """Pointwise box for the fertility control: phi_l <= beta <= phi_m."""

    phi_l: RateField
    phi_m: RateField

    @staticmethod
    def constants(phi_l: float, phi_m: float) -> "ControlBounds":
        return ControlBounds(
            phi_l=rate_lib.constant(phi_l, ("size", "time", "space")),
            phi_m=rate_lib.constant(phi_m, ("size", "time", "space")),
        )


@dataclass(frozen=True)
class CostParams:
    """Objective weights: J = integral of [p -/+ rho/2 * beta^2].

    `sign_variant` selects the sign of the control term: "minus" subtracts
    the quadratic control cost, "plus" adds it.  `c` scales the adjoint
    source so the projected update beta = F(-r p phi0 / (c rho)) holds with
    c exposed in configuration.
    """

    rho: float = 1.0
    c: float = 1.0
    sign_variant: str = "minus"

    @property
    def control_sign(self) -> float:
        return -1.0 if self.sign_variant == "minus" else 1.0


@dataclass(frozen=True)
class Tolerances:
    """Fixed-point iteration controls plus the seed used by randomized
    diagnostics, kept in configuration so reported constants reproduce."""

    fixed_point_tol: float = 1e-8
    max_iters: int = 200
    relax_omega: float = 1.0
    seed: int = 0


@dataclass(frozen=True)
class Scenario:
    grid: Grid3
    rates: VitalRates
    k: float
    bounds: ControlBounds
    cost: CostParams = CostParams()
    tolerances: Tolerances = Tolerances()


@dataclass(frozen=True)
class GrowthCase:
    """Sign pattern of the growth rate at the size boundaries.

    a: gamma(0,.) > 0 and gamma(s_f,.) > 0     b: gamma(0,.) > 0, gamma(s_f,.) = 0
    c: gamma(0,.) = 0 and gamma(s_f,.) > 0     d: both vanish
    """

    tag: str

    @property
    def has_renewal(self) -> bool:
        return self.tag in ("a", "b")

    @property
    def has_size_exit(self) -> bool:
        return self.tag in ("a", "c")


@dataclass(frozen=True)
class ValidatedScenario:
    """Scenario with every invariant checked and all rates sampled on-grid.

    Grid arrays are shaped (Ns, Nt+1, Nx) for (s,t,x) rates, (Nt+1,) for the
    boundary growth traces, (Nt+1, Nx) for newborn immigration and (Ns, Nx)
    for the initial density.  Immutable; safe to share across runs.
    """

    scenario: Scenario
    growth_case: GrowthCase
    gamma_grid: np.ndarray
    gamma0_t: np.ndarray
    gamma_sf_t: np.ndarray
    mu_grid: np.ndarray
    r_grid: np.ndarray
    f_grid: np.ndarray
    C_grid: np.ndarray
    p0_grid: np.ndarray
    phi_l_grid: np.ndarray
    phi_m_grid: np.ndarray

    def __post_init__(self):
        for name in ("gamma_grid", "gamma0_t", "gamma_sf_t", "mu_grid", "r_grid",
                     "f_grid", "C_grid", "p0_grid", "phi_l_grid", "phi_m_grid"):
            arr = np.ascontiguousarray(getattr(self, name))
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def grid(self) -> Grid3:
        return self.scenario.grid

    @property
    def rates(self) -> VitalRates:
        return self.scenario.rates

    @property
    def k(self) -> float:
        return self.scenario.k

    @property
    def bounds(self) -> ControlBounds:
        return self.scenario.bounds

    @property
    def cost(self) -> CostParams:
        return self.scenario.cost

    @property
    def tolerances(self) -> Tolerances:
        return self.scenario.tolerances

    def with_cost(self, **kw) -> "ValidatedScenario":
        sc = replace(self.scenario, cost=replace(self.scenario.cost, **kw))
        return replace(self, scenario=sc)

    def with_tolerances(self, **kw) -> "ValidatedScenario":
        sc = replace(self.scenario, tolerances=replace(self.scenario.tolerances, **kw))
        return replace(self, scenario=sc)


def _first_bad(mask: np.ndarray, axes: tuple[str, ...]) -> str:
    idx = tuple(int(v) for v in np.argwhere(mask)[0])
    labels = {"size": "i", "time": "j", "space": "k"}
    return "(" + ",".join(f"{labels[a]}={v}" for a, v in zip(axes, idx)) + ")"


def classify_growth_case_values(gamma0_t: np.ndarray, gamma_sf_t: np.ndarray) -> GrowthCase:
    """Classify from the boundary traces; the pattern must not change in time."""
    pos0 = gamma0_t > 0.0
    posf = gamma_sf_t > 0.0
    if pos0.any() != pos0.all() or posf.any() != posf.all():
        raise ScenarioValidationError(["growth case not uniform in time"])
    tag = {(True, True): "a", (True, False): "b", (False, True): "c", (False, False): "d"}[
        (bool(pos0.all()), bool(posf.all()))
    ]
    return GrowthCase(tag)


def validate_scenario(sc: Scenario) -> ValidatedScenario:
    """Check every model invariant and resample all rates onto the grid.

    Violations are collected and reported together, each named after the
    assumption it breaks.
    """
    grid = sc.grid
    violations = grid.validate()
    if violations:
        raise ScenarioValidationError(violations)

    t = grid.t_points
    gamma_grid = sc.rates.gamma(s=grid.s_centers[:, None], t=t[None, :])
    gamma0_t = sc.rates.gamma(s=np.zeros_like(t), t=t)
    gamma_sf_t = sc.rates.gamma(s=np.full_like(t, grid.s_f), t=t)

    def grid3(rate):
        return rate(
            s=grid.s_centers[:, None, None],
            t=t[None, :, None],
            x=grid.x_points[None, None, :],
        )

    mu_grid = grid3(sc.rates.mu)
    r_grid = grid3(sc.rates.r)
    f_grid = grid3(sc.rates.f)
    C_grid = sc.rates.C(t=t[:, None], x=grid.x_points[None, :])
    p0_grid = sc.rates.p0(s=grid.s_centers[:, None], x=grid.x_points[None, :])
    phi_l_grid = grid3(sc.bounds.phi_l)
    phi_m_grid = grid3(sc.bounds.phi_m)

    stx = ("size", "time", "space")
    if (gamma_grid < 0).any() or (gamma0_t < 0).any() or (gamma_sf_t < 0).any():
        violations.append("A1 violated: gamma < 0 somewhere on the grid")
    for name, arr, axes in (
        ("mu", mu_grid, stx),
        ("f", f_grid, stx),
        ("C", C_grid, ("time", "space")),
        ("p0", p0_grid, ("size", "space")),
    ):
        if (arr < 0).any():
            violations.append(f"nonnegativity violated: {name} < 0 at {_first_bad(arr < 0, axes)}")
    if (r_grid <= 0).any():
        violations.append(f"A5 violated: r <= 0 at {_first_bad(r_grid <= 0, stx)}")
    if (r_grid >= 1).any():
        violations.append(f"A5 violated: r >= 1 at {_first_bad(r_grid >= 1, stx)}")
    if (phi_l_grid < 0).any():
        violations.append(f"bounds violated: phi_l < 0 at {_first_bad(phi_l_grid < 0, stx)}")
    if (phi_l_grid > phi_m_grid).any():
        violations.append(
            f"bounds violated: phi_l > phi_m at {_first_bad(phi_l_grid > phi_m_grid, stx)}"
        )
    if not sc.k > 0:
        violations.append(f"diffusion invariant violated: k > 0 (got {sc.k})")
    if not sc.cost.rho > 0:
        violations.append(f"cost invariant violated: rho > 0 (got {sc.cost.rho})")
    if not sc.cost.c > 0:
        violations.append(f"cost invariant violated: c > 0 (got {sc.cost.c})")
    if sc.cost.sign_variant not in ("minus", "plus"):
        violations.append(f"cost invariant violated: unknown sign_variant {sc.cost.sign_variant!r}")
    if not 0 < sc.tolerances.relax_omega <= 1:
        violations.append(
            f"tolerance invariant violated: relax_omega in (0,1] (got {sc.tolerances.relax_omega})"
        )

    growth_case = None
    try:
        growth_case = classify_growth_case_values(gamma0_t, gamma_sf_t)
    except ScenarioValidationError as err:
        violations.extend(err.violations)

    if violations:
        raise ScenarioValidationError(violations)

    return ValidatedScenario(
        scenario=sc,
        growth_case=growth_case,
        gamma_grid=gamma_grid,
        gamma0_t=gamma0_t,
        gamma_sf_t=gamma_sf_t,
        mu_grid=mu_grid,
        r_grid=r_grid,
        f_grid=f_grid,
        C_grid=C_grid,
        p0_grid=p0_grid,
        phi_l_grid=phi_l_grid,
        phi_m_grid=phi_m_grid,
    )


def control_array(grid_or_vsc, beta) -> np.ndarray:
    """Coerce a control given as Field, array, rate or scalar to (Ns,Nt+1,Nx)."""
    grid = grid_or_vsc if isinstance(grid_or_vsc, Grid3) else grid_or_vsc.grid
    shape = (grid.Ns, grid.Nt + 1, grid.Nx)
    if isinstance(beta, Field):
        if beta.axes != ("size", "time", "space"):
            raise ValueError("control field must vary over (size, time, space)")
        return np.asarray(beta.values)
    if isinstance(beta, RateField):
        return _grid_eval_full(beta, grid)
    arr = np.asarray(beta, dtype=float)
    if arr.ndim == 0:
        return np.full(shape, float(arr))
    if arr.shape != shape:
        raise ValueError(f"control array shape {arr.shape} != {shape}")
    return arr


def _grid_eval_full(rate: RateField, grid: Grid3) -> np.ndarray:
    return rate(
        s=grid.s_centers[:, None, None],
        t=grid.t_points[None, :, None],
        x=grid.x_points[None, None, :],
    )
