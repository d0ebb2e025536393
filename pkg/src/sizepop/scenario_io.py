"""Scenario files and field serialization.

Scenario files are strict JSON: unknown keys anywhere are rejected so a
misspelled rate cannot silently fall back to a default.  Rates are numbers
(constants), {"preset": name, ...} entries from the analytic catalog, or
{"table": nested-list} arrays sampled on the grid.

Fields serialize to CSV with the fixed header ``s,t,x,value``; rows iterate
size-major, then time, then space over the axes the field actually has, and
the columns of inactive axes stay empty.  Values print with 17 significant
digits, which round-trips float64 bit-exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import rates as rate_lib
from .model import (
    ControlBounds,
    CostParams,
    Field,
    Grid3,
    Scenario,
    Tolerances,
    VitalRates,
)
from .rates import RateField, RateSpecError


class ScenarioFileError(ValueError):
    """Malformed scenario file; message carries the offending key or location."""


RATE_AXES = {
    "gamma": ("size", "time"),
    "mu": ("size", "time", "space"),
    "r": ("size", "time", "space"),
    "f": ("size", "time", "space"),
    "C": ("time", "space"),
    "p0": ("size", "space"),
    "phi_l": ("size", "time", "space"),
    "phi_m": ("size", "time", "space"),
    "beta": ("size", "time", "space"),
}

_GRID_KEYS = {"Ns", "Nt", "Nx", "s_f", "T", "L"}
_COST_KEYS = {"rho", "c", "sign_variant"}
_TOL_KEYS = {"fixed_point_tol", "max_iters", "relax_omega", "seed"}


def _require_keys(d: dict, required: set, allowed: set, where: str) -> None:
    missing = required - set(d)
    if missing:
        raise ScenarioFileError(f"{where}: {sorted(missing)[0]} required")
    unknown = set(d) - allowed
    if unknown:
        raise ScenarioFileError(f"{where}: unknown key {sorted(unknown)[0]!r}")


def parse_rate(name: str, spec, grid: Grid3) -> RateField:
    """Build one rate from its file entry; errors name the offending key."""
    axes = RATE_AXES[name]
    if isinstance(spec, (int, float)):
        return rate_lib.constant(float(spec), axes)
    if not isinstance(spec, dict):
        raise ScenarioFileError(f"rates.{name}: expected number or object, got {type(spec).__name__}")
    if "preset" in spec:
        params = {k: v for k, v in spec.items() if k != "preset"}
        try:
            return rate_lib.from_preset(spec["preset"], axes, params, x_length=grid.L)
        except RateSpecError as err:
            raise ScenarioFileError(f"rates.{name}: {err}") from err
    if "table" in spec:
        extra = set(spec) - {"table"}
        if extra:
            raise ScenarioFileError(f"rates.{name}: unknown key {sorted(extra)[0]!r}")
        values = np.asarray(spec["table"], dtype=float)
        coords = [grid.axis_coords(a) for a in axes]
        expected = tuple(len(c) for c in coords)
        if values.shape != expected:
            raise ScenarioFileError(
                f"rates.{name}: table shape {values.shape} does not match grid {expected}"
            )
        return rate_lib.from_table(values, axes, coords)
    raise ScenarioFileError(f"rates.{name}: need a number, a 'preset' entry or a 'table' entry")


def scenario_from_dict(doc: dict, where: str = "scenario") -> Scenario:
    _require_keys(doc, {"grid", "rates", "diffusion_k", "bounds"},
                  {"grid", "rates", "diffusion_k", "bounds", "cost", "tolerances"}, where)
    gd = doc["grid"]
    _require_keys(gd, _GRID_KEYS, _GRID_KEYS, "grid")
    grid = Grid3(Ns=int(gd["Ns"]), Nt=int(gd["Nt"]), Nx=int(gd["Nx"]),
                 s_f=float(gd["s_f"]), T=float(gd["T"]), L=float(gd["L"]))

    rd = doc["rates"]
    rate_names = {"gamma", "mu", "r", "f", "C", "p0"}
    _require_keys(rd, rate_names, rate_names, "rates")
    rates = VitalRates(**{name: parse_rate(name, rd[name], grid) for name in rate_names})

    bd = doc["bounds"]
    _require_keys(bd, {"phi_l", "phi_m"}, {"phi_l", "phi_m"}, "bounds")
    bounds = ControlBounds(phi_l=parse_rate("phi_l", bd["phi_l"], grid),
                           phi_m=parse_rate("phi_m", bd["phi_m"], grid))

    cost = CostParams()
    if "cost" in doc:
        cd = doc["cost"]
        _require_keys(cd, set(), _COST_KEYS, "cost")
        cost = CostParams(rho=float(cd.get("rho", cost.rho)),
                          c=float(cd.get("c", cost.c)),
                          sign_variant=cd.get("sign_variant", cost.sign_variant))

    tol = Tolerances()
    if "tolerances" in doc:
        td = doc["tolerances"]
        _require_keys(td, set(), _TOL_KEYS, "tolerances")
        tol = Tolerances(fixed_point_tol=float(td.get("fixed_point_tol", tol.fixed_point_tol)),
                         max_iters=int(td.get("max_iters", tol.max_iters)),
                         relax_omega=float(td.get("relax_omega", tol.relax_omega)),
                         seed=int(td.get("seed", tol.seed)))

    return Scenario(grid=grid, rates=rates, k=float(doc["diffusion_k"]),
                    bounds=bounds, cost=cost, tolerances=tol)


def parse_scenario(path) -> Scenario:
    """Load a scenario file; parse errors report line and column."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ScenarioFileError(f"cannot read {path}: {err}") from err
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise ScenarioFileError(
            f"{path}: parse error at line {err.lineno}, column {err.colno}: {err.msg}"
        ) from err
    if not isinstance(doc, dict):
        raise ScenarioFileError(f"{path}: top level must be an object")
    return scenario_from_dict(doc, where=str(path))


_AXIS_COLUMN = {"size": 0, "time": 1, "space": 2}


def write_field_csv(field: Field, path) -> None:
    """Serialize a field; see the module docstring for the format."""
    grid = field.grid
    coords = [grid.axis_coords(a) for a in field.axes]
    flat = field.values.reshape(-1)
    lines = ["s,t,x,value"]
    idx_shape = tuple(len(c) for c in coords)
    for flat_i, multi in enumerate(np.ndindex(*idx_shape)):
        cols = ["", "", ""]
        for a, m in zip(field.axes, multi):
            cols[_AXIS_COLUMN[a]] = f"{coords[field.axes.index(a)][m]:.17g}"
        lines.append(f"{cols[0]},{cols[1]},{cols[2]},{flat[flat_i]:.17g}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_field_csv(path, grid: Grid3) -> Field:
    """Read a field written by write_field_csv back onto its grid.

    Coordinates are checked against the grid sample points; values
    round-trip bit-exactly.
    """
    lines = Path(path).read_text().strip().split("\n")
    if not lines or lines[0].strip() != "s,t,x,value":
        raise ScenarioFileError(f"{path}: expected header 's,t,x,value'")
    rows = [line.split(",") for line in lines[1:]]
    if not rows:
        raise ScenarioFileError(f"{path}: no data rows")
    if any(len(r) != 4 for r in rows):
        raise ScenarioFileError(f"{path}: malformed row (need 4 columns)")
    present = [rows[0][c] != "" for c in range(3)]
    axes = tuple(a for a, p in zip(("size", "time", "space"), present) if p)
    if not axes:
        raise ScenarioFileError(f"{path}: field varies over no axis")
    shape = tuple(grid.axis_len(a) for a in axes)
    if len(rows) != int(np.prod(shape)):
        raise ScenarioFileError(
            f"{path}: {len(rows)} rows but grid implies {int(np.prod(shape))} for axes {axes}"
        )
    values = np.array([float(r[3]) for r in rows]).reshape(shape)
    # verify the coordinate columns follow the grid ordering
    for pos, multi in zip(range(len(rows)), np.ndindex(*shape)):
        for a, m in zip(axes, multi):
            got = float(rows[pos][_AXIS_COLUMN[a]])
            want = grid.axis_coords(a)[m]
            if got != want:
                raise ScenarioFileError(
                    f"{path}: row {pos + 2}: coordinate {got} does not match grid value {want}"
                )
    return Field(grid, axes, values)
