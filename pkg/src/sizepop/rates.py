"""Rate fields: scalar coefficient functions over subsets of the (s, t, x) axes.

A rate is either a constant, an analytic preset from a small fixed catalog,
a table sampled on the scenario grid, or (API only, not the file format) an
arbitrary callable.  All rates evaluate off-grid, because the characteristic
tracer and the reaction step need values at characteristic midpoints.  Tables
are interpolated multilinearly with constant extension outside the sampled
box; the growth rate additionally exposes its size derivative, computed
analytically for presets and by second-order finite differences for tables.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import RegularGridInterpolator

AXES_ORDER = ("size", "time", "space")

PRESET_NAMES = (
    "constant",
    "linear-in-s",
    "linear-in-t",
    "separable-product",
    "cosine-mode-in-x",
)


class RateSpecError(ValueError):
    """Malformed or out-of-catalog rate specification."""


def _broadcast(axes: tuple[str, ...], s, t, x):
    """Pick the coordinate arrays matching `axes` and broadcast them."""
    coords = {"size": s, "time": t, "space": x}
    picked = [np.asarray(coords[a], dtype=float) for a in axes]
    return np.broadcast_arrays(*picked) if picked else []


@dataclass(frozen=True)
class RateField:
    """Scalar function of a subset of (s, t, x), vectorized over numpy inputs.

    `axes` lists the coordinates the rate genuinely varies over, in canonical
    (size, time, space) order.  `fn` takes exactly those coordinates.
    `d_ds` is the partial derivative in s (only populated for growth rates).
    """

    axes: tuple[str, ...]
    fn: Callable
    d_ds: Callable | None = None
    spec: dict = field(default_factory=dict)

    def __call__(self, s=None, t=None, x=None):
        args = _broadcast(self.axes, s, t, x)
        if not args:
            return float(self.fn())
        out = self.fn(*args)
        return np.broadcast_to(np.asarray(out, dtype=float), args[0].shape).copy()

    def ds(self, s=None, t=None, x=None):
        if self.d_ds is None:
            raise RateSpecError("rate has no size derivative")
        args = _broadcast(self.axes, s, t, x)
        out = self.d_ds(*args)
        return np.broadcast_to(np.asarray(out, dtype=float), args[0].shape).copy()


def constant(value: float, axes: tuple[str, ...]) -> RateField:
    v = float(value)
    return RateField(
        axes=axes,
        fn=lambda *args: np.full_like(args[0], v) if args else v,
        d_ds=(lambda *args: np.zeros_like(args[0])) if "size" in axes else None,
        spec={"preset": "constant", "value": v},
    )


def from_callable(fn: Callable, axes: tuple[str, ...], d_ds: Callable | None = None) -> RateField:
    """Wrap an arbitrary callable of the active coordinates (API use only)."""
    return RateField(axes=axes, fn=fn, d_ds=d_ds, spec={"callable": getattr(fn, "__name__", "fn")})


def from_preset(name: str, axes: tuple[str, ...], params: dict, x_length: float = None) -> RateField:
    """Build a rate from the fixed analytic catalog.

    Presets and their parameters:
      constant            value
      linear-in-s         a + b*s
      linear-in-t         a + b*t
      separable-product   a * (1 + bs*s) * (1 + bt*t) * (1 + bx*x)
      cosine-mode-in-x    a + b*cos(mode*pi*x/L)
    Factors on axes the rate does not have must be left at their defaults.
    """
    p = dict(params)
    if name == "constant":
        return constant(p.pop("value"), axes)
    if name == "linear-in-s":
        if "size" not in axes:
            raise RateSpecError("linear-in-s preset on a rate without a size axis")
        a, b = float(p.pop("a", 0.0)), float(p.pop("b", 0.0))
        _reject_leftover(name, p)
        idx = axes.index("size")
        return RateField(
            axes=axes,
            fn=lambda *args: a + b * args[idx],
            d_ds=lambda *args: np.full_like(args[0], b),
            spec={"preset": name, "a": a, "b": b},
        )
    if name == "linear-in-t":
        if "time" not in axes:
            raise RateSpecError("linear-in-t preset on a rate without a time axis")
        a, b = float(p.pop("a", 0.0)), float(p.pop("b", 0.0))
        _reject_leftover(name, p)
        idx = axes.index("time")
        return RateField(
            axes=axes,
            fn=lambda *args: a + b * args[idx],
            d_ds=(lambda *args: np.zeros_like(args[0])) if "size" in axes else None,
            spec={"preset": name, "a": a, "b": b},
        )
    if name == "separable-product":
        a = float(p.pop("a", 1.0))
        bs = float(p.pop("bs", 0.0))
        bt = float(p.pop("bt", 0.0))
        bx = float(p.pop("bx", 0.0))
        _reject_leftover(name, p)
        for coeff, ax in ((bs, "size"), (bt, "time"), (bx, "space")):
            if coeff != 0.0 and ax not in axes:
                raise RateSpecError(f"separable-product uses the {ax} axis which this rate lacks")

        def fn(*args):
            out = np.full_like(args[0], a)
            for coeff, ax in ((bs, "size"), (bt, "time"), (bx, "space")):
                if ax in axes:
                    out = out * (1.0 + coeff * args[axes.index(ax)])
            return out

        d_ds = None
        if "size" in axes:

            def d_ds(*args):
                out = np.full_like(args[0], a * bs)
                for coeff, ax in ((bt, "time"), (bx, "space")):
                    if ax in axes:
                        out = out * (1.0 + coeff * args[axes.index(ax)])
                return out

        return RateField(axes=axes, fn=fn, d_ds=d_ds,
                         spec={"preset": name, "a": a, "bs": bs, "bt": bt, "bx": bx})
    if name == "cosine-mode-in-x":
        if "space" not in axes:
            raise RateSpecError("cosine-mode-in-x preset on a rate without a space axis")
        if x_length is None:
            raise RateSpecError("cosine-mode-in-x needs the spatial length")
        a = float(p.pop("a", 0.0))
        b = float(p.pop("b", 1.0))
        mode = int(p.pop("mode", 1))
        _reject_leftover(name, p)
        idx = axes.index("space")
        w = mode * np.pi / x_length
        return RateField(
            axes=axes,
            fn=lambda *args: a + b * np.cos(w * args[idx]),
            d_ds=(lambda *args: np.zeros_like(args[0])) if "size" in axes else None,
            spec={"preset": name, "a": a, "b": b, "mode": mode},
        )
    raise RateSpecError(f"unknown preset {name!r}; catalog is {PRESET_NAMES}")


def _reject_leftover(name: str, params: dict) -> None:
    if params:
        raise RateSpecError(f"preset {name!r} got unknown parameters {sorted(params)}")


def from_table(values: np.ndarray, axes: tuple[str, ...], coords: list[np.ndarray]) -> RateField:
    """Rate tabulated on the grid samples, interpolated multilinearly off-grid.

    Coordinates outside the sampled box are clipped first, which realizes the
    constant extension the solvers assume for characteristic feet.
    """
    values = np.asarray(values, dtype=float)
    expected = tuple(len(c) for c in coords)
    if values.shape != expected:
        raise RateSpecError(f"table shape {values.shape} does not match grid samples {expected}")
    interp = RegularGridInterpolator(coords, values, method="linear")
    lows = [c[0] for c in coords]
    highs = [c[-1] for c in coords]

    def fn(*args):
        pts = np.stack([np.clip(a, lo, hi) for a, lo, hi in zip(args, lows, highs)], axis=-1)
        return interp(pts).reshape(np.shape(args[0]))

    d_ds = None
    if "size" in axes:
        i = axes.index("size")
        dvals = np.gradient(values, coords[i], axis=i, edge_order=2)
        dinterp = RegularGridInterpolator(coords, dvals, method="linear")

        def d_ds(*args):
            pts = np.stack([np.clip(a, lo, hi) for a, lo, hi in zip(args, lows, highs)], axis=-1)
            return dinterp(pts).reshape(np.shape(args[0]))

    return RateField(axes=axes, fn=fn, d_ds=d_ds, spec={"table": True, "shape": values.shape})
