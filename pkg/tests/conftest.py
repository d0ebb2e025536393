"""Shared helpers: smooth random rates and small scenario builders."""

from __future__ import annotations

import numpy as np
import pytest

from sizepop import rates as rate_lib
from sizepop.model import (
    ControlBounds,
    CostParams,
    Grid3,
    Scenario,
    Tolerances,
    VitalRates,
    validate_scenario,
)

AXIS_SPANS = {"size": 1.0, "time": 1.0, "space": 1.0}


def smooth_random_rate(rng, axes, base, amp, n_modes=2):
    """Random smooth positive function of the given axes on the unit box.

    A low-order cosine series with coefficients scaled so the value stays
    within [base - amp, base + amp]; evaluable on any grid, which lets the
    same draw be sampled on two refinement levels.
    """
    coeffs = rng.uniform(-1.0, 1.0, size=(n_modes,) * len(axes))
    coeffs *= amp / max(np.abs(coeffs).sum(), 1e-12)

    def fn(*args):
        out = np.full_like(args[0], float(base))
        for multi in np.ndindex(*coeffs.shape):
            term = np.full_like(args[0], coeffs[multi])
            for ax_i, m in enumerate(multi):
                term = term * np.cos(np.pi * (m + 1) * args[ax_i])
            out = out + term
        return out

    return rate_lib.from_callable(fn, axes)


def unit_scenario(grid=None, *, gamma=1.0, mu=0.0, r=0.5, f=0.0, C=0.0, p0=1.0,
                  k=1e-300, phi_l=0.0, phi_m=1.0, cost=None, tol=None) -> "ValidatedScenario":
    """Constant-rate scenario on the unit box; diffusion defaults to inert."""
    grid = grid or Grid3(Ns=10, Nt=10, Nx=3, s_f=1.0, T=1.0, L=1.0)
    sc = Scenario(
        grid=grid,
        rates=VitalRates.constants(gamma=gamma, mu=mu, r=r, f=f, C=C, p0=p0),
        k=k,
        bounds=ControlBounds.constants(phi_l, phi_m),
        cost=cost or CostParams(),
        tolerances=tol or Tolerances(),
    )
    return validate_scenario(sc)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
