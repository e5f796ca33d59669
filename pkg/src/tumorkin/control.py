"""Feedback therapy protocols.

Closed-form instantaneous controls minimizing (x'' - x_d)^2 + nu |u|^p over an
elementary transition x'' = x + eps S(x) u, for the quadratic (p = 2) and L1
(p = 1) penalizations, plus the drift term the p = 2 control contributes to
the Fokker-Planck equation.  The penalization is always expressed through the
scale-free kappa, with nu = eps * kappa.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Union

import numpy as np


class Selective(Enum):
    """Selective function S(x) weighting the therapy action."""

    UNIT = "unit"        # S(x) = 1
    SQRT_X = "sqrt_x"    # S(x) = sqrt(x), heavier on large tumours

    def __call__(self, x):
        if self is Selective.UNIT:
            return np.ones_like(np.asarray(x, dtype=float))
        return np.sqrt(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class AtTime:
    """Activate the therapy at a fixed time."""

    t: float


@dataclass(frozen=True)
class MeanThreshold:
    """Activate once the z-expected mean volume exceeds a threshold."""

    xbar: float


Activation = Union[AtTime, MeanThreshold]


@dataclass(frozen=True)
class ControlSpec:
    """Therapy protocol (p, kappa, x_d, S, admissible set, activation rule)."""

    p: int
    kappa: float
    x_d: float = 0.18
    selective: Selective = Selective.UNIT
    u_bounds: tuple[float, float] = (-50.0, 50.0)
    activation: Activation = field(default_factory=lambda: AtTime(0.0))

    def __post_init__(self) -> None:
        if self.p not in (1, 2):
            raise ValueError(f"p must be 1 or 2, got {self.p}")
        if not self.kappa > 0.0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if not self.x_d > 0.0:
            raise ValueError(f"x_d must be positive, got {self.x_d}")
        lo, hi = self.u_bounds
        if not lo <= 0.0 <= hi or lo == hi:
            raise ValueError("u_bounds must be a nonempty interval containing 0")


def _as_array(x) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    return np.atleast_1d(arr), arr.ndim == 0


def optimal_u_p2(x, spec: ControlSpec, eps: float):
    """Quadratic-cost optimum u* = -S(x) eps / (eps^2 S^2(x) + nu) (x - x_d)."""
    if spec.p != 2:
        raise ValueError("optimal_u_p2 requires a p = 2 control")
    arr, scalar = _as_array(x)
    s = spec.selective(arr)
    nu = eps * spec.kappa
    out = -s * eps / (eps * eps * s * s + nu) * (arr - spec.x_d)
    return float(out[0]) if scalar else out


def optimal_u_p1(x, spec: ControlSpec, eps: float):
    """L1-cost optimum: soft threshold with dead zone |x - x_d| <= nu/(2 eps S).

    Outside the dead zone the unclamped value is
    sign(x - x_d) nu / (2 eps^2 S^2) - (x - x_d)/(eps S), then projected onto
    u_bounds.  Where S(x) = 0 (sqrt selectivity at x = 0) the threshold
    diverges and the control is inactive.
    """
    if spec.p != 1:
        raise ValueError("optimal_u_p1 requires a p = 1 control")
    arr, scalar = _as_array(x)
    s = spec.selective(arr)
    nu = eps * spec.kappa
    w = arr - spec.x_d
    out = np.zeros_like(arr)
    with np.errstate(divide="ignore", invalid="ignore"):
        active = (s > 0.0) & (np.abs(w) > nu / (2.0 * eps * s))
    if np.any(active):
        sa = s[active]
        wa = w[active]
        raw = np.sign(wa) * nu / (2.0 * eps * eps * sa * sa) - wa / (eps * sa)
        out[active] = np.clip(raw, spec.u_bounds[0], spec.u_bounds[1])
    return float(out[0]) if scalar else out


def apply_control(x, spec: ControlSpec, eps: float):
    """Post-therapy size x'' = x + eps S(x) u* for the spec's own p."""
    arr, scalar = _as_array(x)
    u = optimal_u_p2(arr, spec, eps) if spec.p == 2 else optimal_u_p1(arr, spec, eps)
    out = arr + eps * spec.selective(arr) * u
    # the closed forms keep x'' between x and x_d, but rounding can graze 0
    np.maximum(out, 0.0, out=out)
    return float(out[0]) if scalar else out


def controlled_drift(x, spec: ControlSpec):
    """Drift contribution S^2(x) (x - x_d) / kappa of the p = 2 control.

    This is the term entering the controlled Fokker-Planck flux with positive
    sign under d/dx; the p = 1 control has no such closed form.
    """
    if spec.p != 2:
        raise ValueError("the Fokker-Planck drift closed form exists only for p = 2")
    arr, scalar = _as_array(x)
    s = spec.selective(arr)
    out = s * s * (arr - spec.x_d) / spec.kappa
    return float(out[0]) if scalar else out


def cost(x_after, u, spec: ControlSpec, eps: float):
    """Instantaneous therapy cost (x'' - x_d)^2 + nu |u|^p with nu = eps kappa."""
    nu = eps * spec.kappa
    x_arr = np.asarray(x_after, dtype=float)
    u_arr = np.asarray(u, dtype=float)
    out = (x_arr - spec.x_d) ** 2 + nu * np.abs(u_arr) ** spec.p
    return float(out) if out.ndim == 0 else out
