"""Growth laws of the kinetic tumour model.

Transition functions for the elementary size update, their deterministic ODE
limits (Gompertz, von Bertalanffy, logistic), and the closed-form stationary
densities of the associated Fokker-Planck equation, with and without a
quadratic feedback therapy.

Volumes are in scaled units (1.0 = 10^5 mm^3), times in days.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from enum import Enum
from typing import TYPE_CHECKING

import numpy as np
from scipy.integrate import simpson

from .errors import AdmissibilityError, PositivityError

if TYPE_CHECKING:
    from .control import ControlSpec

#: |delta| below this tolerance routes to the delta -> 0 (Gompertz) formulas.
GOMPERTZ_DELTA_TOL = 1e-8

#: One cubic millimetre in scaled volume units.
MM3 = 1e-5


class ModelKind(Enum):
    GOMPERTZ = "gompertz"
    VON_BERTALANFFY = "von_bertalanffy"
    LOGISTIC = "logistic"


def model_kind(delta: float, tol: float = GOMPERTZ_DELTA_TOL) -> ModelKind:
    """Growth-law family selected by the shape exponent delta."""
    if abs(delta) < tol:
        return ModelKind.GOMPERTZ
    return ModelKind.VON_BERTALANFFY if delta < 0 else ModelKind.LOGISTIC


@dataclass(frozen=True)
class GrowthParams:
    """Microscopic parameter tuple (mu, lambda, delta, x_L, sigma2).

    Attributes:
        mu: birth/death intensity, dimensionless, in (0, 1).
        lam: asymmetry parameter lambda, dimensionless, in [0, 1).
        delta: growth-shape exponent in [-1, 1]; its sign selects the ODE family.
        x_L: carrying capacity in scaled volume units, > 0.
        sigma2: diffusion strength sigma^2 (1/time), >= 0.
    """

    mu: float
    lam: float = 0.0
    delta: float = 0.0
    x_L: float = 1.0
    sigma2: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 < self.mu < 1.0:
            raise ValueError(f"mu must lie in (0, 1), got {self.mu}")
        if not 0.0 <= self.lam < 1.0:
            raise ValueError(f"lambda must lie in [0, 1), got {self.lam}")
        if not -1.0 <= self.delta <= 1.0:
            raise ValueError(f"delta must lie in [-1, 1], got {self.delta}")
        if not self.x_L > 0.0:
            raise ValueError(f"x_L must be positive, got {self.x_L}")
        if self.sigma2 < 0.0:
            raise ValueError(f"sigma2 must be nonnegative, got {self.sigma2}")

    @property
    def kind(self) -> ModelKind:
        return model_kind(self.delta)

    @property
    def gamma(self) -> float:
        """Equilibrium shape ratio sigma^2 / mu."""
        return self.sigma2 / self.mu

    @property
    def phi_bounds(self) -> tuple[float, float]:
        """Range [-mu/(1+lambda), mu/(1-lambda)] of the transition function."""
        return -self.mu / (1.0 + self.lam), self.mu / (1.0 - self.lam)


def _growth_exponent(y: np.ndarray, delta: float) -> np.ndarray:
    # (y^delta - 1)/delta, continued by log y through delta = 0.
    logy = np.log(y)
    if abs(delta) < GOMPERTZ_DELTA_TOL:
        return logy
    return np.expm1(delta * logy) / delta


def _as_positive_array(y, name: str) -> tuple[np.ndarray, bool]:
    arr = np.asarray(y, dtype=float)
    if arr.size and not np.all(arr > 0.0):
        raise ValueError(f"{name} must be strictly positive")
    return arr, arr.ndim == 0


def phi_eps(y, params: GrowthParams, eps: float):
    """Per-transition relative growth rate Phi^eps_delta(y).

    Evaluates mu (1 - e^s) / ((1+lambda) e^s + 1 - lambda) with
    s = eps (y^delta - 1)/delta, where the exponent degenerates to eps log y in
    the Gompertz band |delta| < GOMPERTZ_DELTA_TOL.  The value always lies in
    [-mu/(1+lambda), mu/(1-lambda)].

    Args:
        y: size ratio x / x_L, strictly positive scalar or array.
        params: growth parameters.
        eps: transition scale, > 0.

    Raises:
        ValueError: if y <= 0 anywhere or eps <= 0.
    """
    arr, scalar = _as_positive_array(y, "y")
    if not eps > 0.0:
        raise ValueError(f"eps must be positive, got {eps}")
    s = eps * _growth_exponent(arr, params.delta)
    es = np.exp(s)
    out = params.mu * (-np.expm1(s)) / ((1.0 + params.lam) * es + (1.0 - params.lam))
    return float(out) if scalar else out


def phi_limit(y, params: GrowthParams):
    """Quasi-invariant limit Phi_delta(y) = mu/(2 delta) (1 - y^delta).

    The Gompertz band returns -(mu/2) log y.
    """
    arr, scalar = _as_positive_array(y, "y")
    out = -0.5 * params.mu * _growth_exponent(arr, params.delta)
    return float(out) if scalar else out


def micro_rhs(x, params: GrowthParams):
    """Right-hand side Phi_delta(x/x_L) x of the macroscopic growth ODE."""
    arr = np.asarray(x, dtype=float)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    if arr.size and not np.all(arr >= 0.0):
        raise ValueError("x must be nonnegative")
    out = np.zeros_like(arr)
    pos = arr > 0.0
    if np.any(pos):
        out[pos] = phi_limit(arr[pos] / params.x_L, params) * arr[pos]
    return float(out[0]) if scalar else out


def vb_coefficients(params: GrowthParams) -> tuple[float, float, float]:
    """Coefficients (p, q, a) of the von Bertalanffy form p x^a - q x.

    q = -mu/(2 delta), p = -mu/(2 delta x_L^delta), a = delta + 1; requires
    delta < 0.
    """
    if params.delta >= 0.0:
        raise ValueError("von Bertalanffy coefficients require delta < 0")
    q = -params.mu / (2.0 * params.delta)
    p = q / params.x_L**params.delta
    return p, q, params.delta + 1.0


#: Alias groups accepted by bind_params; at most one name per group.
_BIND_GROUPS = {
    "delta": ("delta", "a"),
    "mu": ("mu", "alpha", "q"),
    "x_L": ("x_L", "p"),
    "lam": ("lam", "lambda"),
    "sigma2": ("sigma2",),
}


def bind_params(base: GrowthParams, names, values) -> GrowthParams:
    """Growth parameters at one realization of the uncertain vector.

    Direct field names (mu, lam, delta, x_L, sigma2) assign as-is; aliases
    from the macroscopic fits are translated: alpha -> mu, a -> delta = a - 1,
    q -> mu = -2 delta q, p -> x_L = (q/p)^(1/delta).  The q and p aliases
    need a negative delta, bound in the same call or taken from base.

    Args:
        base: defaults for every field not mentioned in names.
        names: parameter names, one per value.
        values: realization of the uncertain vector.

    Raises:
        ValueError: unknown name, two names from one alias group, or an alias
            whose translation is undefined for the bound delta.
    """
    vals = dict(zip(names, values, strict=True))
    known = {n for group in _BIND_GROUPS.values() for n in group}
    unknown = set(vals) - known
    if unknown:
        raise ValueError(f"unknown parameter names {sorted(unknown)}")
    for field, group in _BIND_GROUPS.items():
        given = [n for n in group if n in vals]
        if len(given) > 1:
            raise ValueError(f"{given} all bind {field}; give at most one")

    delta = base.delta
    if "delta" in vals:
        delta = float(vals["delta"])
    elif "a" in vals:
        delta = float(vals["a"]) - 1.0

    mu = base.mu
    if "mu" in vals:
        mu = float(vals["mu"])
    elif "alpha" in vals:
        mu = float(vals["alpha"])
    elif "q" in vals:
        if delta >= 0.0:
            raise ValueError("the q alias requires delta < 0")
        mu = -2.0 * delta * float(vals["q"])

    x_L = base.x_L
    if "x_L" in vals:
        x_L = float(vals["x_L"])
    elif "p" in vals:
        if delta >= 0.0:
            raise ValueError("the p alias requires delta < 0")
        p_val = float(vals["p"])
        if not p_val > 0.0:
            raise ValueError(f"p must be positive, got {p_val}")
        q_val = -mu / (2.0 * delta)
        x_L = (q_val / p_val) ** (1.0 / delta)

    lam = float(vals.get("lam", vals.get("lambda", base.lam)))
    sigma2 = float(vals.get("sigma2", base.sigma2))
    return replace(base, mu=mu, lam=lam, delta=delta, x_L=x_L, sigma2=sigma2)


# ---------------------------------------------------------------------------
# Microscopic ODE integration
# ---------------------------------------------------------------------------

#: Default integrator step is min(user step, _STEP_PER_MU / mu).
_STEP_PER_MU = 0.1

_MAX_HALVINGS = 40


def _scalar_rhs(x: float, mu: float, delta: float, x_L: float) -> float:
    # Guarded scalar RHS; nonpositive states poison the step with a NaN so the
    # caller's halving loop can catch them.
    if not x > 0.0:
        return math.nan
    y = x / x_L
    if abs(delta) < GOMPERTZ_DELTA_TOL:
        g = math.log(y)
    else:
        g = math.expm1(delta * math.log(y)) / delta
    return -0.5 * mu * g * x


def _rk4_interval(x: float, t0: float, t1: float, n_sub: int,
                  mu: float, delta: float, x_L: float) -> float:
    h = (t1 - t0) / n_sub
    for _ in range(n_sub):
        k1 = _scalar_rhs(x, mu, delta, x_L)
        k2 = _scalar_rhs(x + 0.5 * h * k1, mu, delta, x_L)
        k3 = _scalar_rhs(x + 0.5 * h * k2, mu, delta, x_L)
        k4 = _scalar_rhs(x + h * k3, mu, delta, x_L)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not (x > 0.0 and math.isfinite(x)):
            return math.nan
    return x


def _trajectory(x0: float, mu: float, delta: float, x_L: float,
                times, max_step: float | None) -> list[float]:
    """Fixed-step RK4 trajectory at the requested times (scalar core).

    Shared verbatim by integrate_micro and the calibration objective so that
    synthetic data and fitted trajectories agree to rounding.
    """
    cap = _STEP_PER_MU / mu
    if max_step is not None:
        cap = min(cap, max_step)
    out = [x0]
    x = x0
    for t0, t1 in zip(times[:-1], times[1:]):
        gap = abs(t1 - t0)
        n_sub = max(1, math.ceil(gap / cap))
        for attempt in range(_MAX_HALVINGS + 1):
            xn = _rk4_interval(x, t0, t1, n_sub, mu, delta, x_L)
            if math.isfinite(xn):
                break
            # step violated positivity: halve and retry the whole interval
            n_sub *= 2
        else:
            raise PositivityError(
                f"RK4 step kept violating positivity after {_MAX_HALVINGS} halvings "
                f"near t={t0}")
        x = xn
        out.append(x)
    return out


def integrate_micro(x0: float, params: GrowthParams, times,
                    max_step: float | None = None) -> np.ndarray:
    """Integrate the growth ODE dx/dt = Phi_delta(x/x_L) x through `times`.

    Fourth-order Runge-Kutta with fixed step min(max_step, 0.1/mu); steps that
    break positivity are halved and the interval retried (error after 40
    halvings).  The trajectory starts at x(times[0]) = x0.

    Args:
        x0: initial volume, > 0.
        params: growth parameters (sigma2 ignored).
        times: strictly monotone time grid with at least one entry.

    Returns:
        Array of volumes, one per requested time.
    """
    t = np.asarray(times, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise ValueError("times must be a nonempty 1-D grid")
    dt = np.diff(t)
    if dt.size and not (np.all(dt > 0.0) or np.all(dt < 0.0)):
        raise ValueError("times must be strictly monotone")
    if not x0 > 0.0:
        raise ValueError(f"x0 must be positive, got {x0}")
    vals = _trajectory(float(x0), params.mu, params.delta, params.x_L,
                       t.tolist(), max_step)
    return np.asarray(vals)


# ---------------------------------------------------------------------------
# Stationary densities
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EquilibriumSpec:
    """Closed-form stationary state of the Fokker-Planck dynamics.

    The free-growth forms are the lognormal (Gompertz) and the Amoroso-type
    density (delta < 0); an optional quadratic (p=2) control multiplies in the
    therapy factors.
    """

    params: GrowthParams
    control: "ControlSpec | None" = None

    def __post_init__(self) -> None:
        if not self.params.sigma2 > 0.0:
            raise ValueError("equilibria require sigma2 > 0")
        if self.control is not None:
            if self.control.p != 2:
                raise ValueError(
                    "closed-form controlled equilibria exist only for p = 2")
            self._check_admissibility()

    def _check_admissibility(self) -> None:
        from .control import Selective

        ctl = self.control
        p = self.params
        if ctl.selective is Selective.SQRT_X and abs(p.delta) >= GOMPERTZ_DELTA_TOL:
            bound = 2.0 * ctl.x_d * p.gamma * abs(p.delta) / p.sigma2
            if not ctl.kappa > bound:
                raise AdmissibilityError(
                    f"S=sqrt(x) control needs kappa > 2 x_d gamma |delta| / sigma^2 "
                    f"= {bound:.6g}, got kappa = {ctl.kappa}")

    @property
    def gamma(self) -> float:
        return self.params.gamma

    @property
    def k(self) -> float:
        """Amoroso shape 1/(gamma |delta|) + 1 (delta < 0 branch only)."""
        if self.params.delta >= -GOMPERTZ_DELTA_TOL:
            raise ValueError("the Amoroso shape is defined for delta < 0")
        return 1.0 / (self.gamma * abs(self.params.delta)) + 1.0

    @property
    def theta(self) -> float:
        """Amoroso scale x_L (1/(gamma delta^2))^(1/|delta|) (delta < 0 only)."""
        if self.params.delta >= -GOMPERTZ_DELTA_TOL:
            raise ValueError("the Amoroso scale is defined for delta < 0")
        d = abs(self.params.delta)
        return self.params.x_L * (1.0 / (self.gamma * d * d)) ** (1.0 / d)

    @property
    def log_mean(self) -> float:
        """Lognormal location log x_L - gamma (Gompertz branch only)."""
        if abs(self.params.delta) >= GOMPERTZ_DELTA_TOL:
            raise ValueError("the lognormal location is defined for delta -> 0")
        return math.log(self.params.x_L) - self.gamma


def _log_pdf_unnormalized(x: np.ndarray, spec: EquilibriumSpec) -> np.ndarray:
    p = spec.params
    g = p.gamma
    logx = np.log(x)
    if abs(p.delta) < GOMPERTZ_DELTA_TOL:
        k = math.log(p.x_L) - g
        out = -logx - (logx - k) ** 2 / (2.0 * g)
    else:
        d = p.delta
        if d > 0.0 and 1.0 / (g * d) - 2.0 <= -1.0:
            raise AdmissibilityError(
                "stationary density is not normalizable: gamma * delta >= 1")
        yd = np.exp(d * (logx - math.log(p.x_L)))
        out = (1.0 / (g * d) - 2.0) * logx - yd / (g * d * d)
    if spec.control is not None:
        from .control import Selective

        ctl = spec.control
        c = 2.0 / (p.sigma2 * ctl.kappa)
        if ctl.selective is Selective.UNIT:
            out = out - c * logx - c * ctl.x_d / x
        else:
            out = out + c * ctl.x_d * logx - c * x
    return out


def equilibrium_pdf(x, spec: EquilibriumSpec):
    """Unnormalized stationary density at x (> 0).

    Use equilibrium_density for grid evaluation normalized by quadrature.
    """
    arr, scalar = _as_positive_array(x, "x")
    out = np.exp(_log_pdf_unnormalized(np.atleast_1d(arr), spec))
    return float(out[0]) if scalar else out


def equilibrium_density(x_grid, spec: EquilibriumSpec,
                        warn_truncation: bool = True) -> np.ndarray:
    """Stationary density on a grid, normalized to unit Simpson mass.

    Points at x = 0 get density 0 (every branch vanishes there in the limit).
    If extending the grid to twice its length changes the mass by a relative
    1e-8, a truncation warning is issued: the returned density is then the
    equilibrium conditioned to the truncated domain.
    """
    x = np.asarray(x_grid, dtype=float)
    if x.ndim != 1 or x.size < 3:
        raise ValueError("x_grid must be 1-D with at least 3 points")
    vals = np.zeros_like(x)
    pos = x > 0.0
    # evaluate in log space against the grid maximum to dodge overflow
    logf = _log_pdf_unnormalized(x[pos], spec)
    logf -= logf.max()
    vals[pos] = np.exp(logf)
    mass = simpson(vals, x=x)
    if not mass > 0.0:
        raise AdmissibilityError("stationary density vanishes on the whole grid")
    if warn_truncation:
        lost = truncation_mass_loss(x, spec)
        if lost > 1e-8:
            warnings.warn(
                f"domain truncation loses a relative mass {lost:.2e}",
                stacklevel=2)
    return vals / mass


def truncation_mass_loss(x_grid, spec: EquilibriumSpec) -> float:
    """Relative stationary mass beyond the grid, estimated by doubling it."""
    x = np.asarray(x_grid, dtype=float)
    dx = x[1] - x[0]
    x_ext = np.concatenate([x, x[-1] + dx * np.arange(1, x.size)])
    ext_vals = np.zeros_like(x_ext)
    pos = x_ext > 0.0
    logf = _log_pdf_unnormalized(x_ext[pos], spec)
    ext_vals[pos] = np.exp(logf - logf.max())
    m_in = simpson(ext_vals[: x.size], x=x)
    m_ext = simpson(ext_vals, x=x_ext)
    if not m_ext > 0.0:
        return 0.0
    return max(0.0, 1.0 - m_in / m_ext)
