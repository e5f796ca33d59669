"""Calibration of growth laws from longitudinal volume measurements.

Per-patient fits minimize the L1 misfit of the deterministic growth curve
through the observation times, plus an L1 parameter penalty, over a bounded
parameter box (Nelder-Mead behind a reflect-into-the-box transform, started
from a Latin hypercube screen).  Trajectories are produced by the same scalar
Runge-Kutta core as integrate_micro, so data synthesized here and refitted
have their objective minimum exactly at the generating parameters when
noiseless.

Volumes on disk are mm^3; everything internal is scaled units (1 = 10^5 mm^3).
Cohort-level estimation collects per-patient point estimates and fits Beta
shape parameters on configured clinical ranges by maximum likelihood, with a
Kolmogorov-Smirnov column as the goodness-of-fit readout.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import least_squares, minimize
from scipy.special import betaln, kolmogorov
from scipy.stats import qmc

from .growth_models import (
    MM3,
    GrowthParams,
    ModelKind,
    bind_params,
    integrate_micro,
)
from .uq_basis import BetaOn, RandomVector, Uniform

#: Severed-run guard for the onset march.
_MAX_MARCH = 100_000


@dataclass(frozen=True)
class PatientSeries:
    """Longitudinal tumour-volume record of one patient.

    Times in days, volumes in mm^3; at least two observations, strictly
    increasing in time, all volumes positive.
    """

    patient_id: str
    t_days: np.ndarray
    volume_mm3: np.ndarray

    def __post_init__(self) -> None:
        t = np.asarray(self.t_days, dtype=float)
        v = np.asarray(self.volume_mm3, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size < 2:
            raise ValueError(
                f"patient {self.patient_id}: need matching 1-D series with at "
                f"least 2 observations")
        if not np.all(np.diff(t) > 0.0):
            raise ValueError(f"patient {self.patient_id}: times must strictly increase")
        if not np.all(v > 0.0):
            raise ValueError(f"patient {self.patient_id}: volumes must be positive")
        object.__setattr__(self, "t_days", t)
        object.__setattr__(self, "volume_mm3", v)

    @property
    def volumes_scaled(self) -> np.ndarray:
        return self.volume_mm3 * MM3


def _model_kind(model) -> ModelKind:
    if isinstance(model, ModelKind):
        return model
    return ModelKind(model)


def _theta_names(kind: ModelKind) -> tuple[str, ...]:
    if kind is ModelKind.GOMPERTZ:
        return ("alpha", "x_L")
    if kind is ModelKind.VON_BERTALANFFY:
        return ("a", "p", "q")
    raise ValueError(f"no fit parametrization for {kind}")


def _theta_params(kind: ModelKind, theta) -> GrowthParams:
    # the vB delta placeholder is overwritten by the bound a exponent
    delta = 0.0 if kind is ModelKind.GOMPERTZ else -0.25
    template = GrowthParams(mu=0.01, lam=0.0, delta=delta, x_L=1.0)
    return bind_params(template, _theta_names(kind), theta)


@dataclass(frozen=True)
class FitResult:
    """Point estimate of one patient's growth law.

    theta is (alpha, x_L) for Gompertz and (a, p, q) for von Bertalanffy;
    residual is the L1 data misfit (scaled units) at the estimate, without the
    parameter penalty.  onset_shift is the fitted curve's crossing time of the
    1 mm^3 onset volume (None when the curve never crosses it), so subtracting
    it aligns patients at a common onset.  degenerate marks all-equal series,
    returned as the flat boundary fit without optimization.
    """

    patient_id: str
    model: ModelKind
    theta: tuple[float, ...]
    residual: float
    anchor_t: float
    anchor_x: float           # scaled units
    onset_shift: float | None = None
    degenerate: bool = False
    n_evals: int = 0

    @property
    def params(self) -> GrowthParams:
        return _theta_params(self.model, self.theta)

    @property
    def x_L_implied(self) -> float:
        """Carrying capacity; for the (a, p, q) form, (q/p)^(1/(a-1))."""
        return self.params.x_L


def predict_volumes(kind: ModelKind, theta, t_days, anchor_x: float) -> np.ndarray:
    """Growth curve through the observation times, anchored at the first.

    Scaled units in and out; this is the single trajectory route shared by
    synthesis and fitting.
    """
    params = _theta_params(kind, theta)
    return integrate_micro(anchor_x, params, t_days)


def _reflect(v: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    # triangle-wave fold into the box; continuous, keeps NM unconstrained
    span = hi - lo
    t = np.mod(v - lo, 2.0 * span)
    return lo + np.where(t > span, 2.0 * span - t, t)


def _default_bounds(kind: ModelKind, obs_scaled: np.ndarray) -> tuple[tuple[float, float], ...]:
    top = float(obs_scaled.max())
    if kind is ModelKind.GOMPERTZ:
        return ((1e-4, 0.5), (top * (1.0 + 1e-6), top * 100.0))
    return ((0.55, 0.95), (1e-4, 1.0), (1e-3, 0.3))


def fit_series(
    series: PatientSeries,
    model="gompertz",
    beta_reg: float = 1e-3,
    bounds=None,
    n_starts: int = 16,
    seed: int = 0,
    patience: int = 2,
    perfect_fit_tol: float = 1e-10,
    max_nfev: int = 400,
    polish_maxfev: int = 400,
    compute_onset: bool = True,
) -> FitResult:
    """Estimate one patient's growth parameters.

    The reported objective is sum_h |x_theta(t_h) - obs_h| + beta_reg *
    ||theta||_1 in scaled units, with the curve anchored at the first
    observation.  n_starts Latin-hypercube points are screened by that
    objective; the search itself descends the smooth squared misfit
    (bounded trust-region least squares, which does not stall on the L1
    kinks) from the best screened starts until `patience` consecutive starts
    fail to improve or the misfit drops below perfect_fit_tol, and a short
    simplex polish of the true objective from the winner returns the final
    point.

    Args:
        series: the observations.
        model: "gompertz" (theta = (alpha, x_L)) or "von_bertalanffy"
            (theta = (a, p, q)).
        beta_reg: L1 penalty weight.
        bounds: per-component (lo, hi) box; data-driven defaults otherwise.
        n_starts: Latin hypercube budget.
        seed: multistart design seed.
        patience: non-improving descent runs tolerated before stopping.
        perfect_fit_tol: data misfit declaring an exact fit.
        max_nfev: residual evaluations per descent run.
        polish_maxfev: evaluations for the final L1 polish (0 disables it).
        compute_onset: also locate the 1 mm^3 onset crossing.
    """
    kind = _model_kind(model)
    names = _theta_names(kind)
    obs = series.volumes_scaled
    t_obs = series.t_days
    anchor_x = float(obs[0])
    anchor_t = float(t_obs[0])

    if bounds is None:
        bounds = _default_bounds(kind, obs)
    lo = np.array([b[0] for b in bounds], dtype=float)
    hi = np.array([b[1] for b in bounds], dtype=float)
    if lo.size != len(names) or np.any(lo >= hi):
        raise ValueError(f"bounds must be {len(names)} ordered (lo, hi) pairs")
    if kind is ModelKind.VON_BERTALANFFY and hi[0] >= 1.0:
        raise ValueError("the a exponent must stay below 1 (delta < 0)")

    if float(np.ptp(obs)) <= 1e-12 * float(obs.max()):
        theta = _flat_theta(kind, lo, hi, anchor_x)
        pred = predict_volumes(kind, theta, t_obs, anchor_x)
        result = FitResult(
            patient_id=series.patient_id, model=kind, theta=tuple(theta),
            residual=float(np.abs(pred - obs).sum()), anchor_t=anchor_t,
            anchor_x=anchor_x, degenerate=True)
        return _with_onset(result) if compute_onset else result

    evals = 0
    big = float(np.abs(obs).sum()) * 1e6 + 1.0

    def residuals(theta: np.ndarray) -> np.ndarray:
        nonlocal evals
        evals += 1
        try:
            pred = predict_volumes(kind, theta, t_obs, anchor_x)
        except (ValueError, RuntimeError):
            # infeasible corner of a user-supplied box; steer the search away
            return np.full(obs.size, big)
        return pred - obs

    def data_misfit(theta: np.ndarray) -> float:
        return float(np.abs(residuals(theta)).sum())

    def objective_in_box(theta: np.ndarray) -> float:
        return data_misfit(theta) + beta_reg * float(np.abs(theta).sum())

    def objective(raw: np.ndarray) -> float:
        return objective_in_box(_reflect(raw, lo, hi))

    sampler = qmc.LatinHypercube(d=lo.size, seed=seed)
    starts = lo + (hi - lo) * sampler.random(n_starts)
    order = np.argsort([objective_in_box(s) for s in starts], kind="stable")

    best_theta = None
    best_obj = np.inf
    stalls = 0
    for idx in order:
        res = least_squares(residuals, starts[idx], bounds=(lo, hi),
                            method="trf", x_scale="jac", xtol=1e-15,
                            ftol=1e-15, gtol=1e-14, max_nfev=max_nfev)
        theta = np.clip(np.asarray(res.x, dtype=float), lo, hi)
        obj = objective_in_box(theta)
        if obj < best_obj * (1.0 - 1e-6):
            best_obj = obj
            best_theta = theta
            stalls = 0
        else:
            stalls += 1
        if best_obj - beta_reg * float(np.abs(best_theta).sum()) < perfect_fit_tol:
            break
        if stalls >= patience:
            break

    if polish_maxfev > 0:
        # descend the true L1 objective from the least-squares point; a tiny
        # initial simplex keeps the polish local
        side = np.maximum(1e-8, 1e-6 * np.abs(best_theta))
        simplex = np.vstack([best_theta, best_theta + np.diag(side)])
        res = minimize(objective, best_theta, method="Nelder-Mead",
                       options=dict(initial_simplex=simplex, xatol=1e-13,
                                    fatol=1e-9, maxfev=polish_maxfev))
        cand = _reflect(np.asarray(res.x, dtype=float), lo, hi)
        if objective_in_box(cand) < best_obj:
            best_obj = objective_in_box(cand)
            best_theta = cand

    # penalty-dominated limit: with a large beta_reg the minimizer is the
    # lower corner of the box, which gradient descent from the interior can
    # miss; keep it as a standing candidate
    if objective_in_box(lo) < best_obj:
        best_theta = lo.copy()

    residual = data_misfit(best_theta)
    result = FitResult(
        patient_id=series.patient_id, model=kind, theta=tuple(float(v) for v in best_theta),
        residual=residual, anchor_t=anchor_t, anchor_x=anchor_x, n_evals=evals)
    return _with_onset(result) if compute_onset else result


def _flat_theta(kind: ModelKind, lo: np.ndarray, hi: np.ndarray,
                anchor_x: float) -> np.ndarray:
    # equilibrium at the observed volume gives an exactly flat curve; rate
    # parameters sit at the box floor
    if kind is ModelKind.GOMPERTZ:
        return np.array([lo[0], float(np.clip(anchor_x, lo[1], hi[1]))])
    a = lo[0]
    q = lo[2]
    # x_L = (q/p)^(1/delta) = anchor  =>  p = q anchor^(-delta)
    p = q * anchor_x ** (1.0 - a)
    return np.array([a, float(np.clip(p, lo[1], hi[1])), q])


def _with_onset(result: FitResult) -> FitResult:
    if result.degenerate:
        return result
    try:
        shift = align_to_onset(result)
    except ValueError:
        return result
    return FitResult(**{**result.__dict__, "onset_shift": shift})


def align_to_onset(result: FitResult, target_mm3: float = 1.0) -> float:
    """Time at which the fitted curve crosses the onset volume.

    Marches the fitted deterministic curve from the anchor (backward or
    forward, step 0.01/mu) until the target volume is bracketed, then bisects
    with the same integrator.  Raises when the curve cannot reach the target
    (carrying capacity on the wrong side of it).
    """
    params = result.params
    target = target_mm3 * MM3
    if not target > 0.0:
        raise ValueError(f"target volume must be positive, got {target_mm3} mm^3")
    t0, x0 = result.anchor_t, result.anchor_x
    if x0 == target:
        return t0
    x_L = params.x_L
    growing = x0 < x_L
    if x0 < target:
        # forward for a growing curve, backward for a decaying one
        if growing and target >= x_L:
            raise ValueError(
                f"fitted curve saturates at {x_L / MM3:.4g} mm^3, below the "
                f"onset volume {target_mm3:.4g} mm^3")
        direction = 1.0 if growing else -1.0
    else:
        if (not growing) and target <= x_L:
            raise ValueError(
                f"fitted curve stays above {x_L / MM3:.4g} mm^3, never down at "
                f"the onset volume {target_mm3:.4g} mm^3")
        direction = -1.0 if growing else 1.0

    h = 0.01 / params.mu
    step = direction * h
    t_a, x_a = t0, x0
    for _ in range(_MAX_MARCH):
        t_b = t_a + step
        x_b = float(integrate_micro(x_a, params, [t_a, t_b], max_step=h)[-1])
        if (x_a - target) * (x_b - target) <= 0.0:
            break
        t_a, x_a = t_b, x_b
    else:
        raise ValueError("onset crossing not found within the march budget")

    for _ in range(200):
        t_m = 0.5 * (t_a + t_b)
        if t_m == t_a or t_m == t_b:
            break
        x_m = float(integrate_micro(x_a, params, [t_a, t_m], max_step=h)[-1])
        if (x_a - target) * (x_m - target) <= 0.0:
            t_b = t_m
        else:
            t_a, x_a = t_m, x_m
        if abs(t_b - t_a) < 1e-9:
            break
    return 0.5 * (t_a + t_b)


# ---------------------------------------------------------------------------
# Synthetic cohorts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CohortSpec:
    """Generator settings for a synthetic patient cohort."""

    rv: RandomVector
    base: GrowthParams
    x0_mm3: float = 50.0
    seed: int | None = None

    def __post_init__(self) -> None:
        if not self.x0_mm3 > 0.0:
            raise ValueError(f"x0_mm3 must be positive, got {self.x0_mm3}")


def synth_cohort(spec: CohortSpec, n_patients: int, obs_times,
                 noise: float = 0.0) -> list[PatientSeries]:
    """Draw growth parameters and integrate noiseless or noisy volume series.

    Each patient gets an independent draw of spec.rv bound onto spec.base and
    a curve through obs_times starting at x0_mm3; noise > 0 multiplies every
    observation by a mean-one lognormal factor with relative spread `noise`.
    """
    if n_patients < 1:
        raise ValueError(f"need at least one patient, got {n_patients}")
    t = np.asarray(obs_times, dtype=float)
    if t.ndim != 1 or t.size < 2 or not np.all(np.diff(t) > 0.0):
        raise ValueError("obs_times must be at least two strictly increasing times")
    if noise < 0.0:
        raise ValueError(f"noise must be nonnegative, got {noise}")
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
    draws = spec.rv.sample(rng, n_patients)
    x0 = spec.x0_mm3 * MM3
    out = []
    for i in range(n_patients):
        params = bind_params(spec.base, spec.rv.names, draws[i])
        vols = integrate_micro(x0, params, t)
        if noise > 0.0:
            s = math.sqrt(math.log1p(noise * noise))
            vols = vols * np.exp(s * rng.standard_normal(t.size) - 0.5 * s * s)
        out.append(PatientSeries(patient_id=f"S{i + 1:04d}", t_days=t,
                                 volume_mm3=vols / MM3))
    return out


# ---------------------------------------------------------------------------
# Distribution estimation over a cohort
# ---------------------------------------------------------------------------


def fit_beta_mle(samples, support: tuple[float, float]) -> tuple[float, float]:
    """Maximum-likelihood Beta shapes for samples on a known support.

    Samples on (or numerically outside) the boundary are pulled inward by
    1e-6 of the range with a warning; the likelihood is optimized over the
    log-shapes from a method-of-moments start.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim != 1 or x.size < 3:
        raise ValueError("need at least three samples")
    lo, hi = support
    if not lo < hi:
        raise ValueError(f"support must be ordered, got {support}")
    if np.any(x < lo) or np.any(x > hi):
        raise ValueError("samples fall outside the stated support")
    u = (x - lo) / (hi - lo)
    # only samples exactly on the boundary move; near-edge samples keep their
    # true distances, which carry most of the information about small shapes
    edge = 1e-6
    touching = (u == 0.0) | (u == 1.0)
    n_edge = int(np.count_nonzero(touching))
    if n_edge:
        warnings.warn(
            f"{n_edge} of {u.size} samples sit on the support boundary; "
            f"pulled inward by {edge:g} of the range for the likelihood",
            stacklevel=2)
        u = np.where(u == 0.0, edge, u)
        u = np.where(u == 1.0, 1.0 - edge, u)
    mlog = float(np.log(u).mean())
    mlog1m = float(np.log1p(-u).mean())

    def nll(logc: np.ndarray) -> float:
        c1, c2 = np.exp(logc)
        return betaln(c1, c2) - (c1 - 1.0) * mlog - (c2 - 1.0) * mlog1m

    m = float(u.mean())
    v = float(u.var())
    if 0.0 < v < m * (1.0 - m):
        s = m * (1.0 - m) / v - 1.0
        start = np.log([max(m * s, 1e-3), max((1.0 - m) * s, 1e-3)])
    else:
        start = np.log([0.5, 0.5])
    res = minimize(nll, start, method="Nelder-Mead",
                   options=dict(xatol=1e-10, fatol=1e-12, maxfev=2000))
    c1, c2 = np.exp(res.x)
    return float(c1), float(c2)


def ks_test(samples, cdf) -> tuple[float, float]:
    """Kolmogorov-Smirnov statistic and p-value of samples against a CDF.

    D is the exact sup-distance of the empirical CDF; the p-value uses the
    asymptotic Kolmogorov distribution with the standard finite-n argument
    (sqrt(n) + 0.12 + 0.11/sqrt(n)) D.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    if n == 0:
        raise ValueError("need at least one sample")
    F = np.asarray(cdf(x), dtype=float)
    if np.any(F < -1e-12) or np.any(F > 1.0 + 1e-12):
        raise ValueError("cdf values must lie in [0, 1]")
    i = np.arange(1, n + 1)
    D = float(np.maximum(i / n - F, F - (i - 1) / n).max())
    sq = math.sqrt(n)
    p = float(kolmogorov((sq + 0.12 + 0.11 / sq) * D))
    return D, p


@dataclass(frozen=True)
class CohortRow:
    """One parameter row of the cohort distribution report."""

    parameter: str
    lo: float
    hi: float
    c1: float
    c2: float
    ks_pvalue: float


@dataclass
class CohortDistributionFit:
    """Cohort-level distribution estimates with the per-patient backing fits."""

    rows: list[CohortRow]
    gompertz: list[FitResult]
    vb: list[FitResult]
    samples: dict[str, np.ndarray]
    xl_consistency: np.ndarray    # |x_L(vB) - x_L(Gompertz)| / x_L(Gompertz)

    def row(self, parameter: str) -> CohortRow:
        for r in self.rows:
            if r.parameter == parameter:
                return r
        raise KeyError(parameter)


def vb_p_bounds(a_bounds, q_bounds, xl_bounds,
                margin: float = 1e-3) -> tuple[float, float]:
    """Box for the p coefficient implied by p = q x_L^(1-a) over the corners."""
    vals = [q * x ** (1.0 - a)
            for a in a_bounds for q in q_bounds for x in xl_bounds]
    return min(vals) * (1.0 - margin), max(vals) * (1.0 + margin)


def fit_cohort(
    series_list,
    supports: dict,
    beta_reg: float = 1e-3,
    n_starts: int = 16,
    seed: int = 0,
) -> CohortDistributionFit:
    """Two-stage cohort calibration in the clinical-table format.

    Stage one fits a Gompertz law per patient (alpha, x_L); stage two fits the
    von Bertalanffy triple (a, p, q) with the carrying capacity reported from
    the Gompertz stage and the vB-implied one checked against it (recorded,
    not enforced).  Rows: alpha as a uniform law over its observed range
    (shapes 1, 1), then Beta maximum-likelihood shapes for x_L, a, q on the
    configured supports, each with its KS p-value against the fitted law.

    supports must contain "x_L", "a", "q" ranges; "alpha" bounds the Gompertz
    rate search (default (1e-4, 0.2)).
    """
    series_list = list(series_list)
    if not series_list:
        raise ValueError("empty cohort")
    for key in ("x_L", "a", "q"):
        if key not in supports:
            raise ValueError(f"supports must provide a range for {key!r}")
    alpha_b = tuple(supports.get("alpha", (1e-4, 0.2)))
    xl_b = tuple(supports["x_L"])
    a_b = tuple(supports["a"])
    q_b = tuple(supports["q"])
    p_b = vb_p_bounds(a_b, q_b, xl_b)

    g_fits, v_fits = [], []
    for i, s in enumerate(series_list):
        g = fit_series(s, ModelKind.GOMPERTZ, beta_reg=beta_reg,
                       bounds=(alpha_b, xl_b), n_starts=n_starts,
                       seed=seed + 2 * i)
        v = fit_series(s, ModelKind.VON_BERTALANFFY, beta_reg=beta_reg,
                       bounds=(a_b, p_b, q_b), n_starts=n_starts,
                       seed=seed + 2 * i + 1, compute_onset=False)
        g_fits.append(g)
        v_fits.append(v)

    alpha_s = np.array([g.theta[0] for g in g_fits])
    xl_s = np.array([g.theta[1] for g in g_fits])
    a_s = np.array([v.theta[0] for v in v_fits])
    q_s = np.array([v.theta[2] for v in v_fits])
    xl_vb = np.array([v.x_L_implied for v in v_fits])
    consistency = np.abs(xl_vb - xl_s) / xl_s

    rows = [_uniform_row("alpha", alpha_s)]
    for name, samp, sup in (("x_L", xl_s, xl_b), ("a", a_s, a_b), ("q", q_s, q_b)):
        c1, c2 = fit_beta_mle(samp, sup)
        _, p = ks_test(samp, BetaOn(c1, c2, sup[0], sup[1]).cdf)
        rows.append(CohortRow(parameter=name, lo=sup[0], hi=sup[1],
                              c1=c1, c2=c2, ks_pvalue=p))
    return CohortDistributionFit(
        rows=rows, gompertz=g_fits, vb=v_fits,
        samples={"alpha": alpha_s, "x_L": xl_s, "a": a_s, "q": q_s},
        xl_consistency=consistency)


def _uniform_row(name: str, samples: np.ndarray) -> CohortRow:
    lo = float(samples.min())
    hi = float(samples.max())
    if hi <= lo:
        hi = lo + max(1e-12, abs(lo) * 1e-9)
    _, p = ks_test(samples, Uniform(lo, hi).cdf)
    return CohortRow(parameter=name, lo=lo, hi=hi, c1=1.0, c2=1.0, ks_pvalue=p)


# ---------------------------------------------------------------------------
# Files
# ---------------------------------------------------------------------------


def read_patient_csv(path) -> list[PatientSeries]:
    """Read a patient_id, t_days, volume_mm3 table (UTF-8, LF, header row)."""
    path = Path(path)
    groups: dict[str, list[tuple[float, float]]] = {}
    order: list[str] = []
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        cols = [h.strip() for h in header]
        expected = ["patient_id", "t_days", "volume_mm3"]
        if cols != expected:
            raise ValueError(f"{path}: header must be {expected}, got {cols}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 columns")
            pid = row[0].strip()
            try:
                t = float(row[1])
                v = float(row[2])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: malformed number") from None
            if pid not in groups:
                groups[pid] = []
                order.append(pid)
            groups[pid].append((t, v))
    out = []
    for pid in order:
        rows = sorted(groups[pid])
        out.append(PatientSeries(
            patient_id=pid,
            t_days=np.array([r[0] for r in rows]),
            volume_mm3=np.array([r[1] for r in rows])))
    return out


def write_patient_csv(path, series_list) -> None:
    """Write patient series in the ingestion format."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write("patient_id,t_days,volume_mm3\n")
        for s in series_list:
            for t, v in zip(s.t_days, s.volume_mm3):
                fh.write(f"{s.patient_id},{float(t)!r},{float(v)!r}\n")


def write_cohort_report(path, fit: CohortDistributionFit) -> None:
    """Write the parameter, lo, hi, c1, c2, ks_pvalue rows."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write("parameter,lo,hi,c1,c2,ks_pvalue\n")
        for r in fit.rows:
            fh.write(f"{r.parameter},{float(r.lo)!r},{float(r.hi)!r},"
                     f"{float(r.c1)!r},{float(r.c2)!r},{float(r.ks_pvalue)!r}\n")


def fit_record(result: FitResult, extra: dict | None = None) -> dict:
    """JSON-ready record of one per-patient fit."""
    rec = {
        "patient_id": result.patient_id,
        "model": result.model.value,
        "theta_names": list(_theta_names(result.model)),
        "theta": [float(v) for v in result.theta],
        "residual": float(result.residual),
        "onset_shift": None if result.onset_shift is None else float(result.onset_shift),
        "degenerate": bool(result.degenerate),
        "x_L_implied": float(result.x_L_implied),
    }
    if extra:
        rec.update(extra)
    return rec


def write_fit_records(path, records) -> None:
    """Write per-patient fit records as a deterministic JSON array."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        json.dump(list(records), fh, indent=2, sort_keys=True)
        fh.write("\n")
