"""Moment, convergence, and tail statistics over solver outputs.

Pure post-processing: everything here consumes immutable solver results or
plain arrays.  Statistics over the uncertain parameters are quadrature sums
over the collocation/chaos nodes; shaded bands are weighted empirical
percentiles over those nodes (10-90 by default).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.integrate import simpson

from .dsmc_sim import EnsembleResult
from .fp_sg_solver import SGResult, reconstruct

#: Band level used when none is requested, in percent.
DEFAULT_BAND = (10.0, 90.0)


def _check_grid(x, density) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    density = np.asarray(density, dtype=float)
    if x.ndim != 1 or x.shape != density.shape or x.size < 3:
        raise ValueError("need matching 1-D grid and density with >= 3 points")
    return x, density


def moments(x_or_samples, density=None) -> tuple[float, float, float]:
    """First moment, second moment, and variance of a volume distribution.

    Two input forms: moments(samples) averages over a particle population;
    moments(x, density) integrates a gridded density by Simpson's rule and
    insists it is normalized (mass within 1e-3 of one).

    Returns:
        (m, E, Var) with Var = E - m^2, floored at zero.
    """
    if density is None:
        samples = np.asarray(x_or_samples, dtype=float)
        if samples.size == 0:
            raise ValueError("empty particle population")
        m = float(samples.mean())
        E = float((samples * samples).mean())
    else:
        x, f = _check_grid(x_or_samples, density)
        mass = float(simpson(f, x=x))
        if abs(mass - 1.0) > 1e-3:
            raise ValueError(
                f"density integrates to {mass:.6g}, not 1; normalize it first")
        m = float(simpson(x * f, x=x))
        E = float(simpson(x * x * f, x=x))
    return m, E, max(E - m * m, 0.0)


def g_index(x, density, x_d: float) -> float:
    """Mean squared miss of the target, int (x - x_d)^2 f dx by Simpson."""
    x, f = _check_grid(x, density)
    mass = float(simpson(f, x=x))
    if abs(mass - 1.0) > 1e-3:
        raise ValueError(
            f"density integrates to {mass:.6g}, not 1; normalize it first")
    return float(simpson((x - x_d) ** 2 * f, x=x))


def g_index_samples(samples, x_d: float) -> float:
    """Mean squared miss of the target over a particle population."""
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ValueError("empty particle population")
    return float(((samples - x_d) ** 2).mean())


def weighted_quantile(values, weights, q) -> np.ndarray:
    """Weighted empirical quantiles at percentages q.

    Midpoint convention: sorted values sit at cumulative weight positions
    (cumsum - w/2) / total, linearly interpolated between them.
    """
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if values.shape != weights.shape or values.ndim != 1 or values.size == 0:
        raise ValueError("values and weights must be matching nonempty 1-D arrays")
    if np.any(weights < 0.0) or not weights.sum() > 0.0:
        raise ValueError("weights must be nonnegative with positive sum")
    order = np.argsort(values, kind="stable")
    v = values[order]
    w = weights[order]
    pos = (np.cumsum(w) - 0.5 * w) / w.sum()
    return np.interp(np.asarray(q, dtype=float) / 100.0, pos, v)


@dataclass
class MomentSeries:
    """Per-node first and second moments with their parametric statistics."""

    times: np.ndarray        # (n_rec,)
    nodes: np.ndarray        # (Q, d) parameter nodes
    weights: np.ndarray      # (Q,)
    m: np.ndarray            # (n_rec, Q)
    E: np.ndarray            # (n_rec, Q)
    band_level: tuple[float, float] = DEFAULT_BAND

    def __post_init__(self) -> None:
        lo, hi = self.band_level
        if not 0.0 <= lo < hi <= 100.0:
            raise ValueError(f"band level must be ordered percents, got {self.band_level}")

    @property
    def mean_m(self) -> np.ndarray:
        """E_z[m(z, t)]."""
        return self.m @ self.weights

    @property
    def var_m(self) -> np.ndarray:
        """Var_z(m(z, t))."""
        centered = self.m - self.mean_m[:, None]
        return np.maximum((centered * centered) @ self.weights, 0.0)

    def band(self) -> tuple[np.ndarray, np.ndarray]:
        """Weighted percentile band of m over the nodes, per record time."""
        lo = np.empty(self.times.size)
        hi = np.empty(self.times.size)
        for i in range(self.times.size):
            lo[i], hi[i] = weighted_quantile(self.m[i], self.weights, self.band_level)
        return lo, hi


def moment_series_from_sg(result: SGResult, n_per_dim: int | None = None,
                          band_level: tuple[float, float] = DEFAULT_BAND) -> MomentSeries:
    """Evaluate the chaos moment expansions at a tensor quadrature rule.

    Default rule order is the basis degree + 1 (the collocation grid); pass a
    larger n_per_dim for smoother percentile bands.
    """
    basis = result.op.basis
    nodes, weights = basis.quadrature(n_per_dim)
    psi = basis.eval(nodes)
    m = result.moment_coeffs @ psi.T
    E = result.moment2_coeffs @ psi.T
    return MomentSeries(times=result.times, nodes=nodes, weights=weights,
                        m=m, E=E, band_level=band_level)


def moment_series_from_particles(ens: EnsembleResult,
                                 band_level: tuple[float, float] = DEFAULT_BAND,
                                 ) -> MomentSeries:
    """Collect per-node particle statistics into a MomentSeries."""
    m = np.stack([r.m for r in ens.results], axis=1)
    E = np.stack([r.e2 for r in ens.results], axis=1)
    return MomentSeries(times=ens.times, nodes=ens.nodes, weights=ens.weights,
                        m=m, E=E, band_level=band_level)


# ---------------------------------------------------------------------------
# Convergence in the chaos degree
# ---------------------------------------------------------------------------


def _match_coeffs(coeffs: np.ndarray, indices: np.ndarray,
                  ref_indices: np.ndarray) -> np.ndarray:
    """Embed coefficients into the reference index set (zeros elsewhere)."""
    lookup = {tuple(idx): i for i, idx in enumerate(ref_indices)}
    out = np.zeros(ref_indices.shape[0])
    for i, idx in enumerate(indices):
        key = tuple(idx)
        if key not in lookup:
            raise ValueError("index set is not contained in the reference set")
        out[lookup[key]] = coeffs[i]
    return out


def l2_rho_distance(coeffs_a, basis_a, coeffs_b, basis_b,
                    method: str = "parseval",
                    n_quad: int | None = None) -> float:
    """L2(rho) distance between two chaos expansions of the same quantity.

    Both bases must be built on the same distributions.  The parseval route
    embeds both coefficient vectors in the larger index set and takes the
    Euclidean distance (exact, since the families are orthonormal); the
    quadrature route integrates the squared difference of the reconstructed
    polynomials with a Gauss rule (default order makes it exact as well), as
    an independent check of the same norm.
    """
    if basis_a.dists != basis_b.dists:
        raise ValueError("expansions built on different distributions")
    ca = np.asarray(coeffs_a, dtype=float)
    cb = np.asarray(coeffs_b, dtype=float)
    big, small = (basis_a, basis_b) if basis_a.degree >= basis_b.degree else (basis_b, basis_a)
    if method == "parseval":
        ea = _match_coeffs(ca, basis_a.indices, big.indices)
        eb = _match_coeffs(cb, basis_b.indices, big.indices)
        return float(np.sqrt(((ea - eb) ** 2).sum()))
    if method == "quadrature":
        n = big.degree + 1 if n_quad is None else n_quad
        nodes, w = big.quadrature(n)
        fa = basis_a.eval(nodes) @ ca
        fb = basis_b.eval(nodes) @ cb
        return float(np.sqrt(max((w * (fa - fb) ** 2).sum(), 0.0)))
    raise ValueError(f"unknown method {method!r}")


@dataclass(frozen=True)
class ConvergenceStudy:
    """L2(rho) first-moment errors against a high-degree reference."""

    degrees: tuple[int, ...]
    errors: np.ndarray
    ref_degree: int

    def monotone_until_floor(self, floor: float = 1e-14) -> bool:
        """Whether errors never increase before first dropping below floor."""
        errs = self.errors
        for i in range(1, len(errs)):
            if errs[i - 1] < floor:
                break
            if errs[i] > errs[i - 1]:
                return False
        return True


def convergence_study(run, degrees, ref_degree: int) -> ConvergenceStudy:
    """Error of the final-time first moment at each degree versus a reference.

    run(M) must return the solver result for chaos degree M on an otherwise
    fixed problem; errors are coefficient-space L2(rho) norms of
    m^M(z, T) - m^ref(z, T).
    """
    degrees = tuple(int(M) for M in degrees)
    ref_degree = int(ref_degree)
    if max(degrees) > ref_degree:
        raise ValueError(
            f"reference degree {ref_degree} must dominate the studied degrees")
    ref = run(ref_degree)
    cref = ref.moment_coeffs[-1]
    errors = np.empty(len(degrees))
    for i, M in enumerate(degrees):
        if M == ref_degree:
            errors[i] = 0.0
            continue
        res = run(M)
        errors[i] = l2_rho_distance(res.moment_coeffs[-1], res.op.basis,
                                    cref, ref.op.basis)
    return ConvergenceStudy(degrees=degrees, errors=errors, ref_degree=ref_degree)


# ---------------------------------------------------------------------------
# Tail classification
# ---------------------------------------------------------------------------


class TailKind(Enum):
    POWER_LAW = "power_law"
    EXPONENTIAL = "exponential"


@dataclass(frozen=True)
class TailFit:
    """Winner of the power-law versus exponential tail fit."""

    kind: TailKind
    slope: float          # exponent of x (power law) or decay rate (exponential)
    r2_power: float
    r2_exponential: float


def _r2(pred: np.ndarray, data: np.ndarray) -> float:
    ss_res = float(((data - pred) ** 2).sum())
    ss_tot = float(((data - data.mean()) ** 2).sum())
    if ss_tot == 0.0:
        return 1.0 if ss_res == 0.0 else 0.0
    return 1.0 - ss_res / ss_tot


def default_tail_window(x: np.ndarray) -> tuple[float, float]:
    """Upper 20% of the grid, excluding the last 3 points."""
    x = np.asarray(x, dtype=float)
    if x.size < 8:
        raise ValueError("grid too short for a tail window")
    lo = x[0] + 0.8 * (x[-1] - x[0])
    return float(lo), float(x[-4])


def tail_classify(x, density, window: tuple[float, float] | None = None) -> TailFit:
    """Decide whether a density tail is power-law or exponential.

    Least-squares fits of log f against log x and against x on the window;
    the family with the larger R^2 wins.  A power law x^a reports slope a
    (negative for a decaying tail); an exponential e^(-r x) reports the rate
    r (positive for a decaying tail).
    """
    x, f = _check_grid(x, density)
    if window is None:
        window = default_tail_window(x)
    lo, hi = window
    mask = (x >= lo) & (x <= hi)
    if int(mask.sum()) < 4:
        raise ValueError(f"window [{lo}, {hi}] covers fewer than 4 grid points")
    xw = x[mask]
    fw = f[mask]
    if np.any(fw <= 0.0) or np.any(xw <= 0.0):
        raise ValueError("tail window must have positive x and density")
    logf = np.log(fw)
    cp = np.polyfit(np.log(xw), logf, 1)
    ce = np.polyfit(xw, logf, 1)
    r2p = _r2(np.polyval(cp, np.log(xw)), logf)
    r2e = _r2(np.polyval(ce, xw), logf)
    if r2p >= r2e:
        return TailFit(kind=TailKind.POWER_LAW, slope=float(cp[0]),
                       r2_power=r2p, r2_exponential=r2e)
    return TailFit(kind=TailKind.EXPONENTIAL, slope=float(-ce[0]),
                   r2_power=r2p, r2_exponential=r2e)


# ---------------------------------------------------------------------------
# Target-miss report over a penalization sweep
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GIndexReport:
    """Expected target miss E_z[G] per penalization, with percentile bands."""

    kappas: tuple[float, ...]
    EG: np.ndarray
    band_lo: np.ndarray
    band_hi: np.ndarray
    band_level: tuple[float, float] = DEFAULT_BAND

    def __post_init__(self) -> None:
        if not (len(self.kappas) == self.EG.size == self.band_lo.size
                == self.band_hi.size):
            raise ValueError("report arrays must share one length")
        if np.any(self.EG < 0.0) or np.any(self.band_lo < 0.0):
            raise ValueError("G values are mean squared misses and cannot be negative")
        if np.any(self.band_lo > self.band_hi):
            raise ValueError("band bounds out of order")


def g_report(kappas, node_G: np.ndarray, weights,
             band_level: tuple[float, float] = DEFAULT_BAND) -> GIndexReport:
    """Aggregate per-node G values (n_kappa, Q) into a GIndexReport."""
    node_G = np.asarray(node_G, dtype=float)
    weights = np.asarray(weights, dtype=float)
    kappas = tuple(float(k) for k in kappas)
    if node_G.shape != (len(kappas), weights.size):
        raise ValueError(
            f"node_G must have shape (n_kappa, n_nodes) = "
            f"({len(kappas)}, {weights.size}), got {node_G.shape}")
    EG = node_G @ weights
    lo = np.empty(len(kappas))
    hi = np.empty(len(kappas))
    for i in range(len(kappas)):
        lo[i], hi[i] = weighted_quantile(node_G[i], weights, band_level)
    return GIndexReport(kappas=kappas, EG=EG, band_lo=lo, band_hi=hi,
                        band_level=band_level)


# ---------------------------------------------------------------------------
# Distances and densities on grids
# ---------------------------------------------------------------------------


def l1_distance(x, f, g) -> float:
    """Simpson integral of |f - g| on the grid."""
    x, f = _check_grid(x, f)
    _, g = _check_grid(x, g)
    return float(simpson(np.abs(f - g), x=x))


def histogram_density(samples, edges) -> np.ndarray:
    """Histogram of samples normalized to unit integral over the given edges."""
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ValueError("empty particle population")
    counts, _ = np.histogram(samples, bins=edges)
    widths = np.diff(edges)
    total = counts.sum()
    if total == 0:
        raise ValueError("no samples fall inside the histogram range")
    return counts / (total * widths)


def node_density_from_sg(result: SGResult, z) -> np.ndarray:
    """Marginal density f(x | z) from the final snapshot at parameter point z."""
    return reconstruct(result.final, result.op.basis, np.atleast_2d(z))[0]
