"""Direct simulation Monte Carlo for the kinetic growth model.

Each particle is a tumour volume evolving by rare elementary transitions: per
time step dt a particle undergoes the growth transition with probability
dt/eps, and (when a therapy protocol is active) the control transition with
the same probability, mirroring the binary-interaction sampling of the kinetic
equation.  The growth transition multiplies the volume by
1 + Phi_eps(x / x_L) + eta with eta uniform on [-amp, amp],
amp = sqrt(3 eps sigma2), so <eta> = 0 and <eta^2> = eps sigma2 exactly.

Clinical uncertainty enters by collocation: a tensor Gauss rule on the
uncertain parameters, one independent particle population per node, each with
its own spawned generator so runs are reproducible and node order immaterial.
Expectations over the parameters are then quadrature sums of per-node
statistics.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .control import ControlSpec, AtTime, MeanThreshold, optimal_u_p1, optimal_u_p2
from .errors import PositivityError
from .growth_models import GrowthParams, bind_params, phi_eps
from .uq_basis import RandomVector, gauss_rule, tensor_rule


def noise_amplitude(sigma2: float, eps: float) -> float:
    """Half-width of the uniform growth noise, sqrt(3 eps sigma2)."""
    return float(np.sqrt(3.0 * eps * sigma2))


def sample_eta(eps: float, sigma2: float, rng: np.random.Generator,
               size: int | tuple = ()) -> np.ndarray:
    """Draw growth-noise samples, uniform with mean 0 and variance eps sigma2."""
    amp = noise_amplitude(sigma2, eps)
    return rng.uniform(-amp, amp, size=size)


def sample_from_grid(rng: np.random.Generator, x: np.ndarray,
                     density: np.ndarray, n: int) -> np.ndarray:
    """Sample particle volumes from a gridded density, uniform within cells.

    Treats density[i] as the average over the cell centred at x[i], so the
    sample's exact mean matches the grid functional dx sum x_i f_i and particle
    and grid runs can share one initial condition.
    """
    x = np.asarray(x, dtype=float)
    density = np.asarray(density, dtype=float)
    if x.shape != density.shape or x.ndim != 1:
        raise ValueError("x and density must be matching 1-D arrays")
    if np.any(density < 0.0):
        raise ValueError("density must be nonnegative")
    total = density.sum()
    if not total > 0.0:
        raise ValueError("density sums to zero")
    dx = x[1] - x[0]
    idx = rng.choice(x.size, size=n, p=density / total)
    pts = x[idx] + dx * (rng.random(n) - 0.5)
    return np.maximum(pts, 0.0)


@dataclass
class ParticleEnsemble:
    """One particle population with its growth law, time scale, and generator."""

    x: np.ndarray
    params: GrowthParams
    eps: float
    rng: np.random.Generator
    t: float = 0.0

    def __post_init__(self) -> None:
        self.x = np.asarray(self.x, dtype=float)
        if self.x.ndim != 1 or self.x.size == 0:
            raise ValueError("particle array must be 1-D and nonempty")
        if np.any(self.x < 0.0):
            raise ValueError("particle volumes must be nonnegative")
        if not self.eps > 0.0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        _check_positivity(self.params, self.eps)

    @property
    def mean(self) -> float:
        return float(self.x.mean())


def _check_positivity(params: GrowthParams, eps: float) -> None:
    # noise bounded below by -1 + mu/(1+lam) keeps volumes nonnegative
    amp = noise_amplitude(params.sigma2, eps)
    bound = 1.0 - params.mu / (1.0 + params.lam)
    if amp > bound + 1e-15:
        raise PositivityError(
            f"noise amplitude sqrt(3 eps sigma2) = {amp:.4g} exceeds the "
            f"positivity bound 1 - mu/(1 + lam) = {bound:.4g}; shrink eps or "
            f"sigma2")


def _growth_phase(x: np.ndarray, params: GrowthParams, eps: float,
                  p_int: float, rng: np.random.Generator) -> None:
    """One growth transition round, in place.

    Full-size draws keep the generator stream independent of the state, so
    identical seeds give identical runs regardless of which particles fire.
    """
    n = x.size
    fire = (rng.random(n) < p_int) & (x > 0.0)
    eta = sample_eta(eps, params.sigma2, rng, n)
    xm = x[fire]
    ph = phi_eps(xm / params.x_L, params, eps)
    x[fire] = np.maximum(xm * (1.0 + ph + eta[fire]), 0.0)


def _control_phase(x: np.ndarray, spec: ControlSpec, eps: float,
                   p_int: float, rng: np.random.Generator) -> int:
    """One therapy transition round, in place; returns the clamp count (p=1)."""
    n = x.size
    fire = rng.random(n) < p_int
    if not np.any(fire):
        return 0
    xm = x[fire]
    clamped = 0
    if spec.p == 2:
        u = optimal_u_p2(xm, spec, eps)
    else:
        u = optimal_u_p1(xm, spec, eps)
        lo, hi = spec.u_bounds
        clamped = int(np.count_nonzero(((u == lo) & (lo != 0.0))
                                       | ((u == hi) & (hi != 0.0))))
    x[fire] = np.maximum(xm + eps * spec.selective(xm) * u, 0.0)
    return clamped


def growth_step(ens: ParticleEnsemble, dt: float) -> ParticleEnsemble:
    """Apply one growth transition round with firing probability dt/eps."""
    p_int = dt / ens.eps
    if not 0.0 < p_int <= 1.0:
        raise ValueError(f"dt/eps must lie in (0, 1], got {p_int}")
    _growth_phase(ens.x, ens.params, ens.eps, p_int, ens.rng)
    return ens

def control_step(ens: ParticleEnsemble, spec: ControlSpec,
                 dt: float) -> ParticleEnsemble:
    """Apply one therapy transition round with firing probability dt/eps."""
    p_int = dt / ens.eps
    if not 0.0 < p_int <= 1.0:
        raise ValueError(f"dt/eps must lie in (0, 1], got {p_int}")
    _control_phase(ens.x, spec, ens.eps, p_int, ens.rng)
    return ens


@dataclass
class DSMCResult:
    """Recorded statistics of one particle run."""

    times: np.ndarray            # (n_rec,)
    m: np.ndarray                # (n_rec,) mean volume
    e2: np.ndarray               # (n_rec,) mean squared volume
    var: np.ndarray              # (n_rec,) population variance
    final: np.ndarray            # particle volumes at t_final
    snapshot_times: np.ndarray   # (n_snap,)
    snapshots: list[np.ndarray]
    activated_at: float | None
    clamp_fraction: float = 0.0  # clamped share of p = 1 control applications


def run_dsmc(
    params: GrowthParams,
    n_particles: int,
    t_final: float,
    dt: float,
    ic,
    eps: float | None = None,
    control: ControlSpec | None = None,
    rng: np.random.Generator | None = None,
    seed: int | None = None,
    n_records: int = 50,
    snapshot_times=(),
) -> DSMCResult:
    """Evolve one particle population to t_final.

    Args:
        params: growth law at this parameter point.
        n_particles: population size.
        t_final: horizon; 0 records the initial population only.
        dt: time step; must not exceed eps (firing probability dt/eps <= 1).
        ic: initial volumes, either an array of particle positions (resampled
            with replacement if its length differs from n_particles) or a
            tuple (x, density) sampled cell-uniformly from a grid density.
        eps: transition scale; default 2 dt.
        control: optional therapy protocol, applied once its activation rule
            latches (on this population's own mean for MeanThreshold).
        rng: generator to use; exclusive with seed.
        seed: convenience seed for a fresh default generator.
        n_records: number of statistic records past t = 0.
        snapshot_times: times whose full particle state is stored.

    Raises:
        PositivityError: when the noise amplitude can push volumes negative.
    """
    if t_final < 0.0:
        raise ValueError(f"t_final must be nonnegative, got {t_final}")
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    if eps is None:
        eps = 2.0 * dt
    if dt > eps * (1.0 + 1e-12):
        raise ValueError(
            f"dt = {dt} exceeds eps = {eps}; the firing probability dt/eps "
            f"must not pass 1")
    if rng is not None and seed is not None:
        raise ValueError("pass either rng or seed, not both")
    if rng is None:
        rng = np.random.default_rng(seed)
    _check_positivity(params, eps)

    if isinstance(ic, tuple):
        grid_x, density = ic
        X = sample_from_grid(rng, np.asarray(grid_x), np.asarray(density),
                             n_particles)
    else:
        X = np.asarray(ic, dtype=float).copy()
        if X.ndim != 1:
            raise ValueError("particle initial condition must be 1-D")
        if X.size != n_particles:
            X = X[rng.integers(0, X.size, size=n_particles)]
    if np.any(X < 0.0):
        raise ValueError("initial volumes must be nonnegative")

    p_int = dt / eps
    n_steps = int(np.ceil(t_final / dt - 1e-12)) if t_final > 0.0 else 0
    if n_steps:
        dt = t_final / n_steps
        p_int = dt / eps

    activation = control.activation if control is not None else None
    active = False
    activated_at: float | None = None

    rec_steps = np.unique(np.round(np.linspace(0, n_steps, n_records + 1)).astype(int))
    rec_set = set(rec_steps.tolist())
    snap_steps = np.unique(
        np.clip(np.round(np.asarray(list(snapshot_times) + [t_final])
                         / (dt if n_steps else 1.0)), 0, n_steps).astype(int))
    snap_set = set(snap_steps.tolist())

    times, m_r, e2_r, var_r = [], [], [], []
    snaps, snap_t = [], []
    clamped = 0
    control_rounds = 0

    def record(step_no: int) -> None:
        times.append(step_no * dt)
        m_r.append(float(X.mean()))
        e2_r.append(float((X * X).mean()))
        var_r.append(float(X.var()))

    def latch(t: float) -> None:
        nonlocal active, activated_at
        if active or activation is None:
            return
        if isinstance(activation, AtTime):
            if t >= activation.t - 1e-12:
                active, activated_at = True, t
        elif isinstance(activation, MeanThreshold):
            if X.mean() >= activation.xbar:
                active, activated_at = True, t

    latch(0.0)
    if 0 in rec_set:
        record(0)
    if 0 in snap_set:
        snaps.append(X.copy())
        snap_t.append(0.0)

    for step_no in range(1, n_steps + 1):
        latch((step_no - 1) * dt)
        _growth_phase(X, params, eps, p_int, rng)
        if active and control is not None:
            clamped += _control_phase(X, control, eps, p_int, rng)
            control_rounds += 1
        if step_no in rec_set:
            record(step_no)
        if step_no in snap_set:
            snaps.append(X.copy())
            snap_t.append(step_no * dt)

    frac = 0.0
    if control_rounds and control is not None and control.p == 1:
        frac = clamped / (control_rounds * X.size * p_int)
    return DSMCResult(
        times=np.asarray(times),
        m=np.asarray(m_r),
        e2=np.asarray(e2_r),
        var=np.asarray(var_r),
        final=X,
        snapshot_times=np.asarray(snap_t),
        snapshots=snaps,
        activated_at=activated_at,
        clamp_fraction=frac,
    )


# ---------------------------------------------------------------------------
# Collocation over the uncertain parameters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CollocationPlan:
    """Tensor Gauss collocation of a particle simulation over the parameters.

    One independent population per quadrature node, each parameter point bound
    onto the base growth law; seeds are spawned from the master seed so every
    node's stream is independent and the whole plan is reproducible.
    """

    base: GrowthParams
    rv: RandomVector
    n_per_dim: int
    n_particles: int
    dt: float
    eps: float | None = None
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.n_per_dim < 1:
            raise ValueError(f"need at least one node per dimension, got "
                             f"{self.n_per_dim}")
        if self.n_particles < 1:
            raise ValueError(f"need at least one particle, got {self.n_particles}")

    def quadrature(self) -> tuple[np.ndarray, np.ndarray]:
        rules = [gauss_rule(d, self.n_per_dim) for d in self.rv.dists]
        return tensor_rule(rules)


@dataclass
class EnsembleResult:
    """Per-node particle results plus the quadrature that aggregates them."""

    nodes: np.ndarray            # (Q, d)
    weights: np.ndarray          # (Q,)
    results: list[DSMCResult] = field(default_factory=list)

    @property
    def times(self) -> np.ndarray:
        return self.results[0].times

    def mean_curve(self) -> np.ndarray:
        """E_z[m(z, t)] by quadrature over the node means."""
        M = np.stack([r.m for r in self.results])
        return self.weights @ M

    def var_z_curve(self) -> np.ndarray:
        """Var_z(m(z, t)), the parametric variance of the node means."""
        M = np.stack([r.m for r in self.results])
        mean = self.weights @ M
        return np.maximum(self.weights @ (M - mean) ** 2, 0.0)

    def total_std_curve(self) -> np.ndarray:
        """Population standard deviation sqrt(E_z[E] - E_z[m]^2)."""
        E2 = np.stack([r.e2 for r in self.results])
        M = np.stack([r.m for r in self.results])
        e2 = self.weights @ E2
        mean = self.weights @ M
        return np.sqrt(np.maximum(e2 - mean * mean, 0.0))


def run(
    plan: CollocationPlan,
    t_final: float,
    ic,
    control: ControlSpec | None = None,
    n_records: int = 50,
    snapshot_times=(),
    threads: int = 1,
) -> EnsembleResult:
    """Execute a collocation plan: one particle run per quadrature node.

    The initial condition is shared by all nodes (clinical uncertainty lies in
    the growth parameters, not the initial state).  MeanThreshold activation
    latches per node on that population's own mean.
    """
    nodes, weights = plan.quadrature()
    Q = nodes.shape[0]
    seeds = np.random.SeedSequence(plan.seed).spawn(Q)
    eps = plan.eps if plan.eps is not None else 2.0 * plan.dt

    def one(q: int) -> DSMCResult:
        pq = bind_params(plan.base, plan.rv.names, nodes[q])
        return run_dsmc(
            pq, plan.n_particles, t_final, plan.dt, ic, eps=eps,
            control=control, rng=np.random.default_rng(seeds[q]),
            n_records=n_records, snapshot_times=snapshot_times)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(Q)))
    else:
        results = [one(q) for q in range(Q)]
    return EnsembleResult(nodes=nodes, weights=weights, results=results)
