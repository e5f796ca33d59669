"""Finite-volume stochastic-Galerkin solver for the growth Fokker-Planck equation.

The density over volume x and uncertain parameters z is expanded in an
orthonormal chaos basis, f(x, z, t) = sum_k fhat_k(x, t) Psi_k(z).  Projecting
the Fokker-Planck equation onto the basis couples the coefficients through

    d/dt fhat_k = d/dx [ sum_h A_kh(x) fhat_h + d/dx (x^2 (s2 fhat)_k / 2) ]

where A_kh(x) = -int x Phi(x / x_L(z), z) Psi_k Psi_h rho(z) dz carries the
growth drift (plus the quadratic-therapy drift on its diagonal once the
protocol activates) and s2 is sigma^2, projected to a matrix when it is itself
uncertain.  The scheme is an explicit conservative update on a uniform grid:
arithmetic-mean face fluxes for the drift, central differencing of the
conservative diffusion term, zero flux through both boundaries.  The discrete
mass dx sum_i fhat_0(x_i) is then conserved to rounding.

A run refuses to start when the requested step exceeds the a priori explicit
stability estimate (pass enforce_stability=False to run anyway and let the
monitor report the damage).  Each result carries a stability report: step
versus estimate, recorded L2 norm against the exponential envelope
||fhat(t)||^2 <= ||fhat(0)||^2 exp(C_A t) with C_A the measured maximum of
|d/dx A_kh|, mass drift, and the most negative marginal seen.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .control import AtTime, ControlSpec, MeanThreshold, controlled_drift
from .errors import ConfigError, NumericalError
from .growth_models import GrowthParams, bind_params, micro_rhs
from .uq_basis import RandomVector, TensorBasis

#: Any coefficient beyond this magnitude aborts the run as blown up.
BLOWUP_THRESHOLD = 1e12

#: Relative headroom granted to the L2 envelope before the monitor flags it.
NORM_SLACK = 1e-2

#: Marginal undershoot beyond this flags the negativity check in reports.
NEGATIVITY_TOL = -1e-8


@dataclass(frozen=True)
class GridSpec:
    """Uniform volume grid [0, x_max] with n_nodes points including both ends."""

    x_max: float = 2.0
    n_nodes: int = 201

    def __post_init__(self) -> None:
        if not self.x_max > 0.0:
            raise ValueError(f"x_max must be positive, got {self.x_max}")
        if self.n_nodes < 3:
            raise ValueError(f"need at least 3 grid nodes, got {self.n_nodes}")

    @property
    def dx(self) -> float:
        return self.x_max / (self.n_nodes - 1)

    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.x_max, self.n_nodes)


def gamma_ic(grid: GridSpec, shape: float, rate: float) -> np.ndarray:
    """Gamma profile x^(shape-1) exp(-rate x) on the grid, unit dx-sum mass.

    For shape < 1 the profile diverges at the origin; the x = 0 node is set to
    zero and the mass renormalized, consistent with the solver treating node
    values as cell averages.
    """
    if not (shape > 0.0 and rate > 0.0):
        raise ValueError(f"shape and rate must be positive, got ({shape}, {rate})")
    x = grid.nodes()
    vals = np.zeros_like(x)
    pos = x > 0.0
    vals[pos] = np.exp((shape - 1.0) * np.log(x[pos]) - rate * x[pos])
    mass = grid.dx * vals.sum()
    if not mass > 0.0:
        raise ValueError("initial profile vanishes on the whole grid")
    return vals / mass


@dataclass(frozen=True)
class DriftMatrix:
    """Assembled spatial operator of the chaos-expanded Fokker-Planck equation."""

    grid: GridSpec
    basis: TensorBasis
    names: tuple[str, ...]
    A: np.ndarray                     # (N, K, K) growth drift, minus sign included
    sigma2: float | np.ndarray        # scalar, or (K, K) projection when uncertain
    control: ControlSpec | None = None
    control_diag: np.ndarray | None = None   # (N,) therapy drift for the diagonal

    @property
    def n_terms(self) -> int:
        return self.A.shape[1]

    def with_control_merged(self) -> np.ndarray:
        """Drift matrices with the therapy term added on the diagonal."""
        if self.control_diag is None:
            return self.A
        K = self.n_terms
        A = self.A.copy()
        idx = np.arange(K)
        A[:, idx, idx] += self.control_diag[:, None]
        return A


def _drift_values(x: np.ndarray, params: GrowthParams) -> np.ndarray:
    # -x Phi(x / x_L); micro_rhs already handles the x = 0 node
    return -micro_rhs(x, params)


def _assemble(
    grid: GridSpec,
    base: GrowthParams,
    rv: RandomVector,
    basis: TensorBasis,
    n_quad: int,
) -> tuple[np.ndarray, float | np.ndarray]:
    x = grid.nodes()
    nodes, w = basis.quadrature(n_quad)
    psi = basis.eval(nodes)
    drift = np.empty((nodes.shape[0], x.size))
    sig = np.empty(nodes.shape[0])
    for q in range(nodes.shape[0]):
        pq = bind_params(base, rv.names, nodes[q])
        drift[q] = _drift_values(x, pq)
        sig[q] = pq.sigma2
    K = basis.n_terms
    A = np.empty((x.size, K, K))
    for i in range(x.size):
        A[i] = psi.T @ (psi * (w * drift[:, i])[:, None])
    if "sigma2" in rv.names:
        sigma2 = psi.T @ (psi * (w * sig)[:, None])
    else:
        sigma2 = float(base.sigma2)
    return A, sigma2


def assemble_drift(
    grid: GridSpec,
    base: GrowthParams,
    rv: RandomVector,
    degree: int,
    control: ControlSpec | None = None,
    n_quad: int | None = None,
    check_quadrature: bool = True,
) -> DriftMatrix:
    """Assemble the chaos-projected drift and diffusion on the grid.

    The projection integrals are evaluated by tensor Gauss quadrature with
    n_quad points per dimension (default 2 degree + 2; the drift is smooth but
    not polynomial in z, so the default oversamples the basis).  With
    check_quadrature the assembly is repeated at doubled order and a warning
    issued if the two disagree, at the price of redoing the dominant cost.

    Args:
        grid: uniform volume grid.
        base: defaults for parameters not listed in rv.
        rv: uncertain parameters, in the order quadrature nodes bind them.
        degree: chaos degree per dimension.
        control: optional quadratic therapy protocol (p = 2 only here, since
            only that control has a closed drift form).
        n_quad: quadrature points per dimension.
        check_quadrature: verify the assembly against a doubled rule.

    Returns:
        The assembled operator.
    """
    if control is not None and control.p != 2:
        raise ConfigError("the Fokker-Planck drift closed form exists only for p = 2")
    basis = rv.basis(degree)
    nq = 2 * degree + 2 if n_quad is None else n_quad
    A, sigma2 = _assemble(grid, base, rv, basis, nq)
    if check_quadrature:
        A2, s2b = _assemble(grid, base, rv, basis, 2 * nq)
        scale = max(np.abs(A2).max(), 1e-300)
        err = np.abs(A - A2).max() / scale
        if isinstance(sigma2, np.ndarray):
            err = max(err, np.abs(sigma2 - s2b).max() / max(np.abs(s2b).max(), 1e-300))
        if err > 1e-8:
            warnings.warn(
                f"projection quadrature not converged: doubled rule moves the "
                f"drift by a relative {err:.2e}; raise n_quad",
                stacklevel=2)
        A, sigma2 = A2, s2b
    ctl_diag = None
    if control is not None:
        ctl_diag = controlled_drift(grid.nodes(), control)
    return DriftMatrix(grid=grid, basis=basis, names=tuple(rv.names), A=A,
                       sigma2=sigma2, control=control, control_diag=ctl_diag)


def _sigma2_sup(sigma2: float | np.ndarray) -> float:
    if isinstance(sigma2, np.ndarray):
        return float(np.abs(sigma2).sum(axis=1).max())
    return float(sigma2)


def max_stable_dt(op: DriftMatrix) -> float:
    """A priori explicit-step estimate dx^2 / (s2 x_max^2 + dx max ||A||_inf)."""
    dx = op.grid.dx
    A = op.with_control_merged()
    row_sum = np.abs(A).sum(axis=2).max()
    denom = _sigma2_sup(op.sigma2) * op.grid.x_max**2 + dx * row_sum
    if denom <= 0.0:
        return np.inf
    return dx * dx / denom


def exp_rate_bound(op: DriftMatrix) -> float:
    """Envelope rate C_A: the measured maximum of |d/dx A_kh| over the grid.

    Entrywise central differences (one-sided at the ends), taken over both the
    free and the therapy-merged drift so the bound covers either phase of an
    activating run.  Behind the monitor envelope
    ||fhat(t)||^2 <= ||fhat(0)||^2 exp(C_A t).
    """
    dx = op.grid.dx
    rate = float(np.abs(np.gradient(op.A, dx, axis=0)).max())
    if op.control_diag is not None:
        merged = op.with_control_merged()
        rate = max(rate, float(np.abs(np.gradient(merged, dx, axis=0)).max()))
    return rate


@dataclass
class StabilityReport:
    """Health indicators of one solver run."""

    dt: float
    dt_limit: float
    rate_bound: float
    norm_ratio_max: float = 0.0   # max ||f||^2 / (||f0||^2 exp(rate t))
    mass_error_max: float = 0.0   # max |mass(t)/mass(0) - 1|
    min_marginal: float = 0.0     # most negative value of fhat_0 seen

    @property
    def ok(self) -> bool:
        return (
            self.dt <= self.dt_limit
            and self.norm_ratio_max <= 1.0 + NORM_SLACK
            and self.mass_error_max <= 1e-10
        )

    @property
    def negativity_ok(self) -> bool:
        """Whether the marginal stayed above the small-undershoot tolerance.

        Reported separately from ok: the central scheme is not positivity
        preserving and singular initial profiles park an O(1) undershoot at
        the origin without harming mass, norm, or moments.
        """
        return self.min_marginal >= NEGATIVITY_TOL


@dataclass
class SGResult:
    """Recorded output of one stochastic-Galerkin run."""

    op: DriftMatrix
    times: np.ndarray             # (n_rec,)
    mass: np.ndarray              # (n_rec,)
    moment_coeffs: np.ndarray     # (n_rec, K), chaos coefficients of m(z, t)
    moment2_coeffs: np.ndarray    # (n_rec, K), coefficients of E(z, t)
    l2sq: np.ndarray              # (n_rec,) dx sum over nodes and terms of fhat^2
    min_marginal: float           # most negative fhat_0 value seen at records
    snapshot_times: np.ndarray    # (n_snap,)
    snapshots: np.ndarray         # (n_snap, N, K)
    activated_at: float | None
    stability: StabilityReport | None = None

    @property
    def x(self) -> np.ndarray:
        return self.op.grid.nodes()

    @property
    def final(self) -> np.ndarray:
        return self.snapshots[-1]


def stability_monitor(result: SGResult) -> StabilityReport:
    """Judge a finished run against its a priori guarantees.

    Recomputes the explicit-step estimate and the exponential L2 envelope from
    the operator, then checks the recorded norm history, mass drift, and the
    negativity watermark.
    """
    op = result.op
    rate = exp_rate_bound(op)
    report = StabilityReport(
        dt=result.stability.dt if result.stability is not None else 0.0,
        dt_limit=max_stable_dt(op),
        rate_bound=rate,
        min_marginal=result.min_marginal,
    )
    if result.mass.size and result.mass[0] != 0.0:
        report.mass_error_max = float(np.abs(result.mass / result.mass[0] - 1.0).max())
    if result.l2sq.size and result.l2sq[0] > 0.0:
        env = result.l2sq[0] * np.exp(np.minimum(rate * result.times, 700.0))
        report.norm_ratio_max = float((result.l2sq / env).max())
    return report


@dataclass
class GalerkinState:
    """Mutable chaos-coefficient state advanced by step()."""

    t: float
    F: np.ndarray                 # (N, K)
    active: bool = False
    activated_at: float | None = None


def _flux_update(F: np.ndarray, A: np.ndarray, xx: np.ndarray,
                 s2_mat: np.ndarray | None, s2_scalar: float | None,
                 dt: float, dx: float) -> None:
    """One conservative explicit update of the coefficient block, in place."""
    g = np.matmul(A, F[:, :, None])[:, :, 0]
    q = xx[:, None] * (F @ s2_mat if s2_mat is not None else s2_scalar * F)
    J = 0.5 * (g[:-1] + g[1:]) + 0.5 * (q[1:] - q[:-1]) / dx
    F[:-1] += (dt / dx) * J
    F[1:] -= (dt / dx) * J


def step(state: GalerkinState, op: DriftMatrix, dt: float) -> GalerkinState:
    """Advance the state by one explicit step, latching the therapy protocol.

    Activation is evaluated on the pre-step state: once the protocol's time or
    mean-volume trigger is met the merged drift is used from this step on.
    """
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    grid = op.grid
    x = grid.nodes()
    if state.F.shape != (grid.n_nodes, op.n_terms):
        raise ValueError(
            f"state shape {state.F.shape} does not match operator "
            f"({grid.n_nodes}, {op.n_terms})")
    activation = op.control.activation if op.control is not None else None
    if not state.active and activation is not None:
        if isinstance(activation, AtTime):
            hit = state.t >= activation.t - 1e-12
        else:
            hit = grid.dx * float(x @ state.F[:, 0]) >= activation.xbar
        if hit:
            state.active = True
            state.activated_at = state.t
    A = op.with_control_merged() if state.active else op.A
    s2_mat = op.sigma2 if isinstance(op.sigma2, np.ndarray) else None
    s2_scalar = None if s2_mat is not None else float(op.sigma2)
    _flux_update(state.F, A, x * x, s2_mat, s2_scalar, dt, grid.dx)
    state.t += dt
    return state


def _prepare_ic(ic: np.ndarray, n_nodes: int, n_terms: int) -> np.ndarray:
    arr = np.asarray(ic, dtype=float)
    if arr.shape == (n_nodes,):
        F = np.zeros((n_nodes, n_terms))
        F[:, 0] = arr
        return F
    if arr.shape == (n_nodes, n_terms):
        return arr.copy()
    raise ValueError(
        f"initial condition must have shape ({n_nodes},) or ({n_nodes}, {n_terms}), "
        f"got {arr.shape}")


def _check_dt(dt: float, dt_limit: float, enforce: bool) -> None:
    if dt <= dt_limit:
        return
    msg = (f"dt = {dt:.3g} exceeds the explicit stability estimate "
           f"{dt_limit:.3g}")
    if enforce:
        raise ConfigError(msg + "; lower dt or raise the divider (the run "
                          "refuses to start; pass enforce_stability=False to "
                          "override)")
    warnings.warn(msg + "; expect blow-up", stacklevel=3)


def solve(
    op: DriftMatrix,
    ic: np.ndarray,
    t_final: float,
    courant: float = 100.0,
    dt: float | None = None,
    n_records: int = 50,
    snapshot_times=(),
    check_every: int = 50,
    enforce_stability: bool = True,
    negativity_floor: float | None = None,
) -> SGResult:
    """March the chaos coefficients to t_final with the explicit scheme.

    Args:
        op: assembled operator.
        ic: marginal density (N,) expanded as fhat_0, or full (N, K) state.
        t_final: integration horizon; 0 records the initial state only.
        courant: step divider, dt = dx / courant (ignored when dt is given).
        dt: explicit time step.
        n_records: number of mass/moment records past t = 0.
        snapshot_times: times whose full coefficient state is stored; the
            final state is always stored.
        check_every: blow-up scan period in steps.
        enforce_stability: refuse to start when dt exceeds the a priori
            estimate; set False to run anyway (the monitor still reports).
        negativity_floor: when set, marginal values below it abort the run;
            by default only the watermark is recorded, since rough initial
            profiles make the central scheme undershoot persistently.

    Raises:
        ConfigError: when the requested step fails the startup stability check.
        NumericalError: on overflow, non-finite coefficients, or negativity
            beyond the floor mid-run.
    """
    if t_final < 0.0:
        raise ValueError(f"t_final must be nonnegative, got {t_final}")
    grid = op.grid
    x = grid.nodes()
    dx = grid.dx
    if dt is None:
        if not courant > 0.0:
            raise ValueError(f"courant must be positive, got {courant}")
        dt = dx / courant
    dt_limit = max_stable_dt(op)
    _check_dt(dt, dt_limit, enforce_stability)
    if t_final > 0.0:
        n_steps = max(1, int(np.ceil(t_final / dt - 1e-12)))
        dt = t_final / n_steps
    else:
        n_steps = 0

    K = op.n_terms
    F = _prepare_ic(ic, grid.n_nodes, K)
    A_free = op.A
    A_ctl = op.with_control_merged() if op.control is not None else None
    xx = x * x
    s2_mat = op.sigma2 if isinstance(op.sigma2, np.ndarray) else None
    s2_scalar = None if s2_mat is not None else float(op.sigma2)

    activation = op.control.activation if op.control is not None else None
    active = False
    activated_at: float | None = None
    if isinstance(activation, AtTime) and activation.t <= 0.0:
        active, activated_at = True, 0.0

    rec_steps = np.unique(np.round(np.linspace(0, n_steps, n_records + 1)).astype(int))
    snap_steps = np.unique(
        np.clip(np.round(np.asarray(list(snapshot_times) + [t_final])
                         / (dt if n_steps else 1.0)), 0, n_steps).astype(int))
    times, masses, mom, mom2, l2sq = [], [], [], [], []
    snaps, snap_t = [], []
    min_marginal = 0.0

    def record(step_no: int) -> None:
        nonlocal min_marginal
        t = step_no * dt
        times.append(t)
        masses.append(dx * float(F[:, 0].sum()))
        mom.append(dx * (x @ F))
        mom2.append(dx * (xx @ F))
        l2sq.append(dx * float((F * F).sum()))
        low = float(F[:, 0].min())
        min_marginal = min(min_marginal, low)
        if negativity_floor is not None and low < negativity_floor:
            raise NumericalError(
                f"marginal density fell to {low:.3g} at t = {t:.6g}, below the "
                f"negativity floor {negativity_floor:.3g}")

    def mean_volume() -> float:
        return dx * float(x @ F[:, 0])

    if isinstance(activation, MeanThreshold) and mean_volume() >= activation.xbar:
        active, activated_at = True, 0.0
    if 0 in rec_steps:
        record(0)
    if 0 in snap_steps:
        snaps.append(F.copy())
        snap_t.append(0.0)

    rec_set = set(rec_steps.tolist())
    snap_set = set(snap_steps.tolist())
    for step_no in range(1, n_steps + 1):
        t_prev = (step_no - 1) * dt
        if not active and activation is not None:
            if isinstance(activation, AtTime):
                if t_prev >= activation.t - 1e-12:
                    active, activated_at = True, t_prev
            elif mean_volume() >= activation.xbar:
                active, activated_at = True, t_prev
        A = A_ctl if active else A_free
        _flux_update(F, A, xx, s2_mat, s2_scalar, dt, dx)
        if step_no % check_every == 0 or step_no == n_steps:
            peak = float(np.abs(F).max())
            if not np.isfinite(peak) or peak > BLOWUP_THRESHOLD:
                raise NumericalError(
                    f"solution blew up near t = {step_no * dt:.6g} "
                    f"(peak coefficient {peak:.3g})")
        if step_no in rec_set:
            record(step_no)
        if step_no in snap_set:
            snaps.append(F.copy())
            snap_t.append(step_no * dt)

    result = SGResult(
        op=op,
        times=np.asarray(times),
        mass=np.asarray(masses),
        moment_coeffs=np.asarray(mom),
        moment2_coeffs=np.asarray(mom2),
        l2sq=np.asarray(l2sq),
        min_marginal=min_marginal,
        snapshot_times=np.asarray(snap_t),
        snapshots=np.asarray(snaps),
        activated_at=activated_at,
        stability=StabilityReport(dt=dt if n_steps else 0.0, dt_limit=dt_limit,
                                  rate_bound=0.0),
    )
    result.stability = stability_monitor(result)
    return result


def reconstruct(coeffs: np.ndarray, basis: TensorBasis, Z) -> np.ndarray:
    """Density values f(x, z) = sum_k coeffs[:, k] Psi_k(z), shape (n_z, N)."""
    psi = basis.eval(Z)
    return psi @ np.asarray(coeffs).T


# ---------------------------------------------------------------------------
# Batched runs at fixed parameter points
# ---------------------------------------------------------------------------


@dataclass
class PointwiseResult:
    """Output of a batch of scalar (fixed-z) Fokker-Planck runs."""

    x: np.ndarray
    times: np.ndarray           # (n_rec,)
    mass: np.ndarray            # (n_rec, B)
    m: np.ndarray               # (n_rec, B) first moments
    var: np.ndarray             # (n_rec, B) variances
    F_final: np.ndarray         # (B, N)
    activated_at: np.ndarray    # (B,) activation times, nan if never
    min_value: float = 0.0      # most negative density value seen at records
    snapshot_times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    snapshots: np.ndarray = field(default_factory=lambda: np.zeros((0, 0, 0)))


def solve_pointwise(
    params_list,
    grid: GridSpec,
    t_final: float,
    ic: np.ndarray,
    control: ControlSpec | None = None,
    courant: float = 100.0,
    dt: float | None = None,
    n_records: int = 50,
    snapshot_times=(),
    drift_fn=None,
    check_every: int = 200,
    enforce_stability: bool = True,
    negativity_floor: float | None = None,
) -> PointwiseResult:
    """Run the scalar Fokker-Planck scheme for a batch of parameter points.

    Same spatial scheme as the chaos solver with K = 1, vectorized over the
    batch; useful for collocation-style sweeps and for comparing against
    particle runs node by node.  Mean-threshold activation latches per run on
    that run's own mean.

    Args:
        params_list: sequence of GrowthParams, one per run.
        grid: shared volume grid.
        t_final: horizon; 0 records the initial state only.
        ic: initial marginal, shape (N,) shared or (B, N) per run.
        control: optional p = 2 therapy protocol.
        courant: step divider dt = dx / courant when dt is not given.
        dt: explicit step.
        n_records: number of records past t = 0.
        snapshot_times: times whose full density batch is stored; the final
            state is always stored.
        drift_fn: optional callable (x, params) -> drift values replacing the
            default -x Phi(x / x_L); the therapy term is still added on top.
        check_every: blow-up scan period in steps.
        enforce_stability: refuse to start when dt exceeds the a priori
            estimate; set False to run anyway.
        negativity_floor: when set, values below it abort the run.
    """
    if t_final < 0.0:
        raise ValueError(f"t_final must be nonnegative, got {t_final}")
    if control is not None and control.p != 2:
        raise ConfigError("the Fokker-Planck drift closed form exists only for p = 2")
    params_list = list(params_list)
    B = len(params_list)
    if B == 0:
        raise ValueError("need at least one parameter point")
    x = grid.nodes()
    dx = grid.dx
    N = x.size
    if dt is None:
        if not courant > 0.0:
            raise ValueError(f"courant must be positive, got {courant}")
        dt = dx / courant

    if drift_fn is None:
        drift_fn = lambda xv, p: _drift_values(xv, p)  # noqa: E731
    a = np.stack([np.asarray(drift_fn(x, p), dtype=float) for p in params_list])
    sig2 = np.array([p.sigma2 for p in params_list])
    ctl = np.zeros(N) if control is None else controlled_drift(x, control)

    row = np.abs(a + (ctl if control is not None else 0.0)).max()
    denom = sig2.max() * grid.x_max**2 + dx * row
    dt_limit = np.inf if denom <= 0.0 else dx * dx / denom
    _check_dt(dt, dt_limit, enforce_stability)
    if t_final > 0.0:
        n_steps = max(1, int(np.ceil(t_final / dt - 1e-12)))
        dt = t_final / n_steps
    else:
        n_steps = 0

    ic = np.asarray(ic, dtype=float)
    if ic.shape == (N,):
        F = np.tile(ic, (B, 1))
    elif ic.shape == (B, N):
        F = ic.copy()
    else:
        raise ValueError(f"ic must have shape ({N},) or ({B}, {N}), got {ic.shape}")

    activation = control.activation if control is not None else None
    active = np.zeros(B, dtype=bool)
    activated_at = np.full(B, np.nan)
    xx = x * x
    sig2c = sig2[:, None]

    rec_steps = np.unique(np.round(np.linspace(0, n_steps, n_records + 1)).astype(int))
    rec_set = set(rec_steps.tolist())
    snap_steps = np.unique(
        np.clip(np.round(np.asarray(list(snapshot_times) + [t_final])
                         / (dt if n_steps else 1.0)), 0, n_steps).astype(int))
    snap_set = set(snap_steps.tolist())
    times, mass_r, m_r, var_r = [], [], [], []
    snaps, snap_t = [], []
    min_value = 0.0

    def moments() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        mass = dx * F.sum(axis=1)
        m1 = dx * (F @ x)
        m2 = dx * (F @ xx)
        with np.errstate(divide="ignore", invalid="ignore"):
            mm = np.where(mass > 0.0, m1 / mass, 0.0)
            vv = np.where(mass > 0.0, m2 / mass - mm * mm, 0.0)
        return mass, m1, np.maximum(vv, 0.0)

    def record(t: float) -> None:
        nonlocal min_value
        mass, m1, vv = moments()
        times.append(t)
        mass_r.append(mass)
        m_r.append(np.where(mass > 0, m1 / mass, 0.0))
        var_r.append(vv)
        low = float(F.min())
        min_value = min(min_value, low)
        if negativity_floor is not None and low < negativity_floor:
            raise NumericalError(
                f"a density fell to {low:.3g} at t = {t:.6g}, below the "
                f"negativity floor {negativity_floor:.3g}")

    def latch(t: float) -> None:
        nonlocal active, activated_at
        if activation is None or active.all():
            return
        if isinstance(activation, AtTime):
            if t >= activation.t - 1e-12:
                activated_at[~active] = t
                active[:] = True
        else:
            mass = dx * F.sum(axis=1)
            m1 = dx * (F @ x)
            mm = np.where(mass > 0.0, m1 / mass, 0.0)
            hit = (~active) & (mm >= activation.xbar)
            activated_at[hit] = t
            active |= hit

    latch(0.0)
    if 0 in rec_set:
        record(0.0)
    if 0 in snap_set:
        snaps.append(F.copy())
        snap_t.append(0.0)

    for step_no in range(1, n_steps + 1):
        g = (a + np.where(active[:, None], ctl[None, :], 0.0)) * F
        q = sig2c * (xx[None, :] * F)
        J = 0.5 * (g[:, :-1] + g[:, 1:]) + 0.5 * (q[:, 1:] - q[:, :-1]) / dx
        F[:, :-1] += (dt / dx) * J
        F[:, 1:] -= (dt / dx) * J
        if step_no % check_every == 0 or step_no == n_steps:
            peak = float(np.abs(F).max())
            if not np.isfinite(peak) or peak > BLOWUP_THRESHOLD:
                raise NumericalError(
                    f"solution blew up near t = {step_no * dt:.6g} "
                    f"(peak value {peak:.3g})")
        latch(step_no * dt)
        if step_no in rec_set:
            record(step_no * dt)
        if step_no in snap_set:
            snaps.append(F.copy())
            snap_t.append(step_no * dt)

    return PointwiseResult(
        x=x,
        times=np.asarray(times),
        mass=np.asarray(mass_r),
        m=np.asarray(m_r),
        var=np.asarray(var_r),
        F_final=F,
        activated_at=activated_at,
        min_value=min_value,
        snapshot_times=np.asarray(snap_t),
        snapshots=np.asarray(snaps),
    )
