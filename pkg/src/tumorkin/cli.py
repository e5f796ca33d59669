"""Command-line front end: five experiment commands over JSON run configs.

Commands: simulate (one solver run, snapshot + moment files), control-sweep
(target-variability index over a kappa grid), converge (chaos-order refinement
study), calibrate (cohort report from a patient CSV), synth (synthetic cohort
generator).  A run is fully described by a JSON config plus a seed; repeating
a command with the same config and seed reproduces every output file byte for
byte.  All CSV floats are written in shortest round-trip form so the emitted
files parse back to identical values.

Exit codes: 0 success, 2 config error, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analysis
from .calibration import (
    CohortSpec,
    fit_cohort,
    fit_record,
    read_patient_csv,
    synth_cohort,
    write_cohort_report,
    write_fit_records,
    write_patient_csv,
)
from .control import AtTime, ControlSpec, MeanThreshold, Selective
from .dsmc_sim import CollocationPlan, run as run_collocation, run_dsmc
from .errors import ConfigError, NumericalError
from .fp_sg_solver import (
    GridSpec,
    assemble_drift,
    gamma_ic,
    solve,
    solve_pointwise,
)
from .growth_models import GrowthParams
from .uq_basis import BetaOn, RandomVector, Uniform

SCHEMA_VERSION = 1

#: environment variable naming the default output directory
OUTDIR_ENV = "TUMORKIN_OUTDIR"

#: reported densities this close below zero are rendered as zero; the state
#: itself is never clipped
REPORT_CLIP = -1e-8


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    """Validated run description assembled from the JSON config file."""

    base: GrowthParams
    rv: RandomVector | None
    grid: GridSpec
    degree: int
    solver: str
    t_final: float
    courant: float
    dt: float | None
    n_records: int
    snapshot_times: tuple[float, ...]
    control: ControlSpec | None
    ic: dict
    seed: int | None
    outdir: Path
    threads: int
    raw: dict = field(repr=False, default_factory=dict)


def _need(cfg: dict, key: str, context: str):
    if key not in cfg:
        raise ConfigError(f"{context}: missing required key {key!r}")
    return cfg[key]


def _dist_from_config(d: dict):
    kind = str(_need(d, "dist", "uncertain entry")).lower()
    try:
        if kind == "uniform":
            return Uniform(float(_need(d, "lo", "uniform dist")),
                           float(_need(d, "hi", "uniform dist")))
        if kind == "beta":
            return BetaOn(float(_need(d, "c1", "beta dist")),
                          float(_need(d, "c2", "beta dist")),
                          float(_need(d, "lo", "beta dist")),
                          float(_need(d, "hi", "beta dist")))
    except ValueError as exc:
        raise ConfigError(f"bad distribution parameters: {exc}") from exc
    raise ConfigError(f"unknown distribution kind {kind!r} (uniform or beta)")


def _control_from_config(d: dict) -> ControlSpec:
    sel = str(d.get("selective", "unit")).lower()
    try:
        selective = Selective(sel)
    except ValueError:
        raise ConfigError(
            f"unknown selective function {sel!r} (unit or sqrt_x)") from None
    act_cfg = d.get("activation", {"type": "at_time", "t": 0.0})
    act_type = str(act_cfg.get("type", "at_time")).lower()
    if act_type == "at_time":
        activation = AtTime(float(act_cfg.get("t", 0.0)))
    elif act_type == "mean_threshold":
        activation = MeanThreshold(float(_need(act_cfg, "xbar", "activation")))
    else:
        raise ConfigError(f"unknown activation type {act_type!r}")
    u_bounds = tuple(d.get("u_bounds", (-50.0, 50.0)))
    try:
        return ControlSpec(p=int(_need(d, "p", "control")),
                           kappa=float(_need(d, "kappa", "control")),
                           x_d=float(d.get("x_d", 0.18)),
                           selective=selective,
                           u_bounds=(float(u_bounds[0]), float(u_bounds[1])),
                           activation=activation)
    except ValueError as exc:
        raise ConfigError(f"bad control spec: {exc}") from exc


def load_config(path, seed=None, out=None, threads=None) -> RunConfig:
    """Parse and validate a JSON run config; CLI flags override file values."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    version = _need(raw, "schema_version", str(path))
    if version != SCHEMA_VERSION:
        raise ConfigError(
            f"{path}: schema_version {version!r} unsupported (expected {SCHEMA_VERSION})")

    model_cfg = dict(_need(raw, "model", str(path)))
    try:
        base = GrowthParams(
            mu=float(model_cfg.get("mu", 0.3)),
            lam=float(model_cfg.get("lam", 0.0)),
            delta=float(model_cfg.get("delta", 0.0)),
            x_L=float(model_cfg.get("x_L", 1.0)),
            sigma2=float(model_cfg.get("sigma2", 0.0)))
    except ValueError as exc:
        raise ConfigError(f"bad model parameters: {exc}") from exc

    rv = None
    entries = raw.get("uncertain", [])
    if entries:
        names = [str(_need(e, "name", "uncertain entry")) for e in entries]
        if len(set(names)) != len(names):
            raise ConfigError(f"uncertain bindings repeat a name: {names}")
        rv = RandomVector(names=tuple(names),
                          dists=tuple(_dist_from_config(e) for e in entries))

    grid_cfg = raw.get("grid", {})
    try:
        grid = GridSpec(x_max=float(grid_cfg.get("x_max", 2.0)),
                        n_nodes=int(grid_cfg.get("n_nodes", 201)))
    except ValueError as exc:
        raise ConfigError(f"bad grid: {exc}") from exc

    solver = str(raw.get("solver", "sg")).lower()
    if solver not in ("sg", "dsmc"):
        raise ConfigError(f"unknown solver {solver!r} (sg or dsmc)")

    control = None
    if raw.get("control") is not None:
        control = _control_from_config(dict(raw["control"]))

    t_final = float(raw.get("t_final", 10.0))
    if t_final < 0.0:
        raise ConfigError(f"t_final must be nonnegative, got {t_final}")
    degree = int(raw.get("degree", 3))
    if degree < 0:
        raise ConfigError(f"degree must be nonnegative, got {degree}")

    seed_val = raw.get("seed")
    if seed is not None:
        seed_val = seed
    if seed_val is not None:
        seed_val = int(seed_val)

    outdir = out if out is not None else raw.get(
        "outdir", os.environ.get(OUTDIR_ENV, "out"))

    return RunConfig(
        base=base, rv=rv, grid=grid, degree=degree, solver=solver,
        t_final=t_final, courant=float(raw.get("courant", 100.0)),
        dt=None if raw.get("dt") is None else float(raw["dt"]),
        n_records=int(raw.get("n_records", 50)),
        snapshot_times=tuple(float(t) for t in raw.get("snapshot_times", ())),
        control=control, ic=dict(raw.get("ic", {})),
        seed=seed_val, outdir=Path(outdir),
        threads=int(threads) if threads is not None else int(raw.get("threads", 1)),
        raw=raw)


def build_ic(grid: GridSpec, ic_cfg: dict) -> np.ndarray:
    """Initial marginal density on the grid (unit dx-sum)."""
    kind = str(ic_cfg.get("kind", "gamma")).lower()
    x = grid.nodes()
    if kind == "gamma":
        return gamma_ic(grid, shape=float(ic_cfg.get("shape", 0.3)),
                        rate=float(ic_cfg.get("rate", 2.8)))
    if kind == "gaussian":
        center = float(_need(ic_cfg, "center", "gaussian ic"))
        width = float(_need(ic_cfg, "width", "gaussian ic"))
        if width <= 0.0:
            raise ConfigError(f"gaussian ic width must be positive, got {width}")
        f = np.exp(-0.5 * ((x - center) / width) ** 2)
        f[0] = 0.0
        total = f.sum() * grid.dx
        if total <= 0.0:
            raise ConfigError("gaussian ic vanishes on the grid")
        return f / total
    raise ConfigError(f"unknown ic kind {kind!r} (gamma or gaussian)")


# ---------------------------------------------------------------------------
# CSV plumbing
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    return repr(float(v))


def clip_reported(values: np.ndarray) -> np.ndarray:
    """Zero out tiny negative density values for file output only."""
    v = np.asarray(values, dtype=float)
    return np.where((v >= REPORT_CLIP) & (v < 0.0), 0.0, v)


def write_table(path, header, columns) -> None:
    """Write float columns as a headed CSV in round-trip form."""
    cols = [np.asarray(c, dtype=float) for c in columns]
    n = cols[0].size
    if any(c.size != n for c in cols) or len(cols) != len(header):
        raise ValueError("header/column shape mismatch")
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(n):
            fh.write(",".join(_fmt(c[i]) for c in cols) + "\n")


def read_table(path) -> tuple[list[str], np.ndarray]:
    """Read a headed all-float CSV back; inverse of write_table."""
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        header = [h.strip() for h in fh.readline().rstrip("\n").split(",")]
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.size == 0:
        data = data.reshape(0, len(header))
    return header, data


def write_snapshot_csv(path, x, coeffs) -> None:
    """Snapshot file `x, fhat_0, fhat_1, ...`; the marginal column is clipped."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.ndim == 1:
        coeffs = coeffs[:, None]
    header = ["x"] + [f"fhat_{k}" for k in range(coeffs.shape[1])]
    cols = [x, clip_reported(coeffs[:, 0])]
    cols += [coeffs[:, k] for k in range(1, coeffs.shape[1])]
    write_table(path, header, cols)


def write_moments_csv(path, series: analysis.MomentSeries) -> None:
    lo, hi = series.band()
    write_table(path, ["t", "mean_m", "p10", "p90", "var_z"],
                [series.times, series.mean_m, lo, hi, series.var_m])


def write_histogram_csv(path, edges, density) -> None:
    edges = np.asarray(edges, dtype=float)
    write_table(path, ["bin_left", "bin_right", "density"],
                [edges[:-1], edges[1:], clip_reported(density)])


def write_g_report_csv(path, report: analysis.GIndexReport) -> None:
    write_table(path, ["kappa", "EG", "band_lo", "band_hi"],
                [report.kappas, report.EG, report.band_lo, report.band_hi])


def write_convergence_csv(path, study: analysis.ConvergenceStudy) -> None:
    write_table(path, ["M", "l2_error"],
                [np.asarray(study.degrees, dtype=float), study.errors])


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _outdir(config: RunConfig) -> Path:
    config.outdir.mkdir(parents=True, exist_ok=True)
    return config.outdir


def cmd_simulate(config: RunConfig) -> dict:
    """Run the configured solver and write snapshot and moment files."""
    out = _outdir(config)
    ic = build_ic(config.grid, config.ic)
    written: dict[str, Path] = {}
    if config.solver == "sg":
        summary = _simulate_sg(config, ic, out, written)
    else:
        summary = _simulate_dsmc(config, ic, out, written)
    print(f"final E_z[m] = {_fmt(summary['final_mean'])}")
    print(f"mass drift = {_fmt(summary['mass_drift'])}")
    ratio = summary["stability_ratio"]
    print(f"stability ratio = {'n/a' if ratio is None else _fmt(ratio)}")
    return written


def _simulate_sg(config: RunConfig, ic, out: Path, written: dict) -> dict:
    if config.rv is not None:
        op = assemble_drift(config.grid, config.base, config.rv, config.degree,
                            control=config.control)
        result = solve(op, ic, config.t_final, courant=config.courant,
                       dt=config.dt, n_records=config.n_records,
                       snapshot_times=config.snapshot_times)
        series = analysis.moment_series_from_sg(result)
        for i, (t, coeffs) in enumerate(zip(result.snapshot_times, result.snapshots)):
            p = out / f"snapshot_{i}.csv"
            write_snapshot_csv(p, result.x, coeffs)
            written[f"snapshot_{i}"] = p
        p = out / "moments.csv"
        write_moments_csv(p, series)
        written["moments"] = p
        mass_drift = float(np.abs(result.mass - result.mass[0]).max())
        ratio = result.stability.norm_ratio_max if result.stability else None
        return dict(final_mean=series.mean_m[-1], mass_drift=mass_drift,
                    stability_ratio=ratio)
    # deterministic parameters: single forward run, degenerate statistics
    result = solve_pointwise([config.base], config.grid, config.t_final,
                             ic, control=config.control, courant=config.courant,
                             dt=config.dt, n_records=config.n_records,
                             snapshot_times=config.snapshot_times)
    for i, dens in enumerate(result.snapshots):
        p = out / f"snapshot_{i}.csv"
        write_snapshot_csv(p, result.x, dens[0])
        written[f"snapshot_{i}"] = p
    m = result.m[:, 0]
    zeros = np.zeros_like(m)
    p = out / "moments.csv"
    write_table(p, ["t", "mean_m", "p10", "p90", "var_z"],
                [result.times, m, m, m, zeros])
    written["moments"] = p
    mass_drift = float(np.abs(result.mass[:, 0] - result.mass[0, 0]).max())
    return dict(final_mean=m[-1], mass_drift=mass_drift, stability_ratio=None)


def _hist_edges(grid: GridSpec) -> np.ndarray:
    return np.linspace(0.0, grid.x_max, 101)


def _simulate_dsmc(config: RunConfig, ic, out: Path, written: dict) -> dict:
    dsmc_cfg = dict(config.raw.get("dsmc", {}))
    n_particles = int(_need(dsmc_cfg, "n_particles", "dsmc section"))
    dt = float(_need(dsmc_cfg, "dt", "dsmc section"))
    eps = dsmc_cfg.get("eps")
    eps = None if eps is None else float(eps)
    ic_pair = (config.grid.nodes(), ic)
    edges = _hist_edges(config.grid)
    if config.rv is not None:
        n_per_dim = int(dsmc_cfg.get("n_per_dim") or config.degree + 1)
        plan = CollocationPlan(base=config.base, rv=config.rv,
                               n_per_dim=n_per_dim, n_particles=n_particles,
                               dt=dt, eps=eps, seed=config.seed)
        ens = run_collocation(plan, config.t_final, ic_pair,
                              control=config.control,
                              n_records=config.n_records,
                              threads=config.threads)
        for i, res in enumerate(ens.results):
            p = out / f"node_{i:03d}.csv"
            write_table(p, ["t", "m", "E", "var"],
                        [res.times, res.m, res.e2, res.var])
            written[f"node_{i}"] = p
            ph = out / f"hist_node_{i:03d}.csv"
            dens, _ = np.histogram(res.final, bins=edges, density=True)
            write_histogram_csv(ph, edges, dens)
            written[f"hist_node_{i}"] = ph
        mean_curve = ens.mean_curve()
        m_nodes = np.stack([r.m for r in ens.results], axis=1)
        lo = np.array([analysis.weighted_quantile(m_nodes[j], ens.weights, 10.0)
                       for j in range(m_nodes.shape[0])])
        hi = np.array([analysis.weighted_quantile(m_nodes[j], ens.weights, 90.0)
                       for j in range(m_nodes.shape[0])])
        p = out / "aggregate.csv"
        write_table(p, ["t", "Em_z", "p10", "p90"],
                    [ens.times, mean_curve, lo, hi])
        written["aggregate"] = p
        final_mean = float(mean_curve[-1])
    else:
        res = run_dsmc(config.base, n_particles, config.t_final, dt,
                       ic_pair, eps=eps, control=config.control,
                       seed=config.seed, n_records=config.n_records)
        p = out / "node_000.csv"
        write_table(p, ["t", "m", "E", "var"], [res.times, res.m, res.e2, res.var])
        written["node_0"] = p
        ph = out / "hist_node_000.csv"
        dens, _ = np.histogram(res.final, bins=edges, density=True)
        write_histogram_csv(ph, edges, dens)
        written["hist_node_0"] = ph
        p = out / "aggregate.csv"
        write_table(p, ["t", "Em_z", "p10", "p90"],
                    [res.times, res.m, res.m, res.m])
        written["aggregate"] = p
        final_mean = float(res.m[-1])
    # particle count is conserved exactly; the solver never loses mass
    return dict(final_mean=final_mean, mass_drift=0.0, stability_ratio=None)


def cmd_control_sweep(config: RunConfig, kappas) -> dict:
    """Run the controlled experiment per kappa and write the G-index report."""
    kappas = [float(k) for k in kappas]
    if not kappas:
        raise ConfigError("control-sweep needs a nonempty kappa list")
    if config.control is None:
        raise ConfigError("control-sweep needs a control section in the config")
    out = _outdir(config)
    dsmc_cfg = dict(config.raw.get("dsmc", {}))
    n_particles = int(dsmc_cfg.get("n_particles", 10_000))
    dt = float(dsmc_cfg.get("dt", 0.05))
    eps = dsmc_cfg.get("eps")
    eps = None if eps is None else float(eps)
    ic = build_ic(config.grid, config.ic)
    ic_pair = (config.grid.nodes(), ic)
    x_d = config.control.x_d

    node_G = []
    weights = None
    for kappa in kappas:
        spec = ControlSpec(p=config.control.p, kappa=kappa, x_d=x_d,
                           selective=config.control.selective,
                           u_bounds=config.control.u_bounds,
                           activation=config.control.activation)
        if config.rv is not None:
            plan = CollocationPlan(base=config.base, rv=config.rv,
                                   n_per_dim=int(dsmc_cfg.get("n_per_dim")
                                                 or config.degree + 1),
                                   n_particles=n_particles, dt=dt, eps=eps,
                                   seed=config.seed)
            ens = run_collocation(plan, config.t_final, ic_pair, control=spec,
                                  n_records=2, threads=config.threads)
            weights = ens.weights
            node_G.append([analysis.g_index_samples(r.final, x_d)
                           for r in ens.results])
        else:
            res = run_dsmc(config.base, n_particles, config.t_final, dt,
                           ic_pair, eps=eps, control=spec, seed=config.seed,
                           n_records=2)
            weights = np.array([1.0])
            node_G.append([analysis.g_index_samples(res.final, x_d)])
    report = analysis.g_report(np.array(kappas), np.array(node_G), weights)
    out_path = out / "g_report.csv"
    write_g_report_csv(out_path, report)
    return {"g_report": out_path, "report": report}


def cmd_converge(config: RunConfig, degrees, ref_degree=None) -> dict:
    """Chaos-order refinement study against a high-order reference."""
    degrees = [int(m) for m in degrees]
    if not degrees:
        raise ConfigError("converge needs a nonempty degree list")
    if config.rv is None:
        raise ConfigError("converge needs at least one uncertain parameter")
    if ref_degree is None:
        ref_degree = int(config.raw.get("ref_degree", 20))
    out = _outdir(config)
    ic = build_ic(config.grid, config.ic)

    def run_at(m: int):
        op = assemble_drift(config.grid, config.base, config.rv, m,
                            control=config.control)
        return solve(op, ic, config.t_final, courant=config.courant,
                     dt=config.dt, n_records=2)

    study = analysis.convergence_study(run_at, degrees, ref_degree)
    out_path = out / "convergence.csv"
    write_convergence_csv(out_path, study)
    return {"convergence": out_path, "study": study}


def cmd_calibrate(data_path, config: RunConfig) -> dict:
    """Fit a patient cohort and write the distribution report."""
    cal_cfg = dict(config.raw.get("calibrate", {}))
    supports_cfg = _need(cal_cfg, "supports", "calibrate section")
    supports = {str(k): (float(v[0]), float(v[1]))
                for k, v in supports_cfg.items()}
    series = read_patient_csv(data_path)
    if not series:
        raise ConfigError(f"{data_path}: no patients found")
    out = _outdir(config)
    fit = fit_cohort(
        series, supports,
        beta_reg=float(cal_cfg.get("beta_reg", 1e-3)),
        n_starts=int(cal_cfg.get("n_starts", 16)),
        seed=0 if config.seed is None else config.seed)
    report_path = out / "cohort_report.csv"
    write_cohort_report(report_path, fit)
    records = []
    for g, v, cons in zip(fit.gompertz, fit.vb, fit.xl_consistency):
        records.append(fit_record(g, extra={"x_L_consistency": float(cons)}))
        records.append(fit_record(v, extra={"x_L_consistency": float(cons)}))
    fits_path = out / "fits.json"
    write_fit_records(fits_path, records)
    return {"cohort_report": report_path, "fits": fits_path, "fit": fit}


def cmd_synth(config: RunConfig) -> dict:
    """Draw a synthetic cohort and write it in the ingestion CSV format."""
    if config.rv is None:
        raise ConfigError("synth needs uncertain parameter laws to draw from")
    synth_cfg = dict(config.raw.get("synth", {}))
    obs_times = synth_cfg.get("obs_times")
    if obs_times is None:
        raise ConfigError("synth section: missing required key 'obs_times'")
    spec = CohortSpec(rv=config.rv, base=config.base,
                      x0_mm3=float(synth_cfg.get("x0_mm3", 50.0)),
                      seed=config.seed)
    cohort = synth_cohort(spec, int(synth_cfg.get("n_patients", 13)),
                          np.asarray(obs_times, dtype=float),
                          noise=float(synth_cfg.get("noise", 0.0)))
    out = _outdir(config)
    path = out / "cohort.csv"
    write_patient_csv(path, cohort)
    return {"cohort": path}


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tumorkin",
        description="Kinetic tumour-growth solvers under clinical uncertainty")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="JSON run config")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--out", default=None,
                       help=f"output directory (default: config, then ${OUTDIR_ENV})")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads for collocation nodes")

    common(sub.add_parser("simulate", help="run one solver experiment"))

    p = sub.add_parser("control-sweep", help="G-index over a kappa grid")
    common(p)
    p.add_argument("--kappas", default=None,
                   help="comma-separated kappa values (default: config)")

    p = sub.add_parser("converge", help="chaos-order refinement study")
    common(p)
    p.add_argument("--degrees", default=None,
                   help="comma-separated chaos orders (default: config)")

    p = sub.add_parser("calibrate", help="fit a patient cohort CSV")
    common(p)
    p.add_argument("data", help="patient CSV (patient_id, t_days, volume_mm3)")

    common(sub.add_parser("synth", help="generate a synthetic cohort CSV"))
    return parser


def _dispatch(args) -> None:
    config = load_config(args.config, seed=args.seed, out=args.out,
                         threads=args.threads)
    if args.command == "simulate":
        cmd_simulate(config)
    elif args.command == "control-sweep":
        if args.kappas is not None:
            kappas = [float(s) for s in args.kappas.split(",") if s.strip()]
        else:
            kappas = config.raw.get("kappas", [])
        cmd_control_sweep(config, kappas)
    elif args.command == "converge":
        if args.degrees is not None:
            degrees = [int(s) for s in args.degrees.split(",") if s.strip()]
        else:
            degrees = config.raw.get("degrees", [])
        cmd_converge(config, degrees)
    elif args.command == "calibrate":
        cmd_calibrate(args.data, config)
    elif args.command == "synth":
        cmd_synth(config)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        _dispatch(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
