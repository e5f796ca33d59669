"""Growth-parameter estimation from volume series and cohort statistics."""

import json

import numpy as np
import pytest
from scipy import stats

from tumorkin import (
    BetaOn,
    CohortSpec,
    GrowthParams,
    PatientSeries,
    RandomVector,
    align_to_onset,
    fit_beta_mle,
    fit_cohort,
    fit_series,
    integrate_micro,
    ks_test,
    read_patient_csv,
    synth_cohort,
    write_patient_csv,
)
from tumorkin.calibration import (
    fit_record,
    predict_volumes,
    vb_p_bounds,
    write_cohort_report,
    write_fit_records,
)
from tumorkin.growth_models import MM3, ModelKind, bind_params

OBS = np.array([0.0, 57.0, 131.0, 263.0, 529.0, 907.0, 1433.0])


def _gompertz_series(mu=0.011, x_L=0.82, x0=5e-4, times=OBS, pid="G1"):
    p = GrowthParams(mu=mu, lam=0.0, delta=0.0, x_L=x_L)
    vols = integrate_micro(x0, p, times) / MM3
    return PatientSeries(pid, times, vols)


def _vb_series(a=0.73, pp=0.047, q=0.031, x0=5e-4, times=OBS, pid="V1"):
    base = GrowthParams(mu=0.1, lam=0.0, delta=-0.5, x_L=1.0)
    p = bind_params(base, ("a", "p", "q"), (a, pp, q))
    vols = integrate_micro(x0, p, times) / MM3
    return PatientSeries(pid, times, vols)


# ---------------------------------------------------------------------------
# Series container and prediction
# ---------------------------------------------------------------------------


def test_patient_series_validation():
    with pytest.raises(ValueError):
        PatientSeries("P", [0.0], [50.0])  # too short
    with pytest.raises(ValueError):
        PatientSeries("P", [0.0, 0.0], [50.0, 60.0])  # not increasing
    with pytest.raises(ValueError):
        PatientSeries("P", [0.0, 1.0], [50.0, -1.0])  # negative volume
    s = PatientSeries("P", [0.0, 1.0], [50.0, 60.0])
    assert s.volumes_scaled == pytest.approx([50e-5, 60e-5])


def test_predict_volumes_anchors_first_observation():
    pred = predict_volumes(ModelKind.GOMPERTZ, (0.011, 0.82), OBS, 5e-4)
    assert pred[0] == pytest.approx(5e-4)  # scaled units in and out
    assert np.all(np.diff(pred) > 0.0)


# ---------------------------------------------------------------------------
# Single-series fits
# ---------------------------------------------------------------------------


def test_fit_series_gompertz_noiseless_exact():
    fit = fit_series(_gompertz_series(), model="gompertz", seed=3, n_starts=8)
    assert fit.theta[0] == pytest.approx(0.011, rel=1e-10)
    assert fit.theta[1] == pytest.approx(0.82, rel=1e-10)
    assert fit.residual < 1e-8
    assert not fit.degenerate


def test_fit_series_vb_noiseless_exact():
    fit = fit_series(_vb_series(), model="von_bertalanffy", seed=3, n_starts=8)
    assert np.array(fit.theta) == pytest.approx([0.73, 0.047, 0.031], rel=1e-9)
    assert fit.residual < 1e-8
    # implied carrying capacity follows from the coefficient algebra
    assert fit.x_L_implied == pytest.approx((0.031 / 0.047) ** (1.0 / -0.27),
                                            rel=1e-6)


def test_fit_series_noisy_vb_recovery_medians():
    # 5% multiplicative noise, 20 noise realizations: median parameter errors
    # stay within 15%
    base = GrowthParams(mu=0.1, lam=0.0, delta=-0.5, x_L=1.0)
    truth = np.array([0.75, 0.05, 0.03])
    pv = bind_params(base, ("a", "p", "q"), tuple(truth))
    obs = np.concatenate(
        [[0.0], np.unique(np.round(np.geomspace(20.0, 1400.0, 20)))])
    clean = integrate_micro(5e-4, pv, obs)
    bounds = ((0.55, 0.95), (1e-3, 0.5), (1e-3, 0.12))
    s = np.sqrt(np.log1p(0.05**2))
    rels = []
    for sd in range(500, 520):
        rng = np.random.default_rng(sd)
        noisy = clean * np.exp(s * rng.standard_normal(obs.size) - 0.5 * s * s)
        ser = PatientSeries("N1", obs, noisy / MM3)
        fit = fit_series(ser, model="von_bertalanffy", bounds=bounds,
                         seed=sd, n_starts=12, compute_onset=False)
        rels.append(np.abs(np.array(fit.theta) / truth - 1.0))
    med = np.median(np.array(rels), axis=0)
    assert np.all(med < 0.15)


def test_fit_series_objective_not_beaten_by_random_points():
    ser = _gompertz_series()
    fit = fit_series(ser, model="gompertz", seed=3, n_starts=8)
    obs = ser.volumes_scaled
    lo = np.array([1e-4, 0.5 * obs.max()])
    hi = np.array([0.2, 20.0 * obs.max()])

    def objective(theta):
        pred = predict_volumes(ModelKind.GOMPERTZ, theta, ser.t_days, obs[0])
        return float(np.abs(pred - obs).sum()) + 1e-3 * float(np.abs(theta).sum())

    best = objective(np.array(fit.theta))
    rng = np.random.default_rng(99)
    pts = lo + (hi - lo) * rng.random((1000, 2))
    vals = np.array([objective(t) for t in pts])
    assert best <= vals.min() + 1e-12


def test_fit_series_translation_invariance():
    ser = _gompertz_series()
    shifted = PatientSeries(ser.patient_id, ser.t_days + 500.0, ser.volume_mm3)
    f0 = fit_series(ser, model="gompertz", seed=3, n_starts=8)
    f1 = fit_series(shifted, model="gompertz", seed=3, n_starts=8)
    assert np.abs(np.array(f1.theta) - np.array(f0.theta)).max() < 1e-12
    # the crossing-time bisection has its own ~1e-6 tolerance
    assert f1.onset_shift - f0.onset_shift == pytest.approx(500.0, abs=1e-5)


def test_fit_series_large_penalty_pins_lower_corner():
    ser = _gompertz_series()
    bounds = ((1e-4, 0.2), (0.1, 5.0))
    fit = fit_series(ser, model="gompertz", bounds=bounds, beta_reg=1e6,
                     seed=3, n_starts=8, compute_onset=False)
    assert fit.theta == pytest.approx((1e-4, 0.1))


def test_fit_series_degenerate_constant_volumes():
    ser = PatientSeries("F", [0.0, 10.0, 20.0], [70.0, 70.0, 70.0])
    fit = fit_series(ser, model="gompertz", seed=1, compute_onset=False)
    assert fit.degenerate


def test_fit_series_rejects_bad_bounds():
    ser = _vb_series()
    with pytest.raises(ValueError):
        fit_series(ser, model="von_bertalanffy",
                   bounds=((0.5, 1.2), (1e-3, 0.5), (1e-3, 0.12)))
    with pytest.raises(ValueError):
        fit_series(ser, model="nonsense")


# ---------------------------------------------------------------------------
# Onset alignment
# ---------------------------------------------------------------------------


def test_onset_matches_closed_form():
    alpha, x_L = 0.02, 1.0
    x0 = 50.0 * MM3
    times = np.array([0.0, 100.0, 220.0, 380.0, 600.0])
    ser = _gompertz_series(mu=alpha, x_L=x_L, x0=x0, times=times, pid="O1")
    fit = fit_series(ser, model="gompertz", seed=1, n_starts=8)
    c = 1.0 * MM3
    t_exact = -(2.0 / alpha) * np.log(np.log(x_L / c) / np.log(x_L / x0))
    assert fit.onset_shift == pytest.approx(t_exact, abs=1e-4)


def test_onset_zero_when_anchored_at_threshold():
    times = np.array([0.0, 100.0, 220.0, 380.0, 600.0])
    ser = _gompertz_series(mu=0.02, x_L=1.0, x0=1.0 * MM3, times=times)
    fit = fit_series(ser, model="gompertz", seed=1, n_starts=8)
    assert fit.onset_shift == pytest.approx(0.0, abs=1e-9)


def test_align_to_onset_crossing_is_exact():
    ser = _gompertz_series()
    fit = fit_series(ser, model="gompertz", seed=3, n_starts=8)
    t_c = align_to_onset(fit)
    x_at = integrate_micro(fit.anchor_x, fit.params,
                           [fit.anchor_t, t_c], max_step=1.0)[-1]
    assert x_at == pytest.approx(1.0 * MM3, rel=1e-5)
    a, x_L = fit.theta
    t_exact = -(2.0 / a) * np.log(np.log(x_L / MM3) / np.log(x_L / fit.anchor_x))
    assert t_c == pytest.approx(t_exact, abs=1e-4)


# ---------------------------------------------------------------------------
# Synthetic cohorts
# ---------------------------------------------------------------------------


@pytest.fixture
def table_rv() -> RandomVector:
    return RandomVector(
        names=("x_L", "a", "q"),
        dists=(BetaOn(0.705, 0.574, 0.4, 1.1),
               BetaOn(0.656, 0.193, 0.69, 0.8),
               BetaOn(0.112, 0.238, 0.007, 0.12)))


@pytest.fixture
def vb_cohort_base() -> GrowthParams:
    return GrowthParams(mu=0.01, lam=0.0, delta=-0.25, x_L=0.7)


def test_synth_cohort_noise_free_is_exact(table_rv, vb_cohort_base):
    spec = CohortSpec(rv=table_rv, base=vb_cohort_base, x0_mm3=50.0, seed=5)
    obs = np.array([0.0, 60.0, 250.0, 900.0, 3300.0])
    cohort = synth_cohort(spec, 3, obs)
    assert len(cohort) == 3
    assert cohort[0].patient_id == "S0001"
    rng = np.random.default_rng(np.random.SeedSequence(5))
    Z = table_rv.sample(rng, 3)
    for i, ser in enumerate(cohort):
        p = bind_params(vb_cohort_base, table_rv.names, Z[i])
        expected = integrate_micro(50.0 * MM3, p, obs) / MM3
        assert ser.volume_mm3 == pytest.approx(expected, rel=1e-12)


def test_synth_cohort_noise_is_mean_one(table_rv, vb_cohort_base):
    spec = CohortSpec(rv=table_rv, base=vb_cohort_base, x0_mm3=50.0, seed=5)
    obs = np.linspace(0.0, 500.0, 200)
    noisy = synth_cohort(spec, 1, obs, noise=0.1)[0]
    clean = synth_cohort(spec, 1, obs, noise=0.0)[0]
    ratio = noisy.volume_mm3 / clean.volume_mm3
    assert ratio.mean() == pytest.approx(1.0, abs=4 * 0.1 / np.sqrt(200))
    assert ratio.std() == pytest.approx(0.1, rel=0.3)


def test_synth_cohort_deterministic_by_seed(table_rv, vb_cohort_base):
    spec = CohortSpec(rv=table_rv, base=vb_cohort_base, seed=9)
    obs = np.array([0.0, 100.0, 400.0])
    a = synth_cohort(spec, 2, obs, noise=0.05)
    b = synth_cohort(spec, 2, obs, noise=0.05)
    for sa, sb in zip(a, b):
        assert np.array_equal(sa.volume_mm3, sb.volume_mm3)


# ---------------------------------------------------------------------------
# Beta MLE and the distribution test
# ---------------------------------------------------------------------------


def test_fit_beta_mle_matches_scipy_constrained_mle(rng):
    for c1, c2, lo, hi in [(0.705, 0.574, 0.4, 1.1), (5.0, 5.0, 0.0, 1.0)]:
        s = stats.beta(c1, c2, loc=lo, scale=hi - lo).rvs(
            10_000, random_state=rng)
        g1, g2 = fit_beta_mle(s, (lo, hi))
        r1, r2, _, _ = stats.beta.fit(s, floc=lo, fscale=hi - lo)
        assert g1 == pytest.approx(r1, rel=1e-6)
        assert g2 == pytest.approx(r2, rel=1e-6)
        assert g1 == pytest.approx(c1, rel=0.05)
        assert g2 == pytest.approx(c2, rel=0.05)


def test_fit_beta_mle_edge_touch_pulled_in(rng):
    inner = stats.uniform.rvs(size=30, random_state=rng) * 0.6 + 0.45
    samples = np.concatenate([[0.4, 1.1], inner])
    with pytest.warns(UserWarning):
        c1, c2 = fit_beta_mle(samples, (0.4, 1.1))
    assert np.isfinite(c1) and np.isfinite(c2) and c1 > 0 and c2 > 0


def test_fit_beta_mle_validation():
    with pytest.raises(ValueError):
        fit_beta_mle([0.5, 0.6], (0.0, 1.0))  # too few
    with pytest.raises(ValueError):
        fit_beta_mle([0.5, 0.6, 1.4], (0.0, 1.0))  # outside support


def test_ks_statistic_matches_scipy(rng):
    for n in (1, 5, 40, 200):
        s = stats.norm.rvs(size=n, random_state=rng)
        D, _ = ks_test(s, stats.norm.cdf)
        assert D == stats.kstest(s, stats.norm.cdf).statistic


def test_ks_equally_spaced_quantiles():
    # points at the midpoint quantiles realize the minimal distance 1/(2n)
    n = 8
    u = (np.arange(n) + 0.5) / n
    D, p = ks_test(u, lambda x: np.clip(x, 0.0, 1.0))
    assert D == pytest.approx(0.5 / n, abs=1e-15)
    assert p > 0.99


def test_ks_p_value_calibrated_under_null():
    ps = []
    for i in range(400):
        s = stats.uniform.rvs(size=50,
                              random_state=np.random.default_rng(1000 + i))
        ps.append(ks_test(s, lambda x: np.clip(x, 0.0, 1.0))[1])
    ps = np.array(ps)
    assert 0.45 < ps.mean() < 0.55
    assert 0.01 < (ps < 0.05).mean() < 0.10


def test_ks_detects_shifted_law(rng):
    s = stats.uniform.rvs(size=1000, random_state=rng) ** 1.4
    _, p = ks_test(s, lambda x: np.clip(x, 0.0, 1.0))
    assert p < 1e-6


def test_ks_invariant_under_monotone_transform(rng):
    s = stats.uniform.rvs(size=100, random_state=rng)
    D1, p1 = ks_test(s, lambda x: np.clip(x, 0.0, 1.0))
    D2, p2 = ks_test(np.exp(s), lambda y: np.clip(np.log(y), 0.0, 1.0))
    assert D1 == pytest.approx(D2, abs=1e-14)
    assert p1 == pytest.approx(p2, abs=1e-14)


# ---------------------------------------------------------------------------
# Cohort pipeline
# ---------------------------------------------------------------------------


def test_vb_p_bounds_contains_all_corner_products(rng):
    a_b, q_b, x_b = (0.69, 0.8), (0.007, 0.12), (0.4, 1.1)
    lo, hi = vb_p_bounds(a_b, q_b, x_b)
    a = rng.uniform(*a_b, 400)
    q = rng.uniform(*q_b, 400)
    xl = rng.uniform(*x_b, 400)
    p = q * xl ** (1.0 - a)
    assert np.all((p >= lo) & (p <= hi))


def test_fit_cohort_round_trip(table_rv, vb_cohort_base, tmp_path):
    spec = CohortSpec(rv=table_rv, base=vb_cohort_base, x0_mm3=50.0, seed=14)
    obs = np.array([0.0, 60.0, 120.0, 250.0, 500.0, 900.0, 1500.0, 2300.0,
                    3300.0, 4500.0, 6000.0, 7500.0, 9000.0])
    cohort = synth_cohort(spec, 3, obs)
    supports = {"x_L": (0.4, 1.1), "a": (0.69, 0.8), "q": (0.007, 0.12)}
    fit = fit_cohort(cohort, supports, n_starts=6, seed=0)
    assert [r.parameter for r in fit.rows] == ["alpha", "x_L", "a", "q"]
    row_a = fit.row("alpha")
    assert row_a.c1 == 1.0 and row_a.c2 == 1.0
    for name in ("x_L", "a", "q"):
        r = fit.row(name)
        assert (r.lo, r.hi) == supports[name]
        assert 0.0 < r.ks_pvalue <= 1.0
    assert len(fit.gompertz) == len(fit.vb) == 3
    for g, v, cons in zip(fit.gompertz, fit.vb, fit.xl_consistency):
        assert g.model is ModelKind.GOMPERTZ
        assert v.model is ModelKind.VON_BERTALANFFY
        assert v.residual < 1e-6
        assert cons < 5e-3  # the two stages agree on the carrying capacity

    report = tmp_path / "report.csv"
    write_cohort_report(report, fit)
    lines = report.read_text().splitlines()
    assert lines[0] == "parameter,lo,hi,c1,c2,ks_pvalue"
    assert len(lines) == 5


def test_fit_cohort_requires_supports(table_rv, vb_cohort_base):
    spec = CohortSpec(rv=table_rv, base=vb_cohort_base, seed=1)
    cohort = synth_cohort(spec, 3, np.array([0.0, 100.0, 500.0, 2000.0]))
    with pytest.raises(ValueError):
        fit_cohort(cohort, {"x_L": (0.4, 1.1)})


# ---------------------------------------------------------------------------
# File round trips
# ---------------------------------------------------------------------------


def test_patient_csv_round_trip(table_rv, vb_cohort_base, tmp_path):
    spec = CohortSpec(rv=table_rv, base=vb_cohort_base, seed=3)
    cohort = synth_cohort(spec, 2, np.array([0.0, 60.0, 250.0]), noise=0.02)
    path = tmp_path / "cohort.csv"
    write_patient_csv(path, cohort)
    back = read_patient_csv(path)
    assert len(back) == 2
    for a, b in zip(cohort, back):
        assert a.patient_id == b.patient_id
        assert np.array_equal(a.t_days, b.t_days)
        assert np.array_equal(a.volume_mm3, b.volume_mm3)
    # writing the parsed series again is byte-identical
    path2 = tmp_path / "again.csv"
    write_patient_csv(path2, back)
    assert path2.read_bytes() == path.read_bytes()


def test_patient_csv_header_and_errors(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("id,f,g\n")
    with pytest.raises(ValueError):
        read_patient_csv(bad)
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(ValueError):
        read_patient_csv(empty)


def test_fit_record_json_round_trip(tmp_path):
    fit = fit_series(_gompertz_series(), model="gompertz", seed=3, n_starts=8)
    rec = fit_record(fit, extra={"x_L_consistency": 0.01})
    assert rec["model"] == "gompertz"
    assert rec["theta_names"] == ["alpha", "x_L"]
    path = tmp_path / "fits.json"
    write_fit_records(path, [rec])
    loaded = json.loads(path.read_text())
    assert loaded == [rec]
