"""Closed-form therapy protocols against numeric optimization."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from tumorkin import AtTime, ControlSpec, MeanThreshold, Selective
from tumorkin.control import (
    apply_control,
    controlled_drift,
    cost,
    optimal_u_p1,
    optimal_u_p2,
)


def _numeric_best_u(x, spec, eps):
    r = minimize_scalar(
        lambda u: cost(x + eps * spec.selective(x) * u, u, spec, eps),
        bounds=spec.u_bounds, method="bounded", options={"xatol": 1e-12})
    return r.x


def test_spec_validation():
    with pytest.raises(ValueError):
        ControlSpec(p=3, kappa=1.0)
    with pytest.raises(ValueError):
        ControlSpec(p=2, kappa=0.0)
    with pytest.raises(ValueError):
        ControlSpec(p=2, kappa=1.0, x_d=-0.1)
    with pytest.raises(ValueError):
        ControlSpec(p=2, kappa=1.0, u_bounds=(1.0, 2.0))


def test_selective_values():
    assert Selective("unit") is Selective.UNIT
    assert Selective("sqrt_x") is Selective.SQRT_X
    x = np.array([0.0, 0.25, 4.0])
    assert Selective.UNIT(x) == pytest.approx([1.0, 1.0, 1.0])
    assert Selective.SQRT_X(x) == pytest.approx([0.0, 0.5, 2.0])


@pytest.mark.parametrize("selective", [Selective.UNIT, Selective.SQRT_X])
def test_optimal_u_p2_minimizes_cost(selective):
    spec = ControlSpec(p=2, kappa=0.4, x_d=0.18, selective=selective)
    eps = 0.07
    for x in [0.02, 0.18, 0.5, 1.3]:
        u = optimal_u_p2(x, spec, eps)
        assert u == pytest.approx(_numeric_best_u(x, spec, eps), abs=1e-6)


def test_optimal_u_p2_closed_form():
    spec = ControlSpec(p=2, kappa=0.4, x_d=0.18)
    eps = 0.1
    x = np.array([0.05, 0.18, 0.9])
    nu = eps * spec.kappa
    expected = -eps / (eps * eps + nu) * (x - 0.18)
    assert optimal_u_p2(x, spec, eps) == pytest.approx(expected, rel=1e-14)
    with pytest.raises(ValueError):
        optimal_u_p2(0.5, ControlSpec(p=1, kappa=1.0), eps)


def test_optimal_u_p1_never_beaten_on_grid():
    spec = ControlSpec(p=1, kappa=0.4, x_d=0.18)
    eps = 0.07
    ug = np.linspace(-50.0, 50.0, 400001)
    for x in [0.05, 0.18, 0.21, 0.6, 1.5]:
        u = optimal_u_p1(x, spec, eps)
        c_best = cost(x + eps * u, u, spec, eps)
        c_grid = cost(x + eps * ug, ug, spec, eps).min()
        assert c_best <= c_grid + 1e-12


def test_optimal_u_p1_dead_zone():
    spec = ControlSpec(p=1, kappa=0.4, x_d=0.18)
    eps = 0.07
    threshold = eps * spec.kappa / (2.0 * eps)
    inside = 0.18 + 0.5 * threshold
    outside = 0.18 + 2.0 * threshold
    assert optimal_u_p1(inside, spec, eps) == 0.0
    assert optimal_u_p1(outside, spec, eps) != 0.0


def test_optimal_u_p1_sqrt_inactive_at_origin():
    spec = ControlSpec(p=1, kappa=0.4, x_d=0.18, selective=Selective.SQRT_X)
    assert optimal_u_p1(0.0, spec, 0.07) == 0.0


@given(x=st.floats(1e-3, 3.0), kappa=st.floats(0.01, 5.0),
       eps=st.floats(1e-3, 0.5))
@settings(max_examples=150, deadline=None)
def test_apply_control_pulls_toward_target(x, kappa, eps):
    spec = ControlSpec(p=2, kappa=kappa, x_d=0.18)
    x2 = apply_control(x, spec, eps)
    lo, hi = sorted((x, spec.x_d))
    assert lo - 1e-12 <= x2 <= hi + 1e-12


def test_apply_control_p1_respects_bounds():
    spec = ControlSpec(p=1, kappa=1e-6, x_d=0.18, u_bounds=(-0.5, 0.5))
    eps = 0.1
    x = 5.0
    u = optimal_u_p1(x, spec, eps)
    assert u == -0.5  # clamped
    assert apply_control(x, spec, eps) == pytest.approx(x + eps * u)


def test_controlled_drift_formula():
    spec = ControlSpec(p=2, kappa=0.5, x_d=0.18, selective=Selective.SQRT_X)
    x = np.array([0.0, 0.18, 1.0])
    assert controlled_drift(x, spec) == pytest.approx(x * (x - 0.18) / 0.5)
    with pytest.raises(ValueError):
        controlled_drift(x, ControlSpec(p=1, kappa=0.5))


def test_cost_formula():
    spec = ControlSpec(p=2, kappa=0.4, x_d=0.18)
    assert cost(0.3, 2.0, spec, 0.1) == pytest.approx((0.3 - 0.18) ** 2
                                                      + 0.04 * 4.0)
    spec1 = ControlSpec(p=1, kappa=0.4, x_d=0.18)
    assert cost(0.3, -2.0, spec1, 0.1) == pytest.approx((0.3 - 0.18) ** 2
                                                        + 0.04 * 2.0)


def test_activation_rules():
    assert AtTime(5.0).t == 5.0
    assert MeanThreshold(0.4).xbar == 0.4
