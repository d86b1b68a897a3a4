from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blowuplab import harness
from blowuplab.exponents import Form, LifespanPrediction, lifespan_catalog
from blowuplab.harness import (NoBlowup, PowerLawFit, SweepAborted, SweepPlan, SweepResult, SweepRow,
                               GridPolicy, compare_to_theory, energy_quadrature_time, fit_powerlaw,
                               ode_oracle, predict, run_sweep, sweep_workers)
from blowuplab.solver import BlowupReport, BlowupStatus, ProblemConfig, RadialProfile

# T for u'' = u^2, u(0)=1, u'(0)=0: sqrt(3/2)/3 * B(1/6, 1/2), checked by mpmath quadrature to 1e-16.
T_ODE_REF = 2.9744774254021756


def synthetic(eps, T):
    return SweepResult([SweepRow(e, t, t * 0.99, t * 1.01, BlowupStatus.BLEW_UP) for e, t in zip(eps, T)],
                       theory_exponent=1.0)


def test_energy_quadrature_reference():
    assert energy_quadrature_time(1.0, 0.0, 2.0) == pytest.approx(T_ODE_REF, rel=1e-12)


def test_ode_oracle_reference():
    assert ode_oracle(1.0, 0.0, 0.0, 2.0, 2.0) == pytest.approx(T_ODE_REF, rel=1e-6)


@pytest.mark.parametrize("u0", [0.5, 1.0, 2.0, 4.0])
def test_ode_oracle_scaling_symmetry(u0):
    p = 2.0
    T = ode_oracle(u0, 0.0, 0.0, 2.0, p)
    assert T == pytest.approx(u0 ** (-(p - 1) / 2) * T_ODE_REF, rel=1e-4)


def test_ode_oracle_damping_delays_blowup():
    assert ode_oracle(1.0, 0.0, 5.0, 1.05, 2.0) > ode_oracle(1.0, 0.0, 0.0, 2.0, 2.0)


def test_ode_oracle_initial_velocity_speeds_up():
    assert ode_oracle(1.0, 1.0, 0.0, 2.0, 3.0) < ode_oracle(1.0, 0.0, 0.0, 2.0, 3.0)
    assert ode_oracle(1.0, 1.0, 0.0, 2.0, 3.0) == pytest.approx(energy_quadrature_time(1.0, 1.0, 3.0),
                                                                rel=1e-6)


def test_ode_oracle_reports_no_blowup():
    with pytest.raises(NoBlowup):
        ode_oracle(1e-3, 0.0, 0.0, 2.0, 2.0, horizon=5.0)
    with pytest.raises(ValueError):
        ode_oracle(0.0, 0.0, 0.0, 2.0, 2.0)


BASE = ProblemConfig(n=1, p=3, mu=1, beta=2, f_profile=RadialProfile(0.25), g_profile=RadialProfile(1.0))


@pytest.mark.parametrize("eps,msg", [
    ([0.4, 0.3, 0.2], "at least 4"),
    ([0.4, 0.3, 0.3, 0.2], "duplicate"),
    ([0.4, 0.5, 0.3, 0.2], "decreasing"),
    ([0.4, 0.3, 0.2, -0.1], "positive"),
])
def test_plan_validation(eps, msg):
    with pytest.raises(ValueError, match=msg):
        SweepPlan(BASE, eps)


def test_plan_defaults_to_catalog_prediction():
    plan = SweepPlan(BASE, [0.4, 0.3, 0.2, 0.1])
    assert plan.prediction.formula_id == "scattering-1d"
    assert plan.grid_policy.exponent == 1.0


def test_plan_without_power_law_needs_policy():
    cfg = ProblemConfig(n=3, p=2.5, mu=1, beta=2)
    assert predict(cfg).form is Form.UNKNOWN
    with pytest.raises(ValueError, match="grid_policy"):
        SweepPlan(cfg, [0.4, 0.3, 0.2, 0.1])


def test_grid_policy_scaling():
    pol = GridPolicy(exponent=1.0)
    g = pol.grid_for(0.1, BASE)
    assert g.t_max == pytest.approx(400.0)
    assert g.dr == 0.01
    short = pol.grid_for(10.0, BASE)
    assert short.dr == pytest.approx(1.0 / 4000)
    assert short.t_max == pytest.approx(4.0)


def test_fit_exact_power_law():
    eps = np.array([0.4, 0.3, 0.2, 0.1, 0.05])
    fit = fit_powerlaw(synthetic(eps, 5 / eps))
    assert fit.slope == pytest.approx(-1.0, abs=1e-12)
    assert fit.r_squared == 1.0
    assert fit.intercept == pytest.approx(math.log(5), abs=1e-12)
    assert fit.theory_exponent == -1.0 and fit.relative_deviation == pytest.approx(0, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.2, 3.0), st.floats(0.1, 100.0))
def test_fit_recovers_exact_slopes(k, C):
    eps = np.geomspace(0.5, 0.01, 6)
    fit = fit_powerlaw(synthetic(eps, C * eps ** (-k)), theory_exponent=k)
    assert fit.slope == pytest.approx(-k, abs=1e-12)
    assert fit.r_squared == 1.0


def test_fit_with_one_percent_noise():
    rng = np.random.default_rng(12345)
    eps = np.geomspace(0.5, 0.01, 8)
    T = 5 / eps * (1 + 0.01 * rng.standard_normal(eps.size))
    assert fit_powerlaw(synthetic(eps, T)).slope == pytest.approx(-1.0, abs=0.05)


def test_fit_constant_T_is_flagged():
    eps = np.array([0.4, 0.3, 0.2, 0.1])
    fit = fit_powerlaw(synthetic(eps, np.full(4, 3.0)))
    assert fit.slope == pytest.approx(0.0, abs=1e-12)
    assert fit.relative_deviation == pytest.approx(1.0)
    assert fit.flagged()


def test_fit_uses_only_blown_rows():
    rows = synthetic([0.4, 0.3, 0.2, 0.1], [1, 2, 3, 4]).rows
    rows.append(SweepRow(0.05, math.nan, math.nan, math.nan, BlowupStatus.REACHED_TMAX))
    fit_powerlaw(SweepResult(rows, 1.0))
    with pytest.raises(ValueError, match="at least 4"):
        fit_powerlaw(SweepResult(rows[1:], 1.0))


def test_sweep_result_order_properties():
    res = synthetic([0.4, 0.3, 0.2, 0.1], [1, 2, 3, 4])
    assert res.all_blew_up and res.monotone()
    assert not synthetic([0.4, 0.3, 0.2, 0.1], [1, 3, 2, 4]).monotone()


@pytest.mark.parametrize("n,p,beta,nonzero,k", [
    (1, 3.0, 2.0, True, 1.0),
    (2, 1.8, 2.0, True, 2 / 3),
    (3, 2.0, 2.0, False, 2.0),
])
def test_compare_to_theory_examples(n, p, beta, nonzero, k):
    pred = lifespan_catalog(n, p, beta, 1.0, nonzero_integral=nonzero)
    assert pred.exponent == pytest.approx(k)
    fit = PowerLawFit(-0.9 * k, 0.0, 0.99, -k, 0.1)
    cmp = compare_to_theory(fit, pred, n, p)
    assert cmp.consistent and cmp.theory == pytest.approx(-k)
    assert "upper-bound" in cmp.text


def test_compare_to_theory_names_binding_exponent():
    pred = lifespan_catalog(2, 1.8, 2.0, 1.0, nonzero_integral=True)
    cmp = compare_to_theory(PowerLawFit(-0.6, 0, 1, -2 / 3, 0.1), pred, 2, 1.8)
    assert cmp.binding == "TwoDLowP"
    assert "binding" in cmp.text


def test_compare_flags_steep_slopes_and_rejects_unknown_forms():
    pred = lifespan_catalog(1, 3.0, 2.0, 1.0, nonzero_integral=True)
    assert not compare_to_theory(PowerLawFit(-1.5, 0, 1, -1, 0.5), pred).consistent
    with pytest.raises(ValueError, match="PowerLaw"):
        compare_to_theory(PowerLawFit(-1, 0, 1, -1, 0), LifespanPrediction("x", Form.UNKNOWN, math.nan))


def test_threads_env(monkeypatch):
    monkeypatch.setenv(harness.THREADS_ENV, "3")
    assert sweep_workers() == 3
    monkeypatch.setenv(harness.THREADS_ENV, "zero")
    with pytest.raises(ValueError, match=harness.THREADS_ENV):
        sweep_workers()
    monkeypatch.delenv(harness.THREADS_ENV)
    assert sweep_workers() >= 1


CHEAP = ProblemConfig(n=1, p=3, mu=1, beta=2, f_profile=RadialProfile(1.0), g_profile=RadialProfile(1.0))
CHEAP_POLICY = GridPolicy(exponent=1.0, C_pred=2.0, dr_max=0.02)


def cheap_plan():
    return SweepPlan(CHEAP, [1.0, 0.8, 0.6, 0.5], grid_policy=CHEAP_POLICY)


def test_sweep_is_deterministic_and_parallel_safe(monkeypatch):
    monkeypatch.setenv(harness.THREADS_ENV, "1")
    first = run_sweep(cheap_plan())
    again = run_sweep(cheap_plan())
    monkeypatch.setenv(harness.THREADS_ENV, "2")
    pooled = run_sweep(cheap_plan())
    assert first.all_blew_up and first.monotone()
    assert [r.eps for r in first.rows] == [1.0, 0.8, 0.6, 0.5]
    for other in (again, pooled):
        assert [r.as_tuple() for r in other.rows] == [r.as_tuple() for r in first.rows]


def test_sweep_retries_once_then_records(monkeypatch):
    monkeypatch.setenv(harness.THREADS_ENV, "1")
    calls = []

    def fake(config, grid):
        calls.append(grid.t_max)
        return BlowupReport(BlowupStatus.REACHED_TMAX)
    monkeypatch.setattr(harness, "_one_run", fake)
    res = run_sweep(cheap_plan())
    assert len(calls) == 8
    assert calls[1] == pytest.approx(2 * calls[0])
    assert not res.all_blew_up


def test_sweep_aborts_on_instability(monkeypatch):
    monkeypatch.setenv(harness.THREADS_ENV, "1")
    monkeypatch.setattr(harness, "_one_run", lambda c, g: BlowupReport(BlowupStatus.UNSTABLE))
    with pytest.raises(SweepAborted, match="refine the grid"):
        run_sweep(cheap_plan())
