"""Epsilon sweeps, the ODE blow-up oracle and power-law fitting."""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate

from .exponents import Form, LifespanPrediction, Variant, lifespan_catalog, lifespan_exponent
from .functionals import profile_integral
from .solver import (THRESHOLDS, BlowupReport, BlowupStatus, GridSpec, ProblemConfig, default_cfl,
                     estimate_blowup_time, run)

logger = logging.getLogger(__name__)

THREADS_ENV = "BLOWUPLAB_THREADS"
SWEEP_COLUMNS = ("eps", "T_est", "T_lo", "T_hi", "status")
FIT_COLUMNS = ("slope", "intercept", "r_squared", "theory_exponent", "relative_deviation")


class NoBlowup(RuntimeError):
    """The ODE solution stayed bounded up to the integration horizon."""


class SweepAborted(RuntimeError):
    """A run inside a sweep went numerically unstable."""


# ---------------------------------------------------------------- ODE oracle

def energy_quadrature_time(u0: float, u1: float, p: float) -> float:
    """Blow-up time of u'' = u^p from the conserved energy (undamped case only).

    Substituting u = u0 + s^2 removes the inverse square-root singularity at
    u0 when u1 = 0.
    """
    if not (u0 > 0 and u1 >= 0 and p > 1):
        raise ValueError(f"need u0 > 0, u1 >= 0, p > 1; got u0={u0}, u1={u1}, p={p}")
    c = 2.0 / (p + 1.0)

    def integrand(s):
        # (u^{p+1} - u0^{p+1}) written to avoid cancellation for small s
        diff = u0 ** (p + 1.0) * math.expm1((p + 1.0) * math.log1p(s * s / u0))
        return 2.0 * s / math.sqrt(u1 * u1 + c * diff) if s > 0 else (
            0.0 if u1 > 0 else 2.0 / math.sqrt(c * (p + 1.0) * u0 ** p))

    head, _ = integrate.quad(integrand, 0.0, 1.0, epsabs=0.0, epsrel=1e-13, limit=200)
    tail, _ = integrate.quad(integrand, 1.0, math.inf, epsabs=0.0, epsrel=1e-13, limit=200)
    return head + tail


def ode_oracle(u0: float, u1: float, mu: float, beta: float, p: float,
               horizon: float = 1e4, samples: int = 200) -> float:
    """Blow-up time of u'' + mu (1+t)^{-beta} u' = u^p.

    Integrated with DOP853 until u = 1e6; the tail is resampled from the dense
    output and passed through the same extrapolation as the PDE solver. For
    mu = 0 the result is checked against :func:`energy_quadrature_time`.
    """
    if not (u0 > 0 and u1 >= 0):
        raise ValueError(f"need u0 > 0 and u1 >= 0, got u0={u0}, u1={u1}")
    if mu < 0 or not p > 1:
        raise ValueError(f"need mu >= 0 and p > 1, got mu={mu}, p={p}")
    top = THRESHOLDS[-1]

    def rhs(t, y):
        return [y[1], abs(y[0]) ** p - mu * (1.0 + t) ** (-beta) * y[1]]

    def hit_top(t, y):
        return y[0] - top
    hit_top.terminal = True
    hit_top.direction = 1

    sol = integrate.solve_ivp(rhs, (0.0, horizon), [u0, u1], method="DOP853", rtol=1e-12,
                              atol=1e-14, dense_output=True, events=hit_top)
    if not sol.t_events[0].size:
        raise NoBlowup(f"u stays below {top:g} up to t = {horizon:g} "
                       f"(u0={u0}, u1={u1}, mu={mu}, beta={beta}, p={p})")
    t_end = float(sol.t_events[0][0])
    t_start = float(np.interp(THRESHOLDS[0], sol.y[0], sol.t)) if sol.y[0][0] < THRESHOLDS[0] else 0.0
    coarse = [(float(t), float(u)) for t, u in zip(sol.t, sol.y[0]) if t < t_start]
    fine_t = np.linspace(t_start, t_end, samples)
    fine = [(float(t), float(sol.sol(t)[0])) for t in fine_t]
    report = estimate_blowup_time(coarse + fine, p)
    if report.status is not BlowupStatus.BLEW_UP:
        raise NoBlowup(f"could not extrapolate a blow-up time (status {report.status.value})")
    if mu == 0:
        ref = energy_quadrature_time(u0, u1, p)
        if abs(report.T_est - ref) > 1e-3 * ref:
            logger.warning("ODE oracle %.10g disagrees with energy quadrature %.10g", report.T_est, ref)
    return report.T_est


# -------------------------------------------------------------------- sweeps

@dataclass(frozen=True)
class GridPolicy:
    """Resolution and horizon scaled with the predicted lifespan C_pred * eps^{-k}."""

    exponent: float
    C_pred: float = 10.0
    dr_max: float = 0.01
    points_per_lifespan: float = 4000.0
    horizon_factor: float = 4.0
    cfl: float | None = None

    def predicted(self, eps: float) -> float:
        return self.C_pred * eps ** (-self.exponent)

    def grid_for(self, eps: float, config: ProblemConfig, t_max: float | None = None) -> GridSpec:
        T = self.predicted(eps)
        dr = min(self.dr_max, T / self.points_per_lifespan)
        t_max = self.horizon_factor * T if t_max is None else t_max
        cfl = default_cfl(config.n) if self.cfl is None else self.cfl
        return GridSpec.sized_for(dr, t_max, config.R, cfl)


def predict(config: ProblemConfig) -> LifespanPrediction:
    nz = profile_integral(config.g_profile, config.n) > 0
    return lifespan_catalog(config.n, config.p, config.beta, config.mu, nonzero_integral=nz)


@dataclass
class SweepPlan:
    base_config: ProblemConfig
    eps_values: list[float]
    grid_policy: GridPolicy | None = None
    prediction: LifespanPrediction | None = None

    def __post_init__(self):
        eps = [float(e) for e in self.eps_values]
        if len(eps) < 4:
            raise ValueError(f"a sweep needs at least 4 eps values for fitting, got {len(eps)}")
        if len(set(eps)) != len(eps):
            raise ValueError("duplicate eps values in the sweep")
        if any(e <= 0 for e in eps):
            raise ValueError("eps values must be positive")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("eps values must be strictly decreasing")
        self.eps_values = eps
        if self.prediction is None:
            self.prediction = predict(self.base_config)
        if self.grid_policy is None:
            if self.prediction.form is not Form.POWER_LAW:
                raise ValueError(f"no power-law prediction for this configuration "
                                 f"({self.prediction.formula_id}); pass a grid_policy")
            self.grid_policy = GridPolicy(exponent=self.prediction.exponent)


@dataclass(frozen=True)
class SweepRow:
    eps: float
    T_est: float
    T_lo: float
    T_hi: float
    status: BlowupStatus

    def as_tuple(self):
        return (self.eps, self.T_est, self.T_lo, self.T_hi, self.status.value)


@dataclass
class SweepResult:
    rows: list[SweepRow] = field(default_factory=list)
    theory_exponent: float = math.nan

    @property
    def all_blew_up(self) -> bool:
        return bool(self.rows) and all(r.status is BlowupStatus.BLEW_UP for r in self.rows)

    def blown(self) -> list[SweepRow]:
        return [r for r in self.rows if r.status is BlowupStatus.BLEW_UP]

    def monotone(self) -> bool:
        """T_est strictly grows as eps shrinks (rows are in decreasing eps)."""
        T = [r.T_est for r in self.blown()]
        return all(b > a for a, b in zip(T, T[1:]))


def _one_run(config: ProblemConfig, grid: GridSpec) -> BlowupReport:
    _, report = run(config, grid)
    return report


def _run_eps(args) -> tuple[BlowupReport, GridSpec]:
    config, policy, eps = args
    cfg = replace(config, eps=eps)
    grid = policy.grid_for(eps, cfg)
    report = _one_run(cfg, grid)
    if report.status is BlowupStatus.REACHED_TMAX:
        grid = policy.grid_for(eps, cfg, t_max=2.0 * grid.t_max)
        logger.info("eps=%g reached t_max; retrying with t_max=%g", eps, grid.t_max)
        report = _one_run(cfg, grid)
    return report, grid


def sweep_workers() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            value = int(raw)
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
        if value < 1:
            raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
        return value
    return os.cpu_count() or 1


def run_sweep(plan: SweepPlan) -> SweepResult:
    jobs = [(plan.base_config, plan.grid_policy, eps) for eps in plan.eps_values]
    workers = min(sweep_workers(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_eps, jobs))  # map preserves plan order
    else:
        outcomes = [_run_eps(job) for job in jobs]
    result = SweepResult(theory_exponent=plan.grid_policy.exponent)
    for eps, (report, grid) in zip(plan.eps_values, outcomes):
        if report.status is BlowupStatus.UNSTABLE:
            raise SweepAborted(f"run at eps={eps} went unstable (dr={grid.dr}, cfl={grid.cfl}); "
                               f"refine the grid, e.g. halve dr or lower cfl")
        result.rows.append(SweepRow(eps, report.T_est, report.T_lo, report.T_hi, report.status))
    return result


# ------------------------------------------------------------------- fitting

@dataclass(frozen=True)
class PowerLawFit:
    slope: float
    intercept: float
    r_squared: float
    theory_exponent: float
    relative_deviation: float

    def as_tuple(self):
        return tuple(getattr(self, c) for c in FIT_COLUMNS)

    def flagged(self, tol: float = 0.25) -> bool:
        return not self.relative_deviation <= tol


def fit_powerlaw(result: SweepResult, theory_exponent: float | None = None) -> PowerLawFit:
    """Least squares of log T_est against log eps over the rows that blew up.

    ``theory_exponent`` is the positive lifespan exponent k; the fit reports
    the target slope -k.
    """
    rows = result.blown()
    if len(rows) < 4:
        raise ValueError(f"power-law fit needs at least 4 BlewUp rows, got {len(rows)}")
    k = result.theory_exponent if theory_exponent is None else theory_exponent
    x = np.log([r.eps for r in rows])
    y = np.log([r.T_est for r in rows])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_res = float(np.dot(resid, resid))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_res <= 1e-30 * max(ss_tot, 1.0) else (1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0)
    target = -k
    dev = abs(slope - target) / abs(target) if target else math.inf
    return PowerLawFit(float(slope), float(intercept), r2, target, dev)


@dataclass
class Comparison:
    fit: PowerLawFit
    theory: float
    consistent: bool
    binding: str
    text: str

    def csv_rows(self):
        return [("slope", self.fit.slope), ("theory_exponent", self.fit.theory_exponent),
                ("relative_deviation", self.fit.relative_deviation),
                ("consistent", int(self.consistent)), ("binding", self.binding)]


def _candidate_exponents(n: int, p: float, nonzero: bool) -> dict[str, float]:
    out = {}
    for variant in Variant:
        if variant is not Variant.GENERAL and not nonzero:
            continue
        try:
            out[variant.value] = lifespan_exponent(n, p, variant)
        except ValueError:
            continue
    return out


def compare_to_theory(fit: PowerLawFit, prediction: LifespanPrediction, n: int | None = None,
                      p: float | None = None, tol: float = 0.25) -> Comparison:
    """Interpret a fitted slope against an upper-bound lifespan exponent.

    The estimate bounds T from above, so a fitted |slope| below the exponent
    is consistent; one beyond exponent * (1 + tol) is a red flag.
    """
    if prediction.form is not Form.POWER_LAW:
        raise ValueError(f"prediction {prediction.formula_id} has form {prediction.form.value}, "
                         f"not PowerLaw")
    k = prediction.exponent
    consistent = abs(fit.slope) <= k * (1.0 + tol)
    lines = [f"fitted slope        {fit.slope:.6g} (r^2 = {fit.r_squared:.6g})",
             f"theory exponent     {-k:.6g} [{prediction.formula_id}]",
             f"relative deviation  {abs(fit.slope + k) / k:.6g}"]
    binding = prediction.formula_id
    if n is not None and p is not None:
        cands = _candidate_exponents(n, p, prediction.requires_nonzero_integral)
        if cands:
            binding = min(cands, key=cands.get)
            lines.append("applicable exponents " + ", ".join(f"{v}={e:.6g}" for v, e in cands.items())
                         + f"; binding (smallest): {binding}")
    lines.append("upper-bound semantics: |slope| <= exponent is consistent; "
                 + ("ok" if consistent else f"RED FLAG, |slope| exceeds exponent*(1+{tol:g})"))
    return Comparison(fit, -k, consistent, binding, "\n".join(lines))
