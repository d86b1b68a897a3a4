"""Spatial functionals of the numerical solution and checks of the blow-up inequalities.

F0(t) = int u dx, F1(t) = int u psi_1 dx and Ip(t) = int |u|^p dx are
computed with radial trapezoid weights omega_{n-1} r^{n-1} dr; for n = 1
this is the trapezoid rule on the even extension to the whole line.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
from scipy import integrate

from .multiplier import (MultiplierParams, ball_volume, lemma1_exponent, lemma1_ratio, log_phi1,
                         m_bounds, phi1, sphere_measure)

if TYPE_CHECKING:
    from .solver import GridSpec, ProblemConfig, RadialProfile, SolutionState

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ("t", "F0", "F0_rate", "F1", "Ip", "m", "umax")
INEQUALITIES = ("I12", "I15", "I18", "I19a", "I19b", "I81")


def radial_weights(grid: "GridSpec", n: int) -> np.ndarray:
    r = grid.r
    w = sphere_measure(n) * r ** (n - 1) * grid.dr
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def compute_F0(state: "SolutionState", grid: "GridSpec", n: int) -> float:
    return float(np.dot(radial_weights(grid, n), state.u_curr))


def compute_F1(state: "SolutionState", grid: "GridSpec", n: int) -> float:
    u = state.u_curr
    nz = np.nonzero(u)[0]
    if nz.size == 0:
        return 0.0
    k = nz[-1] + 1
    w = radial_weights(grid, n)[:k]
    psi = np.exp(log_phi1(grid.r[:k], n) - state.t)
    return float(np.dot(w, u[:k] * psi))


def compute_Ip(state: "SolutionState", grid: "GridSpec", n: int, p: float) -> float:
    return float(np.dot(radial_weights(grid, n), np.abs(state.u_curr) ** p))


def identity_multiplier(t, mu: float, beta: float):
    """exp(mu (1+t)^{1-beta}/(1-beta)), or (1+t)^mu at beta = 1.

    Either choice turns F0'' + mu (1+t)^{-beta} F0' into (m F0')' / m; only
    for beta > 1 is it bounded between m(0) and 1.
    """
    t = np.asarray(t, dtype=float)
    if beta == 1:
        return (1.0 + t) ** mu
    return np.exp(mu * (1.0 + t) ** (1.0 - beta) / (1.0 - beta))


@dataclass
class FunctionalTrace:
    t: np.ndarray
    F0: np.ndarray
    F0_rate: np.ndarray
    F1: np.ndarray
    Ip: np.ndarray
    m: np.ndarray
    umax: np.ndarray
    config: "ProblemConfig | None" = None
    grid: "GridSpec | None" = None

    def __len__(self) -> int:
        return self.t.size

    def rows(self):
        return np.column_stack([getattr(self, c) for c in TRACE_COLUMNS])

    @classmethod
    def from_rows(cls, rows, config=None, grid=None) -> "FunctionalTrace":
        arr = np.asarray(rows, dtype=float).reshape(-1, len(TRACE_COLUMNS))
        return cls(*(arr[:, i].copy() for i in range(len(TRACE_COLUMNS))), config=config, grid=grid)


class TraceWriter:
    """Accumulates trace rows during a run."""

    def __init__(self, config: "ProblemConfig", grid: "GridSpec"):
        self.config = config
        self.grid = grid
        self.weights = radial_weights(grid, config.n)
        self.log_phi = log_phi1(grid.r, config.n)
        self.rows: list[tuple] = []

    @property
    def last_t(self) -> float:
        return self.rows[-1][0] if self.rows else -math.inf

    def record(self, state: "SolutionState", velocity: np.ndarray) -> None:
        cfg, w = self.config, self.weights
        u = state.u_curr
        nz = np.nonzero(u)[0]
        k = nz[-1] + 1 if nz.size else 1
        uk, wk = u[:k], w[:k]
        F0 = float(np.dot(wk, uk))
        F0_rate = float(np.dot(w, velocity))
        F1 = float(np.dot(wk, uk * np.exp(self.log_phi[:k] - state.t)))
        Ip = float(np.dot(wk, np.abs(uk) ** cfg.p))
        m_t = float(identity_multiplier(state.t, cfg.mu, cfg.beta))
        self.rows.append((state.t, F0, F0_rate, F1, Ip, m_t, float(np.max(np.abs(uk)))))

    def finish(self) -> FunctionalTrace:
        return FunctionalTrace.from_rows(self.rows, config=self.config, grid=self.grid)


def check_identity_11(trace: FunctionalTrace, params: MultiplierParams | None = None):
    """Residual d/dt[m F0'] - m Ip at interior trace times.

    Returns ``(t, residual, max_abs)``. The derivative is the second-order
    finite difference on the (possibly non-uniform) trace times.
    """
    if len(trace) < 3:
        raise ValueError(f"need at least 3 trace rows, got {len(trace)}")
    if params is None:
        mt = trace.m
    else:
        mt = identity_multiplier(trace.t, params.mu, params.beta)
    d = np.gradient(mt * trace.F0_rate, trace.t)
    # without the source term the identity is (m F0')' = 0
    source = trace.config is None or trace.config.source
    res = (d - mt * trace.Ip)[1:-1] if source else d[1:-1]
    return trace.t[1:-1], res, float(np.max(np.abs(res))) if res.size else 0.0


@dataclass
class InequalityReport:
    inequality_id: str
    t: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    tol: np.ndarray
    constants_used: dict[str, tuple[float, str]] = field(default_factory=dict)
    warning: str | None = None

    @property
    def slack(self) -> np.ndarray:
        return self.lhs - self.rhs

    @property
    def passed(self) -> bool | None:
        if self.warning is not None:
            return None
        return bool(np.all(self.slack >= -self.tol))

    @property
    def min_margin(self) -> float:
        return float(np.min(self.slack + self.tol)) if self.t.size else math.inf

    def rows(self):
        return np.column_stack([self.t, self.lhs, self.rhs, self.slack])


def profile_integral(profile: "RadialProfile", n: int, weight=None) -> float:
    """int_{R^n} profile(|x|) weight(|x|) dx by adaptive quadrature on the support."""
    if profile.amplitude == 0:
        return 0.0
    a = profile.support_radius

    def f(r):
        val = float(profile(r)) * r ** (n - 1)
        return val * float(weight(r)) if weight is not None else val

    val, _ = integrate.quad(f, 0.0, a, epsabs=0.0, epsrel=1e-12, limit=200)
    return sphere_measure(n) * val


def _cumtrapz(y, t):
    return integrate.cumulative_trapezoid(y, t, initial=0.0)


def _tolerance(lhs, rhs, dt: float) -> np.ndarray:
    scale = np.maximum.accumulate(np.maximum(np.abs(lhs), np.abs(rhs)))
    return np.maximum(10.0 * dt * dt, 1e-10 * scale)


def lemma1_constant(n: int, p: float, R: float, times) -> tuple[float, float]:
    """(C1, sup ratio) with C1 = (sup ratio)^{-(p-1)}, sup taken over ``times``."""
    times = np.unique(np.asarray(times, dtype=float))
    if times.size > 200:
        idx = np.unique(np.linspace(0, times.size - 1, 200).round().astype(int))
        times = times[idx]
    sup = max(lemma1_ratio(float(t), n, p, R) for t in times)
    return sup ** (-(p - 1.0)), sup


def check_lower_bounds(trace: FunctionalTrace, config: "ProblemConfig",
                       which: tuple[str, ...] | None = None) -> list[InequalityReport]:
    """Evaluate the lower-bound chain along a measured trace.

    ``which`` defaults to every inequality whose hypotheses hold; requesting
    I81 with int g = 0 raises ValueError.
    """
    n, p, eps, R = config.n, config.p, config.eps, config.R
    params = MultiplierParams(config.mu, config.beta)
    m0, _ = m_bounds(params)
    int_f = profile_integral(config.f_profile, n)
    int_g = profile_integral(config.g_profile, n)
    if which is None:
        which = tuple(i for i in INEQUALITIES if i != "I81" or int_g > 0)
    unknown = set(which) - set(INEQUALITIES)
    if unknown:
        raise ValueError(f"unknown inequality ids {sorted(unknown)}")
    if "I81" in which and not int_g > 0:
        raise ValueError("I81 requires int g dx != 0 (got int g = 0)")

    dt = trace.grid.dt if trace.grid is not None else 0.0
    t = trace.t
    warning = None
    if not (trace.F0[0] > 0 and trace.F0_rate[0] >= -10 * dt * dt) or int_f == 0:
        warning = ("data violate F0(0) > 0, F0'(0) >= 0 or f != 0; "
                   "the inequalities are not implied")
        logger.warning(warning)

    C_f0 = profile_integral(config.f_profile, n, lambda r: phi1(r, n))
    C_fg = C_f0 + profile_integral(config.g_profile, n, lambda r: phi1(r, n))
    base = {
        "m(0)": (m0, "exp(-mu/(beta-1)), lower bound of the multiplier"),
        "C_f0": (C_f0, "int f phi_1 dx by adaptive quadrature"),
        "C_fg": (C_fg, "int (f+g) phi_1 dx by adaptive quadrature"),
    }
    reports = []

    def add(ident, lhs, rhs, consts):
        reports.append(InequalityReport(ident, t.copy(), np.asarray(lhs, float), np.asarray(rhs, float),
                                        _tolerance(lhs, rhs, dt), {**base, **consts}, warning))

    C2 = (ball_volume(n) * R ** n) ** (-(p - 1.0))
    c2_doc = (f"(omega_n R^n)^(-(p-1)) with omega_n = {ball_volume(n):.12g}, Hoelder on "
              f"|x| <= t+R, |ball| <= omega_n R^n (1+t)^n for R >= 1")
    for ident in which:
        if ident == "I12":
            add("I12", trace.F0_rate, m0 * _cumtrapz(trace.Ip, t), {})
        elif ident == "I15":
            C1, sup = lemma1_constant(n, p, R, t)
            rhs = C1 * (1.0 + t) ** ((n - 1) * (1.0 - p / 2.0)) * np.abs(trace.F1) ** p
            add("I15", trace.Ip, rhs, {
                "sup_ratio": (sup, "sup over trace times of int psi_1^{p/(p-1)} / "
                                   f"(1+t)^{lemma1_exponent(n, p):.6g}"),
                "C1": (C1, "(sup_ratio)^(-(p-1)), Hoelder with the test-function integral bound"),
            })
        elif ident == "I18":
            add("I18", trace.F1, np.full_like(t, 0.5 * m0 * C_f0 * eps), {})
        elif ident == "I19a":
            rhs = C2 * (1.0 + t) ** (-n * (p - 1.0)) * np.abs(trace.F0) ** p
            add("I19a", trace.Ip, rhs, {"C2": (C2, c2_doc)})
        elif ident == "I19b":
            C3 = C2 * m0
            inner = _cumtrapz((1.0 + t) ** (-n * (p - 1.0)) * np.maximum(trace.F0, 0.0) ** p, t)
            add("I19b", trace.F0, C3 * _cumtrapz(inner, t), {
                "C2": (C2, c2_doc), "C3": (C3, "C2 * m(0)")})
        elif ident == "I81":
            C8 = m0 * int_g
            C9 = min(C8, int_f)
            add("I81", trace.F0, C9 * eps * (1.0 + t), {
                "int_f": (int_f, "int f dx by adaptive quadrature"),
                "int_g": (int_g, "int g dx by adaptive quadrature"),
                "C8": (C8, "m(0) * int g dx"), "C9": (C9, "min(C8, int f dx)")})
    return reports


def chain_constants(config: "ProblemConfig", lemma_times=None) -> dict[str, tuple[float, str]]:
    """Explicit constants of the lower-bound chain for a given configuration.

    C1 is a measured sup over ``lemma_times`` (default: 0 and a geometric grid
    up to t = 200), so it is an estimate of the true supremum, not a bound.
    """
    n, p, R = config.n, config.p, config.R
    m0, _ = m_bounds(MultiplierParams(config.mu, config.beta))
    if lemma_times is None:
        lemma_times = np.concatenate([[0.0], np.geomspace(0.1, 200.0, 40)])
    C1, sup = lemma1_constant(n, p, R, lemma_times)
    C2 = (ball_volume(n) * R ** n) ** (-(p - 1.0))
    C3 = C2 * m0
    C_f0 = profile_integral(config.f_profile, n, lambda r: phi1(r, n))
    C4 = C1 * m0 * (0.5 * m0 * C_f0) ** p
    int_f = profile_integral(config.f_profile, n)
    int_g = profile_integral(config.g_profile, n)
    C8 = m0 * int_g
    C9 = min(C8, int_f)
    C10 = C2 * C9 ** p
    C11 = C10 * m0
    return {
        "m(0)": (m0, "exp(-mu/(beta-1))"),
        "C1": (C1, f"(sup of test-function integral ratio = {sup:.12g})^(-(p-1)) over sampled t"),
        "C2": (C2, "(omega_n R^n)^(-(p-1))"),
        "C3": (C3, "C2 * m(0)"),
        "C_f0": (C_f0, "int f phi_1 dx"),
        "C4": (C4, "C1 * m(0) * (m(0) C_f0 / 2)^p"),
        "int_f": (int_f, "int f dx"),
        "int_g": (int_g, "int g dx"),
        "C8": (C8, "m(0) * int g dx"),
        "C9": (C9, "min(C8, int f dx)"),
        "C10": (C10, "C2 * C9^p"),
        "C11": (C11, "C10 * m(0)"),
    }
