"""Radial finite-difference solver for u_tt - Lap u + mu (1+t)^{-beta} u_t = |u|^p.

The scheme is the explicit three-level (leapfrog) discretization with the
damping term averaged over the outer time levels. Near blow-up the time step
is halved whenever dt * max|u|^{(p-1)/2} exceeds a fixed fraction, which keeps
the ODE-like growth resolved long enough for the rate extrapolation in
:func:`estimate_blowup_time`.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import functionals
from .multiplier import sphere_measure

logger = logging.getLogger(__name__)

THRESHOLDS = (1e2, 1e3, 1e4, 1e5, 1e6)
MIN_POINTS_ACROSS_BUMP = 16
# Largest stable dt/dr per dimension. The origin row 2n(u1-u0)/dr^2 pushes the
# spectral radius of the radial Laplacian above 4/dr^2 for n >= 2.
MAX_STABLE_CFL = {1: 0.95, 2: 0.9, 3: 0.8}


def default_cfl(n: int) -> float:
    return MAX_STABLE_CFL[n]


class BlowupStatus(str, enum.Enum):
    BLEW_UP = "BlewUp"
    REACHED_TMAX = "ReachedTmax"
    UNSTABLE = "Unstable"


class BlowupBeforeCheck(RuntimeError):
    """The solution left the smooth regime before the requested check time."""


@dataclass(frozen=True)
class RadialProfile:
    """amplitude * (1 - (r/support_radius)^2)^smoothness inside the support."""

    amplitude: float = 1.0
    support_radius: float = 1.0
    smoothness: int = 4

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError(f"profile amplitude must be >= 0, got {self.amplitude}")
        if not self.support_radius > 0:
            raise ValueError(f"support_radius must be > 0, got {self.support_radius}")
        if int(self.smoothness) != self.smoothness or self.smoothness < 3:
            raise ValueError(f"smoothness must be an integer >= 3, got {self.smoothness}")

    def __call__(self, r):
        s = np.asarray(r, dtype=float) / self.support_radius
        return np.where(s < 1.0, self.amplitude * np.clip(1.0 - s * s, 0.0, None) ** self.smoothness, 0.0)


@dataclass(frozen=True)
class ProblemConfig:
    n: int
    p: float
    mu: float
    beta: float
    eps: float = 0.1
    R: float = 1.0
    f_profile: RadialProfile = field(default_factory=RadialProfile)
    g_profile: RadialProfile = field(default_factory=lambda: RadialProfile(amplitude=0.0))
    source: bool = True

    def __post_init__(self):
        if self.n not in (1, 2, 3):
            raise ValueError(f"n must be 1, 2 or 3, got {self.n}")
        if not self.p > 1:
            raise ValueError(f"p must satisfy p > 1, got {self.p}")
        if self.mu < 0:
            raise ValueError(f"mu must be >= 0, got {self.mu}")
        if self.eps < 0:
            raise ValueError(f"eps must be >= 0, got {self.eps}")
        if self.R < 1:
            raise ValueError(f"R must satisfy R >= 1, got {self.R}")
        for name in ("f_profile", "g_profile"):
            prof = getattr(self, name)
            if prof.support_radius > self.R:
                raise ValueError(f"{name}.support_radius = {prof.support_radius} exceeds R = {self.R}")

    def damping(self, t: float) -> float:
        return self.mu * (1.0 + t) ** (-self.beta)


@dataclass(frozen=True)
class GridSpec:
    dr: float
    cfl: float = 0.9
    r_max: float = 0.0
    t_max: float = 10.0

    def __post_init__(self):
        if not self.dr > 0:
            raise ValueError(f"dr must be positive, got {self.dr}")
        if not 0 < self.cfl <= 0.95:
            raise ValueError(f"cfl must lie in (0, 0.95], got {self.cfl}")
        if not self.t_max > 0:
            raise ValueError(f"t_max must be positive, got {self.t_max}")

    @property
    def dt(self) -> float:
        return self.cfl * self.dr

    @property
    def npoints(self) -> int:
        return int(round(self.r_max / self.dr)) + 1

    @property
    def r(self) -> np.ndarray:
        return self.dr * np.arange(self.npoints)

    def check_light_cone(self, R: float) -> None:
        if self.r_max < self.t_max + R + 2 * self.dr - 1e-12:
            raise ValueError(f"r_max = {self.r_max} must be >= t_max + R + 2 dr = "
                             f"{self.t_max + R + 2 * self.dr}")

    @classmethod
    def sized_for(cls, dr: float, t_max: float, R: float, cfl: float = 0.9) -> "GridSpec":
        return cls(dr=dr, cfl=cfl, r_max=t_max + R + 4 * dr, t_max=t_max)


@dataclass
class SolutionState:
    u_prev: np.ndarray
    u_curr: np.ndarray
    t: float
    dt: float
    step_index: int = 0


@dataclass
class BlowupReport:
    status: BlowupStatus
    T_est: float = math.nan
    T_lo: float = math.nan
    T_hi: float = math.nan
    threshold_times: list[tuple[float, float]] = field(default_factory=list)
    fallback: bool = False

    @property
    def bracket_width(self) -> float:
        return self.T_hi - self.T_lo


class _Stencil:
    """Radial Laplacian coefficients; n * u_rr at the origin via even reflection."""

    def __init__(self, n: int, dr: float, npoints: int):
        r = dr * np.arange(npoints)
        self.n = n
        self.dr = dr
        inv2 = 1.0 / (dr * dr)
        with np.errstate(divide="ignore"):
            drift = np.where(r > 0, (n - 1) / (2.0 * dr * np.where(r > 0, r, 1.0)), 0.0)
        self.c_plus = inv2 + drift
        self.c_minus = inv2 - drift
        self.c_origin = 2.0 * n * inv2
        self.inv2 = inv2

    def apply(self, u: np.ndarray, k: int) -> np.ndarray:
        """Laplacian at indices 0..k; needs k + 1 < len(u)."""
        out = np.empty(k + 1)
        out[0] = self.c_origin * (u[1] - u[0])
        out[1:] = (self.c_plus[1:k + 1] * u[2:k + 2] - 2.0 * self.inv2 * u[1:k + 1]
                   + self.c_minus[1:k + 1] * u[0:k])
        return out


_STENCILS: dict = {}


def _stencil(n: int, grid: GridSpec) -> _Stencil:
    key = (n, grid.dr, grid.npoints)
    st = _STENCILS.get(key)
    if st is None:
        st = _STENCILS[key] = _Stencil(n, grid.dr, grid.npoints)
    return st


def support_index(t: float, R: float, grid: GridSpec) -> int:
    """Largest grid index allowed to be nonzero at time t: r_i <= t + R + 2 dr."""
    bound = t + R + 2.0 * grid.dr
    k = min(grid.npoints - 1, int(math.floor(bound / grid.dr)))
    # settle rounding ties against the same products that make up grid.r
    while k > 0 and grid.dr * k > bound:
        k -= 1
    while k + 1 < grid.npoints and grid.dr * (k + 1) <= bound:
        k += 1
    return k


def _source(u: np.ndarray, config: ProblemConfig) -> np.ndarray:
    if not config.source:
        return np.zeros_like(u)
    return np.abs(u) ** config.p


def laplacian(u: np.ndarray, grid: GridSpec, n: int) -> np.ndarray:
    """Discrete radial Laplacian on the whole grid (last point is Dirichlet)."""
    st = _stencil(n, grid)
    k = grid.npoints - 2
    out = np.zeros_like(u)
    out[:k + 1] = st.apply(u, k)
    return out


def build_initial_data(config: ProblemConfig, grid: GridSpec) -> SolutionState:
    for name in ("f_profile", "g_profile"):
        prof = getattr(config, name)
        if prof.amplitude > 0 and prof.support_radius / grid.dr < MIN_POINTS_ACROSS_BUMP:
            raise ValueError(f"grid too coarse: {name} has only {prof.support_radius / grid.dr:.1f} "
                             f"points across its support (need {MIN_POINTS_ACROSS_BUMP})")
    if grid.cfl > MAX_STABLE_CFL[config.n] + 1e-12:
        raise ValueError(f"cfl = {grid.cfl} violates cfl <= {MAX_STABLE_CFL[config.n]} "
                         f"required for stability at n = {config.n}")
    grid.check_light_cone(config.R)
    r = grid.r
    u0 = config.eps * config.f_profile(r)
    u1 = config.eps * config.g_profile(r)
    u0[-1] = 0.0
    u1[-1] = 0.0
    dt = grid.dt
    accel = laplacian(u0, grid, config.n) - config.damping(0.0) * u1 + _source(u0, config)
    u_prev = u0 - dt * u1 + 0.5 * dt * dt * accel
    u_prev[-1] = 0.0
    return SolutionState(u_prev=u_prev, u_curr=u0, t=0.0, dt=dt, step_index=0)


def step(state: SolutionState, config: ProblemConfig, grid: GridSpec) -> SolutionState:
    """Advance one time level; returns a new state (inputs are not modified)."""
    dt = state.dt
    t_new = state.t + dt
    k = min(support_index(t_new, config.R, grid), grid.npoints - 2)
    u, um = state.u_curr, state.u_prev
    st = _stencil(config.n, grid)
    uc = u[:k + 1]
    rhs = st.apply(u, k)
    if config.source:
        rhs += np.abs(uc) ** config.p
    half = 0.5 * dt * config.damping(state.t)
    new = np.zeros_like(u)
    new[:k + 1] = (2.0 * uc - (1.0 - half) * um[:k + 1] + dt * dt * rhs) / (1.0 + half)
    return SolutionState(u_prev=u, u_curr=new, t=t_new, dt=dt, step_index=state.step_index + 1)


def velocity(state: SolutionState, config: ProblemConfig, grid: GridSpec) -> np.ndarray:
    """Second-order estimate of u_t at the current level."""
    dt = state.dt
    rhs = laplacian(state.u_curr, grid, config.n) + _source(state.u_curr, config)
    v = ((state.u_curr - state.u_prev) / dt + 0.5 * dt * rhs) / (1.0 + 0.5 * dt * config.damping(state.t))
    return v


def acceleration(state: SolutionState, config: ProblemConfig, grid: GridSpec,
                 v: np.ndarray | None = None) -> np.ndarray:
    if v is None:
        v = velocity(state, config, grid)
    return (laplacian(state.u_curr, grid, config.n) + _source(state.u_curr, config)
            - config.damping(state.t) * v)


def refine_time_step(state: SolutionState, config: ProblemConfig, grid: GridSpec,
                     factor: int = 2) -> SolutionState:
    """Restart the three-level scheme with dt / factor via a Taylor back-step."""
    v = velocity(state, config, grid)
    a = acceleration(state, config, grid, v)
    h = state.dt / factor
    u_prev = state.u_curr - h * v + 0.5 * h * h * a
    u_prev[-1] = 0.0
    return replace(state, u_prev=u_prev, dt=h)


def discrete_energy(state: SolutionState, grid: GridSpec, n: int) -> float:
    """Staggered energy 1/2 |D_t u|^2 + 1/2 <D_r u^{k}, D_r u^{k-1}> between the two levels.

    For n = 1 and mu = 0 without source this quantity is conserved exactly by
    the scheme; with damping it is non-increasing.
    """
    dr, dt = grid.dr, state.dt
    w = functionals.radial_weights(grid, n)
    ut = (state.u_curr - state.u_prev) / dt
    r_mid = dr * (np.arange(grid.npoints - 1) + 0.5)
    w_edge = sphere_measure(n) * r_mid ** (n - 1) * dr
    du_c = np.diff(state.u_curr) / dr
    du_p = np.diff(state.u_prev) / dr
    return 0.5 * float(np.dot(w, ut * ut)) + 0.5 * float(np.dot(w_edge, du_c * du_p))


def _dt_limit(umax: float, p: float, kappa: float) -> float:
    if umax <= 0:
        return math.inf
    return kappa * umax ** (-(p - 1.0) / 2.0)


def run(config: ProblemConfig, grid: GridSpec, stride: int = 10, fit_samples: int = 20,
        kappa: float = 0.05, max_refinements: int = 60):
    """Integrate until blow-up, t_max or instability.

    Returns ``(trace, report)``. Trace rows are written every ``stride`` steps;
    the (t, max|u|) series used for the blow-up estimate is kept at every step.
    """
    state = build_initial_data(config, grid)
    tracer = functionals.TraceWriter(config, grid)
    tracer.record(state, velocity(state, config, grid))
    series_t: list[float] = [0.0]
    series_u: list[float] = [float(np.max(np.abs(state.u_curr)))]
    crossings: list[tuple[float, float]] = []
    next_threshold = 0
    refinements = 0
    top = THRESHOLDS[-1]

    def note_crossings(t: float, umax: float) -> None:
        nonlocal next_threshold
        while next_threshold < len(THRESHOLDS) and umax >= THRESHOLDS[next_threshold]:
            crossings.append((THRESHOLDS[next_threshold], t))
            next_threshold += 1

    note_crossings(0.0, series_u[0])
    status = BlowupStatus.REACHED_TMAX
    t_end = grid.t_max
    while state.t < t_end - 1e-12 * max(1.0, t_end):
        umax = series_u[-1]
        while (config.source and state.dt > _dt_limit(umax, config.p, kappa)
               and refinements < max_refinements):
            state = refine_time_step(state, config, grid)
            refinements += 1
        new = step(state, config, grid)
        umax_new = float(np.max(np.abs(new.u_curr)))
        if not math.isfinite(umax_new):
            if not crossings:
                status = BlowupStatus.UNSTABLE
                logger.warning("non-finite values at t=%.6g before any blow-up threshold", new.t)
            else:
                status = BlowupStatus.BLEW_UP
            break
        state = new
        series_t.append(state.t)
        series_u.append(umax_new)
        note_crossings(state.t, umax_new)
        if state.step_index % stride == 0:
            tracer.record(state, velocity(state, config, grid))
        if umax_new >= top:
            status = BlowupStatus.BLEW_UP
            break
    if tracer.last_t < state.t:
        tracer.record(state, velocity(state, config, grid))
    trace = tracer.finish()
    if status is BlowupStatus.BLEW_UP:
        report = estimate_blowup_time(list(zip(series_t, series_u)), config.p, fit_samples)
        if report.status is not BlowupStatus.BLEW_UP:
            report.status = BlowupStatus.BLEW_UP
    else:
        report = BlowupReport(status=status, threshold_times=crossings)
    return trace, report


def estimate_blowup_time(umax_series, p: float, fit_samples: int = 20,
                         thresholds=THRESHOLDS) -> BlowupReport:
    """Extrapolate T from z = max|u|^{-(p-1)/2}, which is asymptotically linear in T - t.

    The last ``fit_samples`` points are fitted by least squares and the root
    of the line is T_est. A non-decreasing z tail falls back to the last
    threshold-crossing time with a widened bracket.
    """
    data = np.asarray(umax_series, dtype=float)
    t, umax = data[:, 0], data[:, 1]
    crossings = []
    for thr in thresholds:
        hit = np.nonzero(umax >= thr)[0]
        if hit.size:
            crossings.append((float(thr), float(t[hit[0]])))
    if len(crossings) < 3:
        return BlowupReport(status=BlowupStatus.REACHED_TMAX, threshold_times=crossings)

    k = min(fit_samples, len(t))
    tt = t[-k:]
    z = umax[-k:] ** (-(p - 1.0) / 2.0)
    T_lo = float(t[-1])
    monotone = bool(np.all(np.diff(z) < 0))
    if monotone and k >= 3:
        slope, intercept = np.polyfit(tt - tt[-1], z, 1)
        if slope < 0:
            root = tt[-1] - intercept / slope
            resid = z - (slope * (tt - tt[-1]) + intercept)
            rms = float(np.sqrt(np.mean(resid * resid)))
            T_est = max(float(root), T_lo)
            margin = max(3.0 * rms / abs(slope), T_est - T_lo)
            return BlowupReport(status=BlowupStatus.BLEW_UP, T_est=T_est, T_lo=T_lo,
                                T_hi=T_est + margin, threshold_times=crossings)
    last_cross = crossings[-1][1]
    width = max(last_cross - crossings[0][1], T_lo - last_cross)
    return BlowupReport(status=BlowupStatus.BLEW_UP, T_est=last_cross, T_lo=min(last_cross, T_lo),
                        T_hi=max(T_lo, last_cross) + width, threshold_times=crossings, fallback=True)


def self_convergence(config: ProblemConfig, base_grid: GridSpec, t_check: float | None = None,
                     ratio: int = 2) -> float:
    """Observed order from runs at dr, dr/ratio, dr/ratio^2 compared at t_check."""
    if ratio <= 1:
        raise ValueError("degenerate refinement: the three grids must differ (ratio > 1)")
    t_check = base_grid.t_max if t_check is None else t_check
    nsteps = int(math.ceil(t_check / base_grid.dt - 1e-9))
    sols = []
    for level in range(3):
        f = ratio ** level
        g = GridSpec(dr=base_grid.dr / f, cfl=base_grid.cfl, r_max=base_grid.r_max, t_max=base_grid.t_max)
        state = build_initial_data(config, g)
        for _ in range(nsteps * f):
            state = step(state, config, g)
            if not np.max(np.abs(state.u_curr)) < THRESHOLDS[0]:
                raise BlowupBeforeCheck(f"solution left the smooth window before t_check = {t_check}")
        sols.append(state.u_curr[::f])
    m = min(s.size for s in sols)
    w = functionals.radial_weights(base_grid, config.n)[:m]

    def norm(x):
        return math.sqrt(float(np.dot(w, x * x)))

    e1 = norm(sols[0][:m] - sols[1][:m])
    e2 = norm(sols[1][:m] - sols[2][:m])
    return math.log(e1 / e2) / math.log(ratio)
