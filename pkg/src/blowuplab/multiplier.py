"""Exponential multiplier, exponential spherical-mean test functions and the
test-function integral growth check."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

GL_ORDER = 64
_LOG_SPACE_R = 30.0
# e^{-r(1 - cos t)} < e^{-80} beyond this angle cut, for r > _LOG_SPACE_R.
_ANGLE_CUT = math.sqrt(160.0)


class QuadratureError(RuntimeError):
    def __init__(self, message: str, achieved: float):
        super().__init__(f"{message} (achieved relative error {achieved:.3e})")
        self.achieved = achieved


@dataclass(frozen=True)
class MultiplierParams:
    mu: float
    beta: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")


def _require_scattering(params: MultiplierParams) -> None:
    if not params.beta > 1:
        raise ValueError(f"the exponential multiplier needs beta > 1, got {params.beta}; use m_alt")


def m(t, params: MultiplierParams):
    """m(t) = exp(mu (1+t)^{1-beta} / (1-beta)); accepts scalars or arrays."""
    _require_scattering(params)
    mu, beta = params.mu, params.beta
    return np.exp(mu * (1.0 + np.asarray(t, dtype=float)) ** (1.0 - beta) / (1.0 - beta))


def m_bounds(params: MultiplierParams) -> tuple[float, float]:
    _require_scattering(params)
    return math.exp(-params.mu / (params.beta - 1.0)), 1.0


def m_alt(t, mu: float):
    """The scale-invariant alternative (1+t)^mu."""
    return (1.0 + np.asarray(t, dtype=float)) ** mu


def sphere_measure(n: int) -> float:
    """Surface measure |S^{n-1}| of the unit sphere in R^n (2 for n = 1)."""
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


def ball_volume(n: int) -> float:
    return math.pi ** (n / 2.0) / math.gamma(n / 2.0 + 1.0)


@lru_cache(maxsize=None)
def _gauss_legendre(order: int):
    return np.polynomial.legendre.leggauss(order)


def log_phi1(r, n: int):
    """log phi_1(r), stable for large r.

    For n >= 2 the sphere integral reduces to
    |S^{n-2}| * int_0^pi e^{r cos t} sin^{n-2} t dt; the factor e^r is pulled
    out so only e^{r (cos t - 1)} <= 1 is ever exponentiated.
    """
    r = np.asarray(r, dtype=float)
    if n == 1:
        return r + np.log1p(np.exp(-2.0 * r))
    x, w = _gauss_legendre(GL_ORDER)
    rr = np.atleast_1d(r)
    # Upper angle: pi, or a cut beyond which the integrand is below e^{-80}.
    top = np.where(rr > _LOG_SPACE_R, np.minimum(math.pi, _ANGLE_CUT / np.sqrt(np.maximum(rr, 1.0))),
                   math.pi)
    theta = 0.5 * top[:, None] * (x[None, :] + 1.0)
    integrand = np.exp(rr[:, None] * (np.cos(theta) - 1.0))
    if n > 2:
        integrand = integrand * np.sin(theta) ** (n - 2)
    integral = 0.5 * top * (integrand @ w)
    out = rr + np.log(sphere_measure(n - 1) * integral)
    return out.reshape(r.shape)


def phi1(r, n: int):
    """phi_1(x) for |x| = r: e^r + e^{-r} when n = 1, the spherical mean of e^{x.omega} otherwise."""
    return np.exp(log_phi1(r, n))


def psi1(r, t, n: int):
    """psi_1 = e^{-t} phi_1, with the exponents combined before exponentiation."""
    return np.exp(log_phi1(r, n) - np.asarray(t, dtype=float))


def lemma1_exponent(n: int, p: float) -> float:
    """(n-1)(1 - p/(2(p-1))), the growth rate bounding int psi_1^{p/(p-1)}."""
    return (n - 1) * (1.0 - p / (2.0 * (p - 1.0)))


def _composite_gl(f, a: float, b: float, panels: int, order: int = 16) -> float:
    x, w = _gauss_legendre(order)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    vals = f(nodes).reshape(panels, order)
    return float(np.sum(half * (vals @ w)))


def psi1_power_integral(t: float, n: int, p: float, R: float, rtol: float = 1e-9) -> float:
    """int_{|x| <= t+R} psi_1(x,t)^{p/(p-1)} dx by radial composite Gauss quadrature.

    The panel count is doubled until two successive values agree to ``rtol``
    (the finer value is returned).
    """
    q = p / (p - 1.0)
    omega = sphere_measure(n)

    def f(r):
        # r^{n-1} folded into the exponent; r = 0 never is a Gauss node.
        return np.exp(q * (log_phi1(r, n) - t) + (n - 1) * np.log(r))

    b = t + R
    panels = max(4, int(math.ceil(b)))
    prev = _composite_gl(f, 0.0, b, panels)
    err = math.inf
    for _ in range(12):
        panels *= 2
        cur = _composite_gl(f, 0.0, b, panels)
        err = abs(cur - prev) / abs(cur)
        if err <= rtol:
            return omega * cur
        prev = cur
    raise QuadratureError("psi_1 power integral did not converge", err)


def lemma1_ratio(t: float, n: int, p: float, R: float = 1.0) -> float:
    """int psi_1^{p/(p-1)} over the light cone divided by (1+t)^{(n-1)(1-p/(2(p-1)))}."""
    if n < 1 or not p > 1 or R < 1 or t < 0:
        raise ValueError(f"need n >= 1, p > 1, R >= 1, t >= 0; got n={n}, p={p}, R={R}, t={t}")
    return psi1_power_integral(t, n, p, R) / (1.0 + t) ** lemma1_exponent(n, p)


def loglog_slope(ts, values) -> float:
    """Least-squares slope of log(values) against log(ts)."""
    slope, _ = np.polyfit(np.log(ts), np.log(values), 1)
    return float(slope)


def lemma1_scan(n: int, p: float, R: float = 1.0, t_min: float = 50.0, t_max: float = 200.0,
                points: int = 16, window: int = 5):
    """Ratio on a geometric t-grid plus the trailing-window log-log slope.

    Returns rows ``(t, ratio, slope_window)``; the slope column is NaN until a
    full window is available.
    """
    ts = np.geomspace(t_min, t_max, points) if t_min > 0 else np.linspace(t_min, t_max, points)
    ratios = np.array([lemma1_ratio(float(t), n, p, R) for t in ts])
    rows = []
    for i, (t, r) in enumerate(zip(ts, ratios)):
        if i + 1 >= window and ts[i + 1 - window] > 0:
            s = loglog_slope(ts[i + 1 - window:i + 1], ratios[i + 1 - window:i + 1])
        else:
            s = math.nan
        rows.append((float(t), float(r), s))
    return rows

