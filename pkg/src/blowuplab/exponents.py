"""Critical exponents, damping regimes and the lifespan-estimate catalog.

Everything here is a pure function of its arguments.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

from scipy.optimize import brentq

_EQ_TOL = 1e-12


class NoStraussExponent(ValueError):
    """Raised for n = 1, where the Strauss exponent is infinite."""


class Variant(str, enum.Enum):
    GENERAL = "General"
    TWO_D_LOW_P = "TwoDLowP"
    ONE_D = "OneD"


class Regime(str, enum.Enum):
    OVERDAMPING = "Overdamping"
    EFFECTIVE = "Effective"
    SCALE_INVARIANT = "ScaleInvariant"
    SCATTERING = "Scattering"


class Form(str, enum.Enum):
    POWER_LAW = "PowerLaw"
    EXP_POWER_LAW = "ExpPowerLaw"
    DOUBLE_EXP = "DoubleExp"
    B_EPSILON_LAW = "BEpsilonLaw"
    FINITE = "Finite"
    GLOBAL = "Global"
    UNKNOWN = "Unknown"


@dataclass(frozen=True)
class ExponentQuery:
    n: int
    p: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        if not self.p > 1:
            raise ValueError(f"p must satisfy p > 1, got {self.p}")


@dataclass(frozen=True)
class DampingRegime:
    tag: Regime
    noneffective: bool = False


@dataclass(frozen=True)
class LifespanPrediction:
    formula_id: str
    form: Form
    exponent: float = math.nan
    requires_nonzero_integral: bool = False
    delta_slack: bool = False

    def __post_init__(self):
        if self.form is Form.POWER_LAW and not self.exponent > 0:
            raise ValueError(f"power-law prediction needs a positive exponent, got {self.exponent}")


def gamma(p: float, n: float) -> float:
    """gamma(p, n) = 2 + (n+1) p - (n-1) p^2; ``n`` may be a real "dimension"."""
    return 2.0 + (n + 1.0) * p - (n - 1.0) * p * p


def fujita(n: float) -> float:
    return 1.0 + 2.0 / n


def strauss(n: int) -> float:
    """Positive root of gamma(., n), closed form polished by one Newton step."""
    if n < 2:
        raise NoStraussExponent("no finite Strauss exponent for n = 1")
    r = (n + 1 + math.sqrt(n * n + 10 * n - 7)) / (2.0 * (n - 1))
    dg = (n + 1) - 2.0 * (n - 1) * r
    return r - gamma(r, n) / dg


def strauss_shifted(n: float, shift: float) -> float:
    """p_S evaluated at the real dimension n + shift, by bracketing on gamma."""
    d = n + shift
    if not d > 1:
        raise ValueError(f"n + shift must exceed 1, got {d}")
    lo, hi = 1.0, 50.0
    while gamma(hi, d) > 0:
        hi *= 2.0
    return brentq(gamma, lo, hi, args=(d,), xtol=1e-15, rtol=1e-15, maxiter=500)


def critical_power_scale_invariant(n: int) -> float:
    """p_c(n) = max(p_F(n), p_S(n+2)); only defined for n <= 3."""
    if not 1 <= n <= 3:
        raise ValueError(f"p_c(n) is only defined for n <= 3, got n = {n}")
    return max(fujita(n), strauss_shifted(n, 2.0))


def classify_damping(beta: float, mu: float) -> DampingRegime:
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu}")
    if beta < -1:
        return DampingRegime(Regime.OVERDAMPING)
    if beta < 1:
        return DampingRegime(Regime.EFFECTIVE)
    if beta == 1:
        return DampingRegime(Regime.SCALE_INVARIANT, noneffective=mu < 1)
    return DampingRegime(Regime.SCATTERING)


def lifespan_exponent(n: int, p: float, variant: Variant | str = Variant.GENERAL) -> float:
    """Power of 1/eps in the beta > 1 lifespan upper bounds."""
    variant = Variant(variant)
    ExponentQuery(n, p)
    if variant is Variant.GENERAL:
        if n >= 2 and not p < strauss(n):
            raise ValueError(f"General variant requires p < p_S({n}) = {strauss(n):.4f}, got p = {p}")
        return 2.0 * p * (p - 1.0) / gamma(p, n)
    if variant is Variant.TWO_D_LOW_P:
        if n != 2:
            raise ValueError(f"TwoDLowP variant requires n = 2, got n = {n}")
        if not p < 2:
            raise ValueError(f"TwoDLowP variant requires 1 < p < 2, got p = {p}")
        return (p - 1.0) / (3.0 - p)
    if n != 1:
        raise ValueError(f"OneD variant requires n = 1, got n = {n}")
    return (p - 1.0) / 2.0


def solve_b_of_eps(eps: float) -> float:
    """Root b > 0 of b eps^2 log^2(b+1) = 1."""
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")

    def h(logb: float) -> float:
        b = math.exp(logb)
        return logb + 2.0 * math.log(eps) + 2.0 * math.log(math.log1p(b))

    lo, hi = -5.0, 5.0
    while h(lo) > 0:
        lo *= 2.0
    while h(hi) < 0:
        hi *= 2.0
    b = math.exp(brentq(h, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=500))
    # Newton polish on the untransformed residual.
    for _ in range(2):
        L = math.log1p(b)
        res = b * eps * eps * L * L - 1.0
        der = eps * eps * (L * L + 2.0 * b * L / (1.0 + b))
        b -= res / der
    return b


# --------------------------------------------------------------------------
# Catalog of known lifespan estimates, encoded as an ordered rule list.
# The first matching rule wins; the order puts the sharper estimates first.


def _close(a: float, b: float) -> bool:
    return abs(a - b) <= _EQ_TOL * max(1.0, abs(b))


def _lt(a: float, b: float) -> bool:
    return a < b and not _close(a, b)


def _pos_div(n: int, m: float) -> float:
    """m / [n-2]_+ with the infinite convention for n <= 2."""
    return math.inf if n <= 2 else m / (n - 2)


def _ps(d: float) -> float:
    return strauss_shifted(d, 0.0) if d > 1 else math.inf


@dataclass(frozen=True)
class _Rule:
    formula_id: str
    form: Form
    applies: Callable[[int, float, float, float, bool], bool]
    exponent: Callable[[int, float, float, float], float] = lambda n, p, b, mu: math.nan
    requires_nonzero_integral: bool = False
    delta_slack: bool = False


def _sub_fujita(n, p):
    return _lt(p, fujita(n))


def _in_small_mu_strauss(n, p, mu):
    return 0 < mu < (n * n + n + 2) / (2.0 * (n + 2)) and _lt(p, _ps(n + 2 * mu))


def _shifted_multi(n, mu):
    return n >= 2 and 0 <= mu < (n * n + n + 2) / (n + 2.0)


def _shifted_one(n, mu):
    return n == 1 and 0 < mu < 4.0 / 3.0


def _pc(n):
    return critical_power_scale_invariant(n)


_RULES: tuple[_Rule, ...] = (
    # beta = 0, constant damping.
    _Rule("beta0-fujita-critical", Form.EXP_POWER_LAW,
          lambda n, p, b, mu, nz: b == 0 and _close(p, fujita(n)),
          lambda n, p, b, mu: p - 1),
    _Rule("beta0-subfujita", Form.POWER_LAW,
          lambda n, p, b, mu, nz: b == 0 and _sub_fujita(n, p),
          lambda n, p, b, mu: 2 * (p - 1) / (2 - n * (p - 1))),
    # beta = -1.
    _Rule("beta-1-fujita-critical", Form.DOUBLE_EXP,
          lambda n, p, b, mu, nz: b == -1 and _close(p, fujita(n)),
          lambda n, p, b, mu: p - 1),
    _Rule("beta-1-subfujita", Form.EXP_POWER_LAW,
          lambda n, p, b, mu, nz: b == -1 and _sub_fujita(n, p),
          lambda n, p, b, mu: 2 * (p - 1) / (2 - n * (p - 1))),
    _Rule("beta-1-global", Form.GLOBAL,
          lambda n, p, b, mu, nz: b == -1 and _lt(fujita(n), p) and p < _pos_div(n, n)),
    # beta in (-1, 1), beta != 0; the lifespan depends on beta, not only on n, p.
    _Rule("effective-fujita-critical", Form.EXP_POWER_LAW,
          lambda n, p, b, mu, nz: -1 < b < 1 and _close(p, fujita(n)),
          lambda n, p, b, mu: p - 1),
    _Rule("effective-subfujita", Form.POWER_LAW,
          lambda n, p, b, mu, nz: -1 < b < 1 and _sub_fujita(n, p),
          lambda n, p, b, mu: 2 * (p - 1) / ((2 - n * (p - 1)) * (1 + b))),
    _Rule("effective-global", Form.GLOBAL,
          lambda n, p, b, mu, nz: (0 <= b < 1 and _lt(fujita(n), p) and p < _pos_div(n, n + 2))
          or (-1 < b < 0 and _lt(fujita(n), p) and p < _pos_div(n, n))),
    _Rule("overdamping-global", Form.GLOBAL, lambda n, p, b, mu, nz: b < -1),
    # beta = 1, mu = 2: critical power p_c(n) for n <= 3.
    _Rule("si-mu2-n1-sub-nonzero", Form.POWER_LAW,
          lambda n, p, b, mu, nz: b == 1 and mu == 2 and n == 1 and _lt(p, _pc(1)) and nz,
          lambda n, p, b, mu: (p - 1) / (3 - p), requires_nonzero_integral=True),
    _Rule("si-mu2-n1-sub-zero-p>2", Form.POWER_LAW,
          lambda n, p, b, mu, nz: b == 1 and mu == 2 and n == 1 and _lt(p, _pc(1)) and _lt(2, p),
          lambda n, p, b, mu: p * (p - 1) / (3 - p)),
    _Rule("si-mu2-n1-sub-zero-p=2", Form.B_EPSILON_LAW,
          lambda n, p, b, mu, nz: b == 1 and mu == 2 and n == 1 and _close(p, 2.0)),
    _Rule("si-mu2-n1-sub-zero-p<2", Form.POWER_LAW,
          lambda n, p, b, mu, nz: b == 1 and mu == 2 and n == 1 and _lt(p, 2.0),
          lambda n, p, b, mu: 2 * p * (p - 1) / gamma(p, 3)),
    _Rule("si-mu2-n2-sub-nonzero", Form.POWER_LAW,
          lambda n, p, b, mu, nz: b == 1 and mu == 2 and n == 2 and _lt(p, _pc(2)) and nz,
          lambda n, p, b, mu: (p - 1) / (4 - 2 * p), requires_nonzero_integral=True),
    _Rule("si-mu2-n2-sub-zero", Form.POWER_LAW,
          lambda n, p, b, mu, nz: b == 1 and mu == 2 and n == 2 and _lt(p, _pc(2)),
          lambda n, p, b, mu: 2 * p * (p - 1) / gamma(p, 4)),
    _Rule("si-mu2-n3-sub", Form.POWER_LAW,
          lambda n, p, b, mu, nz: b == 1 and mu == 2 and n == 3 and _lt(p, _pc(3)),
          lambda n, p, b, mu: 2 * p * (p - 1) / gamma(p, 5)),
    _Rule("si-mu2-critical-nonzero", Form.EXP_POWER_LAW,
          lambda n, p, b, mu, nz: b == 1 and mu == 2 and n <= 2 and _close(p, _pc(n)) and nz,
          lambda n, p, b, mu: p - 1, requires_nonzero_integral=True),
    _Rule("si-mu2-critical", Form.EXP_POWER_LAW,
          lambda n, p, b, mu, nz: b == 1 and mu == 2 and n <= 3 and _close(p, _pc(n)),
          lambda n, p, b, mu: p * (p - 1)),
    _Rule("si-mu2-uncovered", Form.UNKNOWN, lambda n, p, b, mu, nz: b == 1 and mu == 2),
    # beta = 1, small mu: Strauss-type bound with shifted dimension n + 2 mu.
    _Rule("si-small-mu-strauss", Form.POWER_LAW,
          lambda n, p, b, mu, nz: b == 1 and _in_small_mu_strauss(n, p, mu),
          lambda n, p, b, mu: 2 * p * (p - 1) / gamma(p, n + 2 * mu)),
    # beta = 1, extensions with arbitrarily small delta > 0.
    _Rule("si-shifted-critical", Form.EXP_POWER_LAW,
          lambda n, p, b, mu, nz: b == 1 and (_shifted_multi(n, mu) or _shifted_one(n, mu))
          and _close(p, _ps(n + mu)),
          lambda n, p, b, mu: p * (p - 1)),
    _Rule("si-shifted-strauss", Form.POWER_LAW,
          lambda n, p, b, mu, nz: b == 1 and _shifted_multi(n, mu)
          and not _lt(p, _ps(n + 2 + mu)) and _lt(p, _ps(n + mu)),
          lambda n, p, b, mu: 2 * p * (p - 1) / gamma(p, n + mu), delta_slack=True),
    _Rule("si-shifted-fujita", Form.POWER_LAW,
          lambda n, p, b, mu, nz: b == 1 and _shifted_multi(n, mu)
          and _lt(fujita(n), p) and _lt(p, _ps(n + 2 + mu)),
          lambda n, p, b, mu: 1.0, delta_slack=True),
    _Rule("si-shifted-1d-strauss", Form.POWER_LAW,
          lambda n, p, b, mu, nz: b == 1 and _shifted_one(n, mu)
          and not _lt(p, max(3.0, 2.0 / mu)) and _lt(p, _ps(1 + mu)),
          lambda n, p, b, mu: 2 * p * (p - 1) / gamma(p, 1 + mu), delta_slack=True),
    _Rule("si-shifted-1d-small-mu", Form.POWER_LAW,
          lambda n, p, b, mu, nz: b == 1 and n == 1 and 0 < mu < 2.0 / 3.0
          and not _lt(p, 3.0) and _lt(p, 2.0 / mu),
          lambda n, p, b, mu: 2 * (p - 1) / mu, delta_slack=True),
    # beta = 1, heat-like bounds.
    _Rule("si-heat-subfujita", Form.POWER_LAW,
          lambda n, p, b, mu, nz: b == 1 and mu >= 1 and _sub_fujita(n, p),
          lambda n, p, b, mu: (p - 1) / (2 - n * (p - 1))),
    _Rule("si-heat-small-mu", Form.POWER_LAW,
          lambda n, p, b, mu, nz: b == 1 and 0 < mu < 1 and n + mu - 1 > 0
          and _lt(p, fujita(n + mu - 1)),
          lambda n, p, b, mu: (p - 1) / (2 - (n + mu - 1) * (p - 1))),
    _Rule("si-heat-critical", Form.FINITE,
          lambda n, p, b, mu, nz: b == 1 and ((mu >= 1 and _close(p, fujita(n)))
                                              or (0 < mu < 1 and n + mu - 1 > 0
                                                  and _close(p, fujita(n + mu - 1))))),
    # beta > 1, scattering damping.
    _Rule("scattering-1d", Form.POWER_LAW,
          lambda n, p, b, mu, nz: b > 1 and n == 1 and nz,
          lambda n, p, b, mu: lifespan_exponent(n, p, Variant.ONE_D), requires_nonzero_integral=True),
    _Rule("scattering-2d-low-p", Form.POWER_LAW,
          lambda n, p, b, mu, nz: b > 1 and n == 2 and _lt(p, 2.0) and nz,
          lambda n, p, b, mu: lifespan_exponent(n, p, Variant.TWO_D_LOW_P),
          requires_nonzero_integral=True),
    _Rule("scattering-sub-strauss", Form.POWER_LAW,
          lambda n, p, b, mu, nz: b > 1 and (n == 1 or _lt(p, strauss(n))),
          lambda n, p, b, mu: lifespan_exponent(n, p, Variant.GENERAL)),
)


def lifespan_catalog(n: int, p: float, beta: float, mu: float,
                     nonzero_integral: bool = False) -> LifespanPrediction:
    """Look up the known lifespan estimate covering (n, p, beta, mu).

    ``nonzero_integral`` stands for I_{f,g} != 0 when beta = 1 and for
    int g != 0 when beta > 1. Cells not covered by any rule give Form.UNKNOWN.
    """
    ExponentQuery(n, p)
    for rule in _RULES:
        if not rule.applies(n, p, beta, mu, nonzero_integral):
            continue
        exponent = rule.exponent(n, p, beta, mu)
        return LifespanPrediction(rule.formula_id, rule.form, exponent,
                                  rule.requires_nonzero_integral, rule.delta_slack)
    return LifespanPrediction("uncovered", Form.UNKNOWN)
