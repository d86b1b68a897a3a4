"""The iteration argument as explicit sequences and constants.

The lower bounds F0(t) > D_j (1+t)^{-a_j} t^{b_j} are generated by

    a_{j+1} = p a_j + n (p-1),   b_{j+1} = p b_j + 2,
    D_{j+1} = C3 D_j^p / (p b_j + 2)^2

(taken with equality), seeded per variant. log D_j is carried as
log D_j / p^{j-1}, which stays bounded, so nothing overflows for large j.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exponents import Variant, gamma, lifespan_exponent


@dataclass(frozen=True)
class IterationSpec:
    variant: Variant
    n: int
    p: float
    eps: float
    C3: float
    C4: float = math.nan
    C11: float = math.nan

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if not self.p > 1:
            raise ValueError(f"p must satisfy p > 1, got {self.p}")
        if not (self.eps > 0 and self.C3 > 0):
            raise ValueError("eps and C3 must be positive")
        if self.variant is Variant.GENERAL:
            if not self.C4 > 0:
                raise ValueError("General variant needs C4 > 0")
        else:
            if not self.C11 > 0:
                raise ValueError(f"{self.variant.value} variant needs C11 > 0")
            want = 2 if self.variant is Variant.TWO_D_LOW_P else 1
            if self.n != want:
                raise ValueError(f"{self.variant.value} variant requires n = {want}, got n = {self.n}")

    @property
    def a1(self) -> float:
        if self.variant is Variant.GENERAL:
            return (self.n - 1) * self.p / 2.0
        if self.variant is Variant.TWO_D_LOW_P:
            return self.p - 1.0
        return 0.0

    @property
    def b1(self) -> float:
        return self.n + 1.0 if self.variant is Variant.GENERAL else 3.0

    @property
    def seed_coefficient(self) -> float:
        """D_1 / eps^p."""
        if self.variant is Variant.GENERAL:
            return self.C4 / (self.n * (self.n + 1.0))
        return self.C11 / 6.0

    @property
    def log_D1(self) -> float:
        return math.log(self.seed_coefficient) + self.p * math.log(self.eps)


@dataclass
class IterationSequence:
    j: np.ndarray
    a: np.ndarray
    b: np.ndarray
    logD_scaled: np.ndarray
    envelope_scaled: np.ndarray
    p: float

    @property
    def logD(self) -> np.ndarray:
        return _unscale(self.logD_scaled, self.j, self.p)

    @property
    def envelope_logD(self) -> np.ndarray:
        """p^{j-1} (log D_1 - S_p(inf)), the closed-form lower bound of log D_j."""
        return _unscale(self.envelope_scaled, self.j, self.p)


def _unscale(x, j, p):
    with np.errstate(over="ignore", invalid="ignore"):
        return x * np.power(p, j - 1.0)


def closed_form_exponents(spec: IterationSpec, j: int) -> tuple[float, float]:
    if j < 1:
        raise ValueError(f"j must be >= 1, got {j}")
    p, n = spec.p, spec.n
    try:
        q = p ** (j - 1)
    except OverflowError:
        q = math.inf
    return q * (spec.a1 + n) - n, q * (spec.b1 + 2.0 / (p - 1.0)) - 2.0 / (p - 1.0)


def _log_b(spec: IterationSpec, j: int) -> float:
    """log b_j without forming p^{j-1}."""
    c = 2.0 / (spec.p - 1.0)
    head = spec.b1 + c
    return (j - 1) * math.log(spec.p) + math.log(head) + math.log1p(-c / head * math.exp((1 - j) * math.log(spec.p)))


def iterate(spec: IterationSpec, j_max: int) -> IterationSequence:
    if j_max < 1:
        raise ValueError(f"j_max must be >= 1, got {j_max}")
    p, n = spec.p, spec.n
    js = np.arange(1, j_max + 1)
    a = np.empty(j_max)
    b = np.empty(j_max)
    scaled = np.empty(j_max)
    a[0], b[0], scaled[0] = spec.a1, spec.b1, spec.log_D1
    log_c3 = math.log(spec.C3)
    log_p = math.log(p)
    for k in range(1, j_max):
        j = k + 1
        if j <= 60:
            a[k] = p * a[k - 1] + n * (p - 1.0)
            b[k] = p * b[k - 1] + 2.0
        else:
            a[k], b[k] = closed_form_exponents(spec, j)
        # log D_j / p^{j-1} = log D_{j-1}/p^{j-2} + (log C3 - 2 log b_j) / p^{j-1}
        scaled[k] = scaled[k - 1] + (log_c3 - 2.0 * _log_b(spec, j)) * math.exp(-(j - 1) * log_p)
    S = series_limit(spec)
    envelope = np.full(j_max, spec.log_D1 - S)
    return IterationSequence(js, a, b, scaled, envelope, p)


def sp_partial(p: float, C: float, j: int) -> float:
    """S_p(j) = sum_{k=1}^{j-1} (2k log p - log C) / p^k."""
    k = np.arange(1, j, dtype=float)
    return float(np.sum((2.0 * k * math.log(p) - math.log(C)) * np.exp(-k * math.log(p))))


def sp_tail_bound(p: float, C: float, J: int) -> float:
    """Bound on |S_p(J) - S_p(inf)| = |sum_{k >= J} (2k log p - log C)/p^k|."""
    lead = p ** (1.0 - J) / (p - 1.0)
    return lead * (2.0 * math.log(p) * (J * (p - 1.0) + 1.0) / (p - 1.0) + abs(math.log(C)))


def sp_infinity(p: float, C5: float) -> float:
    """Closed form 2p log p/(p-1)^2 - log C5/(p-1), checked against a partial sum."""
    if not (p > 1 and C5 > 0):
        raise ValueError(f"need p > 1 and C5 > 0, got p={p}, C5={C5}")
    value = 2.0 * p * math.log(p) / (p - 1.0) ** 2 - math.log(C5) / (p - 1.0)
    J = 2
    while sp_tail_bound(p, C5, J) > 1e-12:
        J *= 2
    partial = sp_partial(p, C5, J)
    slack = sp_tail_bound(p, C5, J) + 1e-12 * max(1.0, abs(value))
    if abs(partial - value) > slack:
        raise ArithmeticError(f"S_p closed form {value} disagrees with partial sum {partial}")
    return value


@dataclass(frozen=True)
class BoundConstants:
    variant: Variant
    C5: float
    C6: float
    C7: float
    Sp_inf: float
    C12: float = math.nan
    C13: float = math.nan
    St_inf: float = math.nan
    lifespan_constant: float = math.nan
    lifespan_exponent: float = math.nan
    by_analogy: bool = False


def _growth_rate(spec_like_a1n: float, b1: float, p: float) -> float:
    return b1 + 2.0 / (p - 1.0) - spec_like_a1n


def bound_constants(n: int, p: float, C3: float, C4: float = math.nan, C11: float = math.nan,
                    variant: Variant | str = Variant.GENERAL) -> BoundConstants:
    """C5, C6, C7 (and C12, C13 for the low-dimensional variants).

    The lifespan constant follows one recipe for every variant: J(t) >= 1 once
    t^rate * D1 >= e^{C+1}, where rate is the net log-t slope of J and C the
    log 2 correction plus the series limit.
    """
    variant = Variant(variant)
    if n >= 2 and variant is Variant.GENERAL and not gamma(p, n) > 0:
        raise ValueError(f"gamma(p, n) = {gamma(p, n):.6g} <= 0: p = {p} is not below p_S({n})")
    C5 = C3 / (n + 1.0 + 2.0 / (p - 1.0)) ** 2
    Sp = sp_infinity(p, C5)
    C6 = ((n - 1) * p / 2.0 + n) * math.log(2.0) + Sp
    C7 = math.nan
    if C4 > 0:
        log_C7 = (math.log(n * (n + 1.0) / C4) + C6 + 1.0) * 2.0 * (p - 1.0) / gamma(p, n)
        C7 = math.exp(log_C7) if log_C7 < 700.0 else math.inf
    if variant is Variant.GENERAL:
        if not C4 > 0:
            raise ValueError("General variant needs C4 > 0")
        return BoundConstants(variant, C5, C6, C7, Sp, lifespan_constant=C7,
                              lifespan_exponent=lifespan_exponent(n, p, variant))
    if not C11 > 0:
        raise ValueError(f"{variant.value} variant needs C11 > 0")
    lifespan_exponent(n, p, variant)  # validates (n, p) for the variant
    C12 = C11 / (3.0 + 2.0 / (p - 1.0)) ** 2
    St = sp_infinity(p, C12)
    a1n = (p + 1.0) if variant is Variant.TWO_D_LOW_P else 1.0
    C13 = St + a1n * math.log(2.0)
    rate = _growth_rate(a1n, 3.0, p)
    log_const = (math.log(6.0 / C11) + C13 + 1.0) / rate
    const = math.exp(log_const) if log_const < 700.0 else math.inf
    return BoundConstants(variant, C5, C6, C7, Sp, C12, C13, St, const, p / rate,
                          by_analogy=variant is Variant.ONE_D)


def series_limit(spec: IterationSpec) -> float:
    if spec.variant is Variant.GENERAL:
        return sp_infinity(spec.p, spec.C3 / (spec.n + 1.0 + 2.0 / (spec.p - 1.0)) ** 2)
    return sp_infinity(spec.p, spec.C11 / (3.0 + 2.0 / (spec.p - 1.0)) ** 2)


def J_of_t(t: float, spec: IterationSpec, consts: BoundConstants | None = None) -> float:
    """Exponent function J(t) of the envelope (1+t)^n t^{-2/(p-1)} exp(p^{j-1} J(t))."""
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    p, n = spec.p, spec.n
    S = series_limit(spec)
    if consts is not None:
        S = consts.Sp_inf if spec.variant is Variant.GENERAL else consts.St_inf
    return (-(spec.a1 + n) * math.log1p(t) + (spec.b1 + 2.0 / (p - 1.0)) * math.log(t)
            + spec.log_D1 - S)


def J_growth_rate(spec: IterationSpec) -> float:
    """Net coefficient of log t in J for t >= 1 (gamma/(2(p-1)) for the general variant)."""
    return _growth_rate(spec.a1 + spec.n, spec.b1, spec.p)


def envelope_log(t: float, j: int, spec: IterationSpec, consts: BoundConstants | None = None) -> float:
    """log of (1+t)^n t^{-2/(p-1)} exp(p^{j-1} J(t))."""
    p = spec.p
    return (spec.n * math.log1p(t) - 2.0 / (p - 1.0) * math.log(t)
            + math.exp((j - 1) * math.log(p)) * J_of_t(t, spec, consts))


def lifespan_bound(eps: float, spec: IterationSpec, consts: BoundConstants) -> float:
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    return consts.lifespan_constant * eps ** (-consts.lifespan_exponent)
