"""Renyi-DP accounting for the subsampled Gaussian mechanism.

One noisy step at sampling rate q and noise multiplier sigma has a Renyi
divergence per order alpha; divergences compose additively over steps and
convert to (epsilon, delta) via

    epsilon = min_alpha [ T * rdp(alpha) + ln(1/delta) / (alpha - 1) ].

Integer orders use the exact log-space binomial expansion; fractional
orders use the stable two-integral split with erfc terms. The expansion is
catastrophically unstable in linear space at small q, hence everything is
accumulated in log space.

`calibrate_sigma` inverts the conversion by bisection, returning a sigma on
the conservative (epsilon <= target) side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

# Documented default order grid: a few sub-2 orders, half-integer steps up
# to 64, then integers to 256.
DEFAULT_ORDERS = tuple(
    [1.25, 1.5, 1.75]
    + [2.0 + 0.5 * i for i in range(125)]   # 2.0, 2.5, ..., 64.0
    + list(range(65, 257))
)

SIGMA_SEARCH_RANGE = (0.3, 1e4)

# Randomized response is considered good privacy at epsilon = ln 3; used as
# the documented anchor for "strong privacy" presets.
GOOD_PRIVACY_EPSILON = math.log(3.0)


class CalibrationError(RuntimeError):
    """Target epsilon unreachable within the sigma search range."""


@dataclass(frozen=True)
class RdpCurve:
    orders: tuple
    values: tuple  # per-order RDP of ONE step

    def __post_init__(self):
        if len(self.orders) != len(self.values):
            raise ValueError("orders and values must have equal length")
        if any(a <= 1 for a in self.orders):
            raise ValueError("all orders must exceed 1")
        if any(v < 0 for v in self.values):
            raise ValueError("RDP values must be non-negative")


@dataclass(frozen=True)
class EpsilonReport:
    epsilon: float
    best_order: float
    delta: float
    steps: int
    sigma: float
    q: float


def _log_add(a: float, b: float) -> float:
    if a == -math.inf:
        return b
    if b == -math.inf:
        return a
    hi, lo = max(a, b), min(a, b)
    return hi + math.log1p(math.exp(lo - hi))


def _log_sub(a: float, b: float) -> float:
    # log(exp(a) - exp(b)), requires a >= b
    if b == -math.inf:
        return a
    if a == b:
        return -math.inf
    if b > a:
        raise ValueError("log_sub needs a >= b")
    return a + math.log1p(-math.exp(b - a))


def _log_erfc(x: float) -> float:
    return math.log(2.0) + special.log_ndtr(-x * math.sqrt(2.0))


def _log_a_int(q: float, sigma: float, alpha: int) -> float:
    # log E[(nu/mu0)^alpha] via the exact binomial expansion, in log space
    logq, log1mq = math.log(q), math.log1p(-q)
    js = np.arange(alpha + 1)
    log_binom = (special.gammaln(alpha + 1) - special.gammaln(js + 1)
                 - special.gammaln(alpha - js + 1))
    terms = log_binom + js * logq + (alpha - js) * log1mq \
        + (js * js - js) / (2.0 * sigma * sigma)
    return float(special.logsumexp(terms))


def _log_a_frac(q: float, sigma: float, alpha: float) -> float:
    # two-integral split around the crossover point z0, erfc tails in log space
    log_a0, log_a1 = -math.inf, -math.inf
    z0 = sigma ** 2 * math.log(1.0 / q - 1.0) + 0.5
    logq, log1mq = math.log(q), math.log1p(-q)
    i = 0
    while True:
        coef = special.binom(alpha, i)
        log_coef = math.log(abs(coef))
        j = alpha - i
        log_t0 = log_coef + i * logq + j * log1mq
        log_t1 = log_coef + j * logq + i * log1mq
        log_e0 = math.log(0.5) + _log_erfc((i - z0) / (math.sqrt(2.0) * sigma))
        log_e1 = math.log(0.5) + _log_erfc((z0 - j) / (math.sqrt(2.0) * sigma))
        log_s0 = log_t0 + (i * i - i) / (2.0 * sigma ** 2) + log_e0
        log_s1 = log_t1 + (j * j - j) / (2.0 * sigma ** 2) + log_e1
        if coef > 0:
            log_a0 = _log_add(log_a0, log_s0)
            log_a1 = _log_add(log_a1, log_s1)
        else:
            log_a0 = _log_sub(log_a0, log_s0)
            log_a1 = _log_sub(log_a1, log_s1)
        i += 1
        if max(log_s0, log_s1) < -30 and i > alpha:
            break
    return _log_add(log_a0, log_a1)


def _rdp_one_order(q: float, sigma: float, alpha: float) -> float:
    if q == 1.0:
        return alpha / (2.0 * sigma ** 2)
    if float(alpha).is_integer():
        log_a = _log_a_int(q, sigma, int(alpha))
    else:
        log_a = _log_a_frac(q, sigma, alpha)
    return max(log_a / (alpha - 1.0), 0.0)


def rdp_step(q: float, sigma: float, orders=DEFAULT_ORDERS) -> RdpCurve:
    """Per-order RDP of one subsampled-Gaussian step."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if not (0.0 < q <= 1.0):
        raise ValueError(f"sampling rate must be in (0,1], got {q}")
    orders = tuple(float(a) for a in orders)
    return RdpCurve(orders, tuple(_rdp_one_order(q, sigma, a) for a in orders))


def to_epsilon(curve: RdpCurve, steps: int, delta: float,
               sigma: float = float("nan"), q: float = float("nan")) -> EpsilonReport:
    """Convert a one-step RDP curve composed over `steps` to (epsilon, delta)."""
    if not (0.0 < delta < 1.0):
        raise ValueError(f"delta must be in (0,1), got {delta}")
    if not curve.orders:
        raise ValueError("empty RDP curve")
    if steps <= 0:
        raise ValueError("steps must be positive")
    eps = [steps * v + math.log(1.0 / delta) / (a - 1.0)
           for a, v in zip(curve.orders, curve.values)]
    i = int(np.argmin(eps))
    return EpsilonReport(epsilon=eps[i], best_order=curve.orders[i], delta=delta,
                         steps=steps, sigma=sigma, q=q)


def epsilon_for(sigma: float, q: float, steps: int, delta: float,
                orders=DEFAULT_ORDERS) -> EpsilonReport:
    return to_epsilon(rdp_step(q, sigma, orders), steps, delta, sigma=sigma, q=q)


def calibrate_sigma(epsilon_target: float, delta: float, q: float, steps: int,
                    orders=DEFAULT_ORDERS, rel_tol: float = 1e-3) -> float:
    """Smallest-noise sigma whose epsilon lands within rel_tol of the target,
    on the private side (epsilon <= target).

    Bisection over the documented search range; epsilon is strictly
    decreasing in sigma, so the bracket is well defined whenever the target
    is reachable.
    """
    if not (epsilon_target > 0) or math.isinf(epsilon_target):
        raise ValueError("epsilon target must be positive and finite")
    lo, hi = SIGMA_SEARCH_RANGE
    eps_lo = epsilon_for(lo, q, steps, delta, orders).epsilon
    eps_hi = epsilon_for(hi, q, steps, delta, orders).epsilon
    if eps_lo < epsilon_target or eps_hi > epsilon_target:
        raise CalibrationError(
            f"target epsilon {epsilon_target} unreachable in sigma range "
            f"{SIGMA_SEARCH_RANGE}: eps({lo}) = {eps_lo:.4g}, "
            f"eps({hi}) = {eps_hi:.4g} (q={q}, T={steps}, delta={delta})"
        )
    best = hi  # hi side always satisfies eps <= target
    best_eps = eps_hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        eps_mid = epsilon_for(mid, q, steps, delta, orders).epsilon
        if eps_mid <= epsilon_target:
            best, best_eps = mid, eps_mid
            hi = mid
        else:
            lo = mid
        if abs(best_eps - epsilon_target) / epsilon_target <= rel_tol:
            break
    else:
        raise CalibrationError(
            f"bisection did not converge to {rel_tol:.0e} of epsilon "
            f"{epsilon_target} (closest: {best_eps:.6g} at sigma {best:.6g})"
        )
    return best
