"""Closed-form and large-K formulas for the baseline and two-slot schemes.

Conventions used throughout: ``exp(-s/0)`` is 0 for ``s > 0`` and 1 at
``s = 0``; gains are linear.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .topology import ClassModel, GainMatrix

__all__ = [
    "AnalyticError",
    "BetaThresholds",
    "approx_failure_prob",
    "approx_mean_success",
    "asymptotic_multicast",
    "asymptotic_outage_exponent",
    "asymptotic_outage_prob",
    "asymptotic_outage_exponent_realized",
    "asymptotic_outage_prob_realized",
    "baseline_all_success",
    "baseline_all_success_realized",
    "baseline_mean_success",
    "baseline_mean_success_realized",
    "baseline_multicast_rate",
    "baseline_outage_rate",
    "baseline_outage_rate_realized",
    "beta_thresholds",
    "outage_snr_taylor",
    "phase_limit_mean_success",
]


class AnalyticError(ValueError):
    """A formula was evaluated outside its domain of validity."""


def _survival(s: float, gain) -> np.ndarray:
    """``exp(-s/gain)`` with the zero-gain conventions."""
    gain = np.asarray(gain, dtype=float)
    if s == 0:
        return np.ones_like(gain)
    with np.errstate(divide="ignore"):
        return np.exp(-s / gain)


def _failure(s: float, gain) -> np.ndarray:
    """``1 - exp(-s/gain)`` without cancellation for large gains."""
    gain = np.asarray(gain, dtype=float)
    if s == 0:
        return np.zeros_like(gain)
    with np.errstate(divide="ignore"):
        return -np.expm1(-s / gain)


def baseline_mean_success(model: ClassModel, s: float) -> float:
    """Average slot-1 success ``sum_c alpha_c exp(-s/g_0c)``."""
    return float(np.dot(model.alpha, _survival(s, model.station_gains)))


def baseline_all_success(model: ClassModel, s: float, K: int) -> float:
    """Probability all ``K`` users decode in slot 1, ``exp(-s K sum_c alpha_c/g_0c)``."""
    if s == 0:
        return 1.0
    g0 = model.station_gains
    if np.any(g0 == 0):
        return 0.0
    return math.exp(-s * K * float(np.sum(model.alpha / g0)))


def baseline_mean_success_realized(gm: GainMatrix, s: float) -> float:
    return float(np.mean(_survival(s, gm.station_gains)))


def baseline_all_success_realized(gm: GainMatrix, s: float) -> float:
    if s == 0:
        return 1.0
    g0 = gm.station_gains
    if np.any(g0 == 0):
        return 0.0
    return math.exp(-s * float(np.sum(1.0 / g0)))


def baseline_multicast_rate(model: ClassModel, s_max: float | None = None, tol: float = 1e-6):
    """Best slot-1-only effective rate ``max_s log2(1+s) * P(s)``.

    Returns a :class:`~d2dcast.solvers.SchemeEval` with unit prefactor.
    """
    from .solvers import SchemeEval, default_s_max, maximize_effective_rate

    if not np.any(model.station_gains > 0):
        return SchemeEval(s=0.0, rate=0.0, probability=1.0, source="analytic")
    if s_max is None:
        s_max = default_s_max(model.station_gains)
    return maximize_effective_rate(
        lambda s: baseline_mean_success(model, s),
        prefactor=1.0,
        s_max=s_max,
        tol=tol,
        source="analytic",
        require_interior=True,
    )


def baseline_outage_rate(model: ClassModel, K: int, eps: float):
    """Slot-1-only outage rate; zero when some class has no direct link."""
    from .solvers import SchemeEval

    if not 0 < eps < 1:
        raise AnalyticError(f"eps must lie in (0, 1), got {eps}")
    g0 = model.station_gains
    if np.any(g0 == 0):
        return SchemeEval(s=0.0, rate=0.0, probability=1.0, source="analytic")
    s = -math.log1p(-eps) / (K * float(np.sum(model.alpha / g0)))
    return SchemeEval(s=s, rate=math.log2(1.0 + s), probability=1.0 - eps, source="analytic")


def baseline_outage_rate_realized(gm: GainMatrix, eps: float):
    """Slot-1-only outage rate on a realized network, ``s = ln(1/(1-eps)) / sum_i 1/g_0i``."""
    from .solvers import SchemeEval

    if not 0 < eps < 1:
        raise AnalyticError(f"eps must lie in (0, 1), got {eps}")
    g0 = gm.station_gains
    if np.any(g0 == 0):
        return SchemeEval(s=0.0, rate=0.0, probability=1.0, source="analytic")
    s = -math.log1p(-eps) / float(np.sum(1.0 / g0))
    return SchemeEval(s=s, rate=math.log2(1.0 + s), probability=1.0 - eps, source="analytic")


@dataclass(frozen=True)
class BetaThresholds:
    """Per-class phase-transition coefficients and their minimum."""

    beta_c: np.ndarray
    beta_star: float

    @property
    def two_hop_ok(self) -> bool:
        return bool(np.all(self.beta_c > 0))


def beta_thresholds(model: ClassModel) -> BetaThresholds:
    """``beta_c = max_{c'} g_0c' * 1{g_c'c > 0}``, ``beta_star = min_c beta_c``."""
    linked = model.class_gains > 0
    beta_c = np.max(np.where(linked, model.station_gains[:, None], 0.0), axis=0)
    beta_c.setflags(write=False)
    return BetaThresholds(beta_c=beta_c, beta_star=float(beta_c.min()))


def phase_limit_mean_success(model: ClassModel, beta: float) -> float:
    """Large-K limit of the mean success at ``s = beta ln K``: ``sum_c alpha_c 1{beta < beta_c}``."""
    if not beta > 0:
        raise AnalyticError(f"beta must be positive, got {beta}")
    bc = beta_thresholds(model).beta_c
    return float(np.sum(model.alpha[beta < bc]))


def _k_power(K: int, beta: float, g0: np.ndarray) -> np.ndarray:
    """``K**(1 - beta/g0)`` in log space; zero where ``g0 == 0``."""
    out = np.zeros_like(g0, dtype=float)
    pos = g0 > 0
    out[pos] = np.exp((1.0 - beta / g0[pos]) * math.log(K))
    return out


def approx_failure_prob(model: ClassModel, class_index: int, beta: float, K: int) -> float:
    """Finite-K failure estimate ``1 - exp(-1/v_K)`` for a user of ``class_index``.

    ``v_K = sum_c alpha_c g_{c,ci} K^(1-beta/g_0c) / (beta ln K)`` is the mean
    slot-2 SNR normalised by the threshold.

    Raises:
        AnalyticError: if ``beta`` is not below the class threshold or K < 2.
    """
    if K < 2:
        raise AnalyticError(f"K must be >= 2, got {K}")
    if beta < 0:
        raise AnalyticError(f"beta must be non-negative, got {beta}")
    ci = class_index - 1
    bc = float(beta_thresholds(model).beta_c[ci])
    if beta >= bc:
        raise AnalyticError(f"beta={beta} is not below beta_{class_index}={bc}")
    if beta == 0:
        return 0.0
    denom = float(np.dot(model.alpha * model.class_gains[:, ci], _k_power(K, beta, model.station_gains)))
    return float(-math.expm1(-beta * math.log(K) / denom))


def approx_mean_success(model: ClassModel, s: float, K: int) -> float:
    """Mean success built from the finite-K approximation, class by class.

    Classes with ``beta = s/ln K`` below their threshold use
    ``1 - approx_failure_prob``; the others keep only their slot-1 success
    ``K^(-beta/g_0c)``.
    """
    beta = s / math.log(K)
    bc = beta_thresholds(model).beta_c
    total = 0.0
    for c in range(model.C):
        if beta < bc[c]:
            p = 1.0 - approx_failure_prob(model, c + 1, beta, K)
        else:
            p = float(_survival(s, model.station_gains[c]))
        total += model.alpha[c] * p
    return total


def asymptotic_multicast(model: ClassModel, K: int):
    """Effective rate from the phase-transition limit.

    Maximises ``0.5 log2(1 + b ln K) * sum_{c: beta_c >= b} alpha_c`` over the
    thresholds ``b``; this is the supremum of the limit curve, approached as
    ``beta`` rises to ``b``.
    """
    from .solvers import SchemeEval

    bc = beta_thresholds(model).beta_c
    best = SchemeEval(s=0.0, rate=0.0, probability=1.0, source="approx")
    for b in np.unique(bc[bc > 0]):
        s = float(b) * math.log(K)
        cand = SchemeEval(s=s, rate=0.5 * math.log2(1.0 + s), probability=float(model.alpha[bc >= b].sum()), source="approx")
        if cand.effective_rate > best.effective_rate:
            best = cand
    return best


def _check_denominators(denom: np.ndarray) -> None:
    if np.any(denom <= 0):
        bad = [int(c) + 1 for c in np.flatnonzero(denom <= 0)]
        raise AnalyticError(f"zero mean relay SNR for {bad}: two-hop reachability fails")


def _ratio_sum(num: np.ndarray, denom: np.ndarray) -> float:
    """``sum(num/denom)`` where an underflowed denominator means an infinite term."""
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        terms = np.where(num > 0, num / denom, 0.0)
    return float(np.sum(terms))


def asymptotic_outage_exponent(model: ClassModel, s: float) -> float:
    """``s * sum_c alpha_c (1 - e^{-s/g_0c}) / sum_c' alpha_c' g_c'c e^{-s/g_0c'}``."""
    if s < 0:
        raise AnalyticError(f"s must be >= 0, got {s}")
    g0 = model.station_gains
    _check_denominators((model.alpha * (g0 > 0)) @ model.class_gains)
    if s == 0:
        return 0.0
    denom = (model.alpha * _survival(s, g0)) @ model.class_gains
    with np.errstate(over="ignore"):
        return s * _ratio_sum(model.alpha * _failure(s, g0), denom)


def asymptotic_outage_prob(model: ClassModel, s: float) -> float:
    """Large-K limit of the all-users success probability at threshold ``s``."""
    return math.exp(-asymptotic_outage_exponent(model, s))


def asymptotic_outage_exponent_realized(gm: GainMatrix, s: float) -> float:
    """Per-user form ``s * sum_i (1 - e^{-s/g_0i}) / E[X_i(s)]`` on a realized network."""
    if s < 0:
        raise AnalyticError(f"s must be >= 0, got {s}")
    gamma = gm.gamma
    g0 = gamma[0, 1:]
    _check_denominators((g0 > 0).astype(float) @ gamma[1:, 1:])
    if s == 0:
        return 0.0
    mean_x = _survival(s, g0) @ gamma[1:, 1:]
    with np.errstate(over="ignore"):
        return s * _ratio_sum(_failure(s, g0), mean_x)


def asymptotic_outage_prob_realized(gm: GainMatrix, s: float) -> float:
    return math.exp(-asymptotic_outage_exponent_realized(gm, s))


def outage_snr_taylor(model: ClassModel, eps: float) -> float:
    """Small-eps outage threshold ``sqrt(ln(1/(1-eps)) / sum_c alpha_c / (g_0c * sum_c' alpha_c' g_c'c))``."""
    if not 0 < eps < 1:
        raise AnalyticError(f"eps must lie in (0, 1), got {eps}")
    g0 = model.station_gains
    if np.any(g0 == 0):
        raise AnalyticError("a class without a direct station link; use the exact root solver")
    relay = model.alpha @ model.class_gains
    _check_denominators(relay)
    return math.sqrt(-math.log1p(-eps) / float(np.sum(model.alpha / (g0 * relay))))
