"""One-dimensional searches over the SNR threshold ``s``.

Rate maximisation uses a log-spaced grid followed by golden-section
refinement; outage thresholds come from bisection on a decreasing
success curve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from . import analytic
from .mc_engine import estimate
from .topology import ClassModel, GainMatrix

__all__ = [
    "SchemeEval",
    "SolverError",
    "bisect_decreasing",
    "default_s_max",
    "golden_section_max",
    "maximize_effective_rate",
    "solve_outage_snr_asymptotic",
    "solve_outage_snr_mc",
]

S_MIN = 1e-6
INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class SolverError(RuntimeError):
    """A search could not bracket or certify its answer."""


@dataclass(frozen=True)
class SchemeEval:
    """One operating point: threshold, nominal rate and its paired probability.

    ``rate`` is ``prefactor * log2(1 + s)`` (prefactor 1/2 for the two-slot
    scheme, 1 for the baseline). For the multicast metric the figure of merit
    is :attr:`effective_rate`; for the outage metric it is ``rate`` itself.
    """

    s: float
    rate: float
    probability: float
    source: str = "analytic"
    stderr: float = 0.0
    residual: float = 0.0

    def __post_init__(self):
        if self.s < 0 or self.rate < 0:
            raise ValueError(f"negative s or rate: {self}")
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError(f"probability outside [0, 1]: {self.probability}")

    @property
    def prefactor(self) -> float:
        return self.rate / math.log2(1.0 + self.s) if self.s > 0 else float("nan")

    @property
    def effective_rate(self) -> float:
        return self.rate * self.probability

    def to_dict(self) -> dict:
        return {
            "s": self.s,
            "rate": self.rate,
            "probability": self.probability,
            "effective_rate": self.effective_rate,
            "source": self.source,
            "stderr": self.stderr,
            "residual": self.residual,
        }


def default_s_max(station_gains) -> float:
    return 1e3 * float(np.max(station_gains)) * math.log(2.0)


def golden_section_max(f: Callable[[float], float], a: float, b: float, tol: float):
    """Maximise a unimodal ``f`` on ``[a, b]`` until the bracket is narrower than ``tol``.

    Returns ``(x, f(x))`` for the best point evaluated.
    """
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    best = (c, fc) if fc >= fd else (d, fd)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
            if fc > best[1]:
                best = (c, fc)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
            if fd > best[1]:
                best = (d, fd)
    return best


def maximize_effective_rate(
    objective: Callable[[float], float],
    prefactor: float = 0.5,
    s_max: float = 1e6,
    grid_points: int = 256,
    tol: float = 1e-6,
    source: str = "analytic",
    require_interior: bool = False,
    batch: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> SchemeEval:
    """Maximise ``prefactor * log2(1+s) * objective(s)`` over ``[S_MIN, s_max]``.

    A log-spaced grid locates the best cell (ties go to the smallest s); a
    golden-section search then refines inside the neighbouring cells. The
    result is never worse than the best grid point.

    Args:
        objective: Success probability as a function of ``s``.
        tol: Final bracket width, relative to the refined cell's upper end.
        require_interior: Raise if the best grid point is ``s_max``, i.e. the
            objective is not yet decreasing there.
        batch: Optional vectorised objective used for the grid pass.
    """
    if grid_points < 16:
        raise ValueError(f"grid_points must be >= 16, got {grid_points}")
    if not s_max > S_MIN:
        raise ValueError(f"s_max must exceed {S_MIN}, got {s_max}")
    grid = np.geomspace(S_MIN, s_max, grid_points)
    probs = np.asarray(batch(grid) if batch is not None else [objective(float(s)) for s in grid], dtype=float)
    if not np.all(np.isfinite(probs)):
        raise SolverError("objective returned non-finite values")
    values = prefactor * np.log2(1.0 + grid) * probs
    i = int(np.argmax(values))
    if require_interior and i == grid_points - 1:
        raise SolverError(f"objective still increasing at s_max={s_max:g}; raise s_max")

    def f(s):
        p = objective(s)
        if not math.isfinite(p):
            raise SolverError(f"objective returned {p} at s={s}")
        return prefactor * math.log2(1.0 + s) * p

    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, grid_points - 1)]
    s_best, v_best = float(grid[i]), float(values[i])
    if hi > lo:
        s_ref, v_ref = golden_section_max(f, float(lo), float(hi), tol * float(hi))
        if v_ref > v_best:
            s_best, v_best = float(s_ref), v_ref
    p_best = float(np.clip(objective(s_best), 0.0, 1.0))
    return SchemeEval(s=s_best, rate=prefactor * math.log2(1.0 + s_best), probability=p_best, source=source)


def bisect_decreasing(f: Callable[[float], float], target: float, lo: float, hi: float, rtol: float):
    """Root of a non-increasing ``f`` with ``f(lo) >= target > f(hi)``.

    Halves the bracket until ``hi - lo <= rtol * hi``, asserting at every
    step that the endpoints still straddle the target. Returns ``(lo, hi)``.
    """
    f_lo, f_hi = f(lo), f(hi)
    if not (f_lo >= target > f_hi):
        raise SolverError(f"bracket [{lo:g}, {hi:g}] does not straddle {target}")
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        f_mid = f(mid)
        if f_mid > f_lo or f_mid < f_hi:
            raise SolverError(f"objective not monotone near s={mid:g}")
        if f_mid >= target:
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
        assert f_lo >= target > f_hi
    return lo, hi


def _bracket(f: Callable[[float], float], target: float, start: float, max_doublings: int):
    hi = start
    for _ in range(max_doublings):
        if f(hi) < target:
            lo = hi / 2.0 if hi > start else 0.0
            return lo, hi
        hi *= 2.0
    raise SolverError(f"could not bracket the root within {max_doublings} doublings (hi={hi:g})")


def solve_outage_snr_asymptotic(
    model: Union[ClassModel, GainMatrix], eps: float, tol: float = 1e-6, max_doublings: int = 200
) -> SchemeEval:
    """Threshold where the large-K all-success probability equals ``1 - eps``.

    Accepts a class model, or a realized gain matrix for the per-user form.
    ``residual`` holds ``|P(s) - (1 - eps)|`` at the returned ``s``.
    """
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if isinstance(model, GainMatrix):
        f = lambda s: analytic.asymptotic_outage_prob_realized(model, s)
    else:
        f = lambda s: analytic.asymptotic_outage_prob(model, s)
    target = 1.0 - eps
    lo, hi = _bracket(f, target, 1.0, max_doublings)
    lo, hi = bisect_decreasing(f, target, lo, hi, tol)
    s = 0.5 * (lo + hi)
    p = f(s)
    return SchemeEval(s=s, rate=0.5 * math.log2(1.0 + s), probability=p, source="analytic", residual=abs(p - target))


def solve_outage_snr_mc(
    gm: GainMatrix,
    eps: float,
    trials: int,
    seed: int,
    tol: float = 1e-3,
    estimator: str = "collapsed",
    threads: Optional[int] = None,
    max_doublings: int = 200,
) -> SchemeEval:
    """Monte Carlo outage threshold by bisection under common random numbers.

    The search runs on ``s / g_max`` so that scaling every gain by ``lam``
    scales the returned threshold by ``lam``.

    Raises:
        SolverError: if the all-success standard error at the root is not
            below ``eps / 4``.
    """
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    scale = gm.g_max if gm.g_max > 0 else 1.0
    prefactor = 1.0 if estimator == "baseline" else 0.5
    cache: dict[float, object] = {}

    def run(u):
        if u not in cache:
            cache[u] = estimate(gm, [u * scale], trials, seed, estimator, threads)[0]
        return cache[u]

    f = lambda u: run(u).all_success
    target = 1.0 - eps
    lo, hi = _bracket(f, target, 2.0**-20, max_doublings)
    lo, hi = bisect_decreasing(f, target, lo, hi, tol)
    u = lo if lo > 0 else hi
    est = run(u)
    if not est.stderr_all < eps / 4:
        raise SolverError(
            f"stderr {est.stderr_all:.3g} of the all-success estimate exceeds eps/4; increase trials above {trials}"
        )
    s = u * scale
    return SchemeEval(
        s=s,
        rate=prefactor * math.log2(1.0 + s),
        probability=float(est.all_success),
        source="mc",
        stderr=est.stderr_all,
        residual=abs(est.all_success - target),
    )
