"""Monte Carlo estimation of decoding probabilities for the two-slot scheme.

Three estimators share one random stream layout:

``full``
    samples slot-1 decoding and the slot-2 SNR of every user.
``collapsed``
    samples slot-1 decoding only and integrates the slot-2 Rayleigh fading
    out exactly (conditional success ``exp(-s/X_i)``).
``baseline``
    slot 1 alone.

Trials are cut into fixed-size blocks. Block ``b`` draws from a Philox stream
keyed by ``(seed, b)``, so results depend on ``(inputs, seed, trials)`` and
never on how blocks are scheduled across threads. Slot-1 decoding compares a
per-(trial, user) unit exponential against ``s / gamma_0i``; the same draws
serve every threshold ``s`` (common random numbers), which makes estimates
monotone in ``s``.

All arithmetic runs on gains and thresholds divided by the largest gain and
rounded to 36 mantissa bits. Multiplying every gain and ``s`` by the same
factor therefore reproduces the estimates bit for bit.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
from scipy.stats import binom

from .topology import GainMatrix

__all__ = [
    "SimEstimate",
    "SlotOutcome",
    "derive_seed",
    "estimate",
    "sample_first_slot",
    "sample_slot_outcome",
    "second_slot_snr_mean",
    "simulate_baseline",
    "simulate_collapsed",
    "simulate_full",
]

ESTIMATORS = ("full", "collapsed", "baseline")

_MANTISSA_BITS = 36
# Per-block element budget (trials x users) for the per-user paths.
_BLOCK_ELEMENTS = 1 << 18
_MAX_BLOCK_TRIALS = 4096
_CLASS_BLOCK_TRIALS = 1 << 14


def derive_seed(seed: int, *keys: int) -> int:
    """Child seed for ``(seed, *keys)``; independent of call order."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(block,))))


def _canonical(x, scale: float) -> np.ndarray:
    y = np.asarray(x, dtype=float) / scale
    m, e = np.frexp(y)
    return np.ldexp(np.round(m * 2.0**_MANTISSA_BITS) / 2.0**_MANTISSA_BITS, e)


def _ratio(s: float, gain):
    """``s / gain`` with ``s/0 = inf`` for ``s > 0`` and ``0`` when ``s == 0``."""
    gain = np.asarray(gain, dtype=float)
    if s == 0:
        return np.zeros_like(gain)
    with np.errstate(divide="ignore"):
        return s / gain


@dataclass(frozen=True, eq=False)
class SlotOutcome:
    """Slot-1 decoding indicators and the conditional slot-2 mean SNRs."""

    Z: np.ndarray
    X: np.ndarray


@dataclass(frozen=True, eq=False)
class SimEstimate:
    s: float
    per_user_success: np.ndarray
    mean_success: float
    all_success: float
    stderr_mean: float
    stderr_all: float
    trials: int
    estimator: str

    def failure(self) -> float:
        return 1.0 - self.mean_success

    def to_dict(self) -> dict:
        return {
            "s": self.s,
            "estimator": self.estimator,
            "trials": self.trials,
            "mean_success": self.mean_success,
            "all_success": self.all_success,
            "stderr_mean": self.stderr_mean,
            "stderr_all": self.stderr_all,
            "per_user_success": self.per_user_success.tolist(),
        }


def sample_first_slot(gamma_row0, s: float, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
    """Slot-1 decoding indicators, ``P(Z_i = 1) = exp(-s / gamma_0i)``.

    ``|h_0i|^2`` is exponential with mean ``gamma_0i``, so ``Z_i`` is drawn by
    comparing a unit exponential with ``s / gamma_0i``. Returns a boolean
    array of shape ``(K,)``, or ``(size, K)`` when ``size`` is given.
    """
    if s < 0:
        raise ValueError(f"s must be >= 0, got {s}")
    row = np.asarray(gamma_row0, dtype=float)
    shape = row.shape if size is None else (size,) + row.shape
    return rng.standard_exponential(shape) >= _ratio(s, row)


def second_slot_snr_mean(Z: np.ndarray, gamma_users: np.ndarray) -> np.ndarray:
    """``X_i = sum_j Z_j gamma_ji`` for each row of ``Z``."""
    return Z.astype(float) @ gamma_users


def sample_slot_outcome(gm: GainMatrix, s: float, rng: np.random.Generator) -> SlotOutcome:
    """One slot-1 realization ``Z`` together with the slot-2 mean SNRs ``X``."""
    Z = sample_first_slot(gm.station_gains, s, rng)
    return SlotOutcome(Z=Z, X=second_slot_snr_mean(Z, gm.gamma[1:, 1:]))


def _check(s: float, trials: int) -> None:
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if not (s >= 0 and math.isfinite(s)):
        raise ValueError(f"s must be finite and >= 0, got {s}")


class _Problem:
    """Canonical (scale-free) view of a gain matrix, shared by all s values."""

    def __init__(self, gm: GainMatrix, class_path: bool):
        self.K = gm.K
        scale = gm.g_max
        self.scale = scale if scale > 0 else 1.0
        self.class_path = class_path and gm.is_block
        if self.class_path:
            model = gm.class_model
            self.counts = gm.class_counts
            self.class_of = gm.class_of
            self.g0 = _canonical(model.station_gains, self.scale)
            self.g = _canonical(model.class_gains, self.scale)
            self.block = _CLASS_BLOCK_TRIALS
        else:
            gamma = gm.gamma
            self.g0 = _canonical(gamma[0, 1:], self.scale)
            self.g = _canonical(gamma[1:, 1:], self.scale)
            self.block = max(1, min(_MAX_BLOCK_TRIALS, _BLOCK_ELEMENTS // self.K))


def _user_block(prob: _Problem, s_list, n: int, rng, estimator: str):
    """Per-trial statistics for one block on the per-user path.

    Returns, for each s, (failure sums per user, per-trial mean success,
    per-trial all-success weight).
    """
    E1 = rng.standard_exponential((n, prob.K))
    E2 = rng.standard_exponential((n, prob.K)) if estimator == "full" else None
    out = []
    for s in s_list:
        Z = E1 >= _ratio(s, prob.g0)
        if estimator == "baseline":
            success = Z.astype(float)
            out.append((n - success.sum(axis=0), success.mean(axis=1), Z.all(axis=1).astype(float)))
            continue
        # Trials without a slot-1 decoder have X = 0: every user fails in
        # both slots. Only the remaining rows need the slot-2 arithmetic.
        active = Z.any(axis=1)
        rows = slice(None) if active.all() else active
        Za = Z[rows]
        r = _ratio(s, second_slot_snr_mean(Za, prob.g))
        if estimator == "full":
            success = np.zeros((n, prob.K))
            success[rows] = Za | (E2[rows] >= r)
            out.append((n - success.sum(axis=0), success.mean(axis=1), success.min(axis=1)))
        else:
            fail = np.ones((n, prob.K))
            load = np.full(n, np.inf)
            fail[rows] = np.where(Za, 0.0, -np.expm1(-r))
            load[rows] = np.where(Za, 0.0, r).sum(axis=1)
            out.append((fail.sum(axis=0), 1.0 - fail.mean(axis=1), np.exp(-load)))
    return out


def _class_counts_ppf(u, n, p):
    """Inverse-CDF binomial draws; monotone in ``p`` for fixed ``u``."""
    if p <= 0.0:
        return np.zeros_like(u)
    if p >= 1.0:
        return np.full_like(u, float(n))
    return np.maximum(binom.ppf(u, n, p), 0.0)


def _class_block(prob: _Problem, s_list, n: int, rng):
    """Collapsed statistics from per-class decoder counts, O(C^2) per trial."""
    U = rng.random((n, prob.counts.size))
    out = []
    for s in s_list:
        p = np.exp(-_ratio(s, prob.g0))
        N = np.column_stack([_class_counts_ppf(U[:, c], prob.counts[c], p[c]) for c in range(prob.counts.size)])
        M = prob.counts[None, :] - N
        X = N @ prob.g
        r = _ratio(s, X)
        with np.errstate(invalid="ignore"):
            fail_c = np.where(M > 0, M * -np.expm1(-r), 0.0)
            load = np.where(M > 0, M * r, 0.0).sum(axis=1)
        out.append((fail_c.sum(axis=0), 1.0 - fail_c.sum(axis=1) / prob.K, np.exp(-load)))
    return out


def _stderr(x: np.ndarray) -> float:
    if x.size < 2:
        return 0.0
    return float(np.std(x, ddof=1) / math.sqrt(x.size))


def estimate(
    gm: GainMatrix,
    s_values: Iterable[float],
    trials: int,
    seed: int,
    estimator: str = "collapsed",
    threads: Optional[int] = None,
    class_path: bool = True,
) -> list[SimEstimate]:
    """Estimates at several thresholds from one set of random draws.

    Args:
        gm: Network gains.
        s_values: SNR thresholds (linear).
        trials: Monte Carlo trials per threshold.
        seed: Master seed; the same seed reuses the same draws for every s.
        estimator: One of ``"full"``, ``"collapsed"``, ``"baseline"``.
        threads: Worker threads; ``None`` picks from the CPU count. Never
            changes the result.
        class_path: Use per-class decoder counts for block matrices
            (collapsed estimator only).
    """
    if estimator not in ESTIMATORS:
        raise ValueError(f"unknown estimator {estimator!r}")
    s_values = [float(s) for s in s_values]
    for s in s_values:
        _check(s, trials)
    prob = _Problem(gm, class_path=class_path and estimator == "collapsed")
    s_canon = [float(_canonical(s, prob.scale)) for s in s_values]

    n_blocks = -(-trials // prob.block)
    sizes = [min(prob.block, trials - b * prob.block) for b in range(n_blocks)]

    def run(b):
        rng = _block_rng(seed, b)
        if prob.class_path:
            return _class_block(prob, s_canon, sizes[b], rng)
        return _user_block(prob, s_canon, sizes[b], rng, estimator)

    workers = threads if threads is not None else min(os.cpu_count() or 1, 8)
    if workers > 1 and n_blocks > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            blocks = list(pool.map(run, range(n_blocks)))
    else:
        blocks = [run(b) for b in range(n_blocks)]

    results = []
    for k, s in enumerate(s_values):
        fail_sums = np.sum(np.stack([blk[k][0] for blk in blocks]), axis=0)
        mean_t = np.concatenate([blk[k][1] for blk in blocks])
        all_t = np.concatenate([blk[k][2] for blk in blocks])
        if prob.class_path:
            per_class = 1.0 - fail_sums / (trials * prob.counts)
            per_user = per_class[prob.class_of - 1]
        else:
            per_user = 1.0 - fail_sums / trials
        per_user = np.clip(per_user, 0.0, 1.0)
        per_user.setflags(write=False)
        results.append(
            SimEstimate(
                s=s,
                per_user_success=per_user,
                mean_success=float(np.mean(per_user)),
                all_success=float(np.mean(all_t)),
                stderr_mean=_stderr(mean_t),
                stderr_all=_stderr(all_t),
                trials=trials,
                estimator=estimator,
            )
        )
    return results


def simulate_full(gm: GainMatrix, s: float, trials: int, seed: int, threads: Optional[int] = None) -> SimEstimate:
    """Sample both slots. The slot-2 SNR of user ``i`` is exponential with mean ``X_i``."""
    return estimate(gm, [s], trials, seed, "full", threads)[0]


def simulate_collapsed(
    gm: GainMatrix,
    s: float,
    trials: int,
    seed: int,
    threads: Optional[int] = None,
    class_path: bool = True,
) -> SimEstimate:
    """Sample slot 1 only and average the exact slot-2 conditional probabilities.

    Per trial, user ``i`` fails with probability ``(1-Z_i)(1-exp(-s/X_i))``
    and everyone succeeds with probability ``exp(-s * sum_i (1-Z_i)/X_i)``.
    Block matrices use per-class binomial decoder counts unless
    ``class_path`` is false.
    """
    return estimate(gm, [s], trials, seed, "collapsed", threads, class_path)[0]


def simulate_baseline(gm: GainMatrix, s: float, trials: int, seed: int, threads: Optional[int] = None) -> SimEstimate:
    """Slot-1-only scheme: user ``i`` succeeds iff ``Z_i = 1``."""
    return estimate(gm, [s], trials, seed, "baseline", threads)[0]
