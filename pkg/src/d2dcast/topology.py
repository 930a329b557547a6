"""Network topologies: the class (block) model and the geometric disk cell.

Every constructor here returns a :class:`GainMatrix`, the table of mean
channel gains ``gamma[i, j] = E|h_{i,j}|^2`` with index 0 for the station.
Gains are linear and relative to unit noise power.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "ClassModel",
    "GainMatrix",
    "PathlossParams",
    "TopologyError",
    "apportion",
    "block_gain_matrix",
    "db_to_linear",
    "geometric_gain_matrix",
    "validate_two_hop",
]


class TopologyError(ValueError):
    """Raised for malformed class models or impossible user assignments."""


def db_to_linear(x_db):
    """Convert a dB value (scalar or array) to linear scale, ``10**(x/10)``."""
    if np.ndim(x_db) == 0:
        return float(10.0 ** (float(x_db) / 10.0))
    return np.power(10.0, np.asarray(x_db, dtype=float) / 10.0)


@dataclass(frozen=True)
class ClassModel:
    """Block model: ``C`` user classes with proportions and class-level gains.

    Attributes:
        alpha: Length-C proportions, strictly positive, summing to one.
        g: ``(C+1, C+1)`` linear gain matrix. Row 0 holds station-to-class
            gains; ``g[1:, 1:]`` holds class-to-class gains. Column 0 is unused.
    """

    alpha: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        alpha = np.array(self.alpha, dtype=float).reshape(-1)
        g = np.array(self.g, dtype=float)
        C = alpha.size
        if C < 1:
            raise TopologyError("a class model needs at least one class")
        if g.shape != (C + 1, C + 1):
            raise TopologyError(f"g must be {(C + 1, C + 1)}, got {g.shape}")
        if np.any(alpha <= 0) or abs(alpha.sum() - 1.0) > 1e-12:
            raise TopologyError(f"alpha must be positive and sum to 1, got {alpha.tolist()}")
        if not np.all(np.isfinite(g)) or np.any(g < 0):
            raise TopologyError("gains must be finite and non-negative")
        if not np.any(g[0, 1:] > 0):
            raise TopologyError("the station must reach at least one class")
        alpha.setflags(write=False)
        g.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "g", g)

    @classmethod
    def from_db(cls, alpha: Sequence[float], g_db) -> "ClassModel":
        """Build from a gain matrix in dB; ``-inf`` entries become zero gain."""
        return cls(alpha=np.asarray(alpha, dtype=float), g=db_to_linear(np.asarray(g_db, dtype=float)))

    @property
    def C(self) -> int:
        return int(self.alpha.size)

    @property
    def g_max(self) -> float:
        return float(self.g.max())

    @property
    def station_gains(self) -> np.ndarray:
        """Station-to-class gains ``g[0, 1:]``."""
        return self.g[0, 1:]

    @property
    def class_gains(self) -> np.ndarray:
        """Class-to-class gains ``g[1:, 1:]`` (transmitter class on rows)."""
        return self.g[1:, 1:]

    def scaled(self, lam: float) -> "ClassModel":
        return ClassModel(alpha=self.alpha, g=self.g * lam)


@dataclass(frozen=True)
class PathlossParams:
    """Log-distance path loss ``rho - intercept_loss - slope*log10(d_km)`` in dB."""

    station_power_dB: float = 46.0
    user_power_dB: float = 23.0
    intercept_dB: float = -128.0
    slope: float = 36.4
    min_distance_km: float = 0.001

    def __post_init__(self):
        if not self.slope > 0:
            raise TopologyError(f"slope must be positive, got {self.slope}")
        if not self.min_distance_km > 0:
            raise TopologyError(f"min_distance_km must be positive, got {self.min_distance_km}")

    def gain_db(self, transmitter_is_station, d_km):
        rho = np.where(transmitter_is_station, self.station_power_dB, self.user_power_dB)
        d = np.maximum(d_km, self.min_distance_km)
        return rho + self.intercept_dB - self.slope * np.log10(d)


@dataclass(frozen=True, eq=False)
class GainMatrix:
    """Mean channel gains for one realized network of ``K`` users.

    Block-structured matrices keep only the class labels and the class-level
    gains, so a network of a million users costs a few megabytes. The dense
    ``gamma`` is built on first access.

    Attributes:
        K: Number of users.
        class_of: Optional length-K array of 1-based class labels.
        class_model: The :class:`ClassModel` behind ``class_of``, if any.
    """

    K: int
    _dense: Optional[np.ndarray] = field(default=None, repr=False)
    class_of: Optional[np.ndarray] = field(default=None, repr=False)
    class_model: Optional[ClassModel] = field(default=None, repr=False)

    def __post_init__(self):
        if self.K < 1:
            raise TopologyError(f"K must be >= 1, got {self.K}")
        if self._dense is None and self.class_of is None:
            raise TopologyError("either a dense matrix or class labels are required")
        if self._dense is not None:
            dense = np.array(self._dense, dtype=float)
            if dense.shape != (self.K + 1, self.K + 1):
                raise TopologyError(f"gamma must be {(self.K + 1, self.K + 1)}, got {dense.shape}")
            if not np.all(np.isfinite(dense)) or np.any(dense < 0):
                raise TopologyError("gains must be finite and non-negative")
            idx = np.arange(1, self.K + 1)
            dense[idx, idx] = 0.0
            dense.setflags(write=False)
            object.__setattr__(self, "_dense", dense)
        if self.class_of is not None:
            labels = np.asarray(self.class_of, dtype=np.int64)
            if labels.shape != (self.K,):
                raise TopologyError("class_of must have one entry per user")
            labels.setflags(write=False)
            object.__setattr__(self, "class_of", labels)

    @classmethod
    def from_dense(cls, gamma) -> "GainMatrix":
        gamma = np.asarray(gamma, dtype=float)
        return cls(K=gamma.shape[0] - 1, _dense=gamma)

    @property
    def is_block(self) -> bool:
        return self.class_model is not None and self.class_of is not None

    @property
    def gamma(self) -> np.ndarray:
        """Dense ``(K+1, K+1)`` gain matrix, station at index 0."""
        if self._dense is None:
            g = self.class_model.g
            labels = np.concatenate(([0], self.class_of))
            dense = g[np.ix_(labels, labels)].copy()
            idx = np.arange(1, self.K + 1)
            dense[idx, idx] = 0.0
            dense[:, 0] = 0.0
            dense.setflags(write=False)
            object.__setattr__(self, "_dense", dense)
        return self._dense

    @property
    def station_gains(self) -> np.ndarray:
        """Length-K vector of station-to-user gains ``gamma[0, 1:]``."""
        if self._dense is None:
            return self.class_model.g[0, self.class_of]
        return self._dense[0, 1:]

    @property
    def class_counts(self) -> np.ndarray:
        """Users per class (block matrices only)."""
        return np.bincount(self.class_of - 1, minlength=self.class_model.C)

    @property
    def g_max(self) -> float:
        if self.is_block and self._dense is None:
            return self.class_model.g_max
        return float(self.gamma.max())

    def scaled(self, lam: float) -> "GainMatrix":
        """Every mean gain multiplied by ``lam``."""
        if self.is_block:
            return GainMatrix(K=self.K, class_of=self.class_of, class_model=self.class_model.scaled(lam))
        return GainMatrix(K=self.K, _dense=self.gamma * lam)


def apportion(K: int, alpha: Sequence[float]) -> np.ndarray:
    """Largest-remainder split of ``K`` users over proportions ``alpha``.

    Ties in the remainders go to the lower class index.
    """
    quotas = K * np.asarray(alpha, dtype=float)
    counts = np.floor(quotas).astype(np.int64)
    leftover = K - int(counts.sum())
    if leftover > 0:
        order = np.argsort(-(quotas - counts), kind="stable")
        counts[order[:leftover]] += 1
    return counts


def block_gain_matrix(model: ClassModel, K: int) -> GainMatrix:
    """Assign ``K`` users to classes in proportion ``alpha`` (users 1.. of class 1 first).

    Raises:
        TopologyError: if ``K < 1`` or some class ends up with no users.
    """
    if K < 1:
        raise TopologyError(f"K must be >= 1, got {K}")
    counts = apportion(K, model.alpha)
    if np.any(counts == 0):
        empty = [c + 1 for c in np.flatnonzero(counts == 0)]
        raise TopologyError(f"K={K} leaves classes {empty} without users")
    labels = np.repeat(np.arange(1, model.C + 1), counts)
    return GainMatrix(K=K, class_of=labels, class_model=model)


def geometric_gain_matrix(radius_m: float, K: int, params: PathlossParams, seed: int) -> GainMatrix:
    """Drop ``K`` users uniformly in a disk around a central station.

    Distances are floored at ``params.min_distance_km`` before the path-loss
    law is applied. The draw is a pure function of ``seed``.
    """
    if not radius_m > 0:
        raise TopologyError(f"radius must be positive, got {radius_m}")
    if K < 1:
        raise TopologyError(f"K must be >= 1, got {K}")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    u = rng.random((K, 2))
    r = radius_m * np.sqrt(u[:, 0])
    theta = 2.0 * np.pi * u[:, 1]
    pts = np.zeros((K + 1, 2))
    pts[1:, 0] = r * np.cos(theta)
    pts[1:, 1] = r * np.sin(theta)

    d_km = np.hypot(pts[:, None, 0] - pts[None, :, 0], pts[:, None, 1] - pts[None, :, 1]) / 1000.0
    from_station = (np.arange(K + 1) == 0)[:, None]
    gamma = db_to_linear(params.gain_db(from_station, d_km))
    gamma[np.diag_indices(K + 1)] = 0.0
    return GainMatrix(K=K, _dense=gamma)


def validate_two_hop(model: ClassModel) -> list[int]:
    """Classes (1-based) that no relay class can reach in two hops.

    An empty list means every class ``c`` has some ``c'`` with
    ``g[0, c'] * g[c', c] > 0``.
    """
    reach = (model.station_gains[:, None] * model.class_gains) > 0
    return [c + 1 for c in range(model.C) if not reach[:, c].any()]
