"""Private estimators of the assortativity factor.

Each protocol is simulated with its roles kept apart: per-user randomizers
see only their own neighbour list (or 2-hop view), the shuffler sees only the
reports it permutes, and the collector sees only what is sent to it. Every
role draws from its own :class:`RngStream`.

All three estimators share the collector-side form ``q = X/M - Y/M^2`` where
``X`` estimates ``sum_edges d_i d_j`` and ``Y`` estimates
``(1/2 sum_i d_i^2)^2``.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import amplification
from .errors import DegenerateChannelError, ParameterError
from .graph import Graph
from .mechanisms import (
    RngStream,
    laplace_sample,
    require_test_mode,
    rr_flip_prob,
    tail_upper_bound,
)

logger = logging.getLogger(__name__)

ALGORITHMS = ("local", "shuffle", "decentral")

DELTA_FLOOR = 2.0
# lower-triangle entries randomized per block; bounds peak memory
_RR_BLOCK = 1 << 22


@dataclass(frozen=True)
class BudgetSpec:
    epsilon: float
    eps1: float | None = None
    eps2: float | None = None
    alpha: float | None = None
    delta: float = 0.0

    def __post_init__(self):
        if self.epsilon < 0:
            raise ParameterError("epsilon must be >= 0")
        if not 0 <= self.delta <= 1:
            raise ParameterError("delta must lie in [0, 1]")
        if (self.eps1 is None) != (self.eps2 is None):
            raise ParameterError("eps1 and eps2 must be given together")
        if self.eps1 is not None:
            if self.eps1 < 0 or self.eps2 < 0:
                raise ParameterError("eps1 and eps2 must be >= 0")
            if not math.isclose(self.eps1 + self.eps2, self.epsilon, rel_tol=1e-12, abs_tol=1e-12):
                raise ParameterError(f"eps1 + eps2 = {self.eps1 + self.eps2} != epsilon = {self.epsilon}")
        if self.alpha is not None and not 0 < self.alpha < 1:
            raise ParameterError(f"alpha must lie in (0, 1), got {self.alpha}")

    @property
    def delta1(self) -> float:
        return self.delta / 2

    @classmethod
    def local(cls, epsilon: float, eps1_fraction: float = 0.6) -> "BudgetSpec":
        return cls(epsilon=epsilon, eps1=eps1_fraction * epsilon, eps2=epsilon - eps1_fraction * epsilon)

    @classmethod
    def shuffle(cls, epsilon: float, delta: float = 1e-8, alpha: float = 0.4) -> "BudgetSpec":
        return cls(epsilon=epsilon, alpha=alpha, delta=delta)

    @classmethod
    def decentral(cls, epsilon: float, delta: float = 1e-8, eps1_fraction: float = 0.4) -> "BudgetSpec":
        return cls(epsilon=epsilon, eps1=eps1_fraction * epsilon,
                   eps2=epsilon - eps1_fraction * epsilon, delta=delta)

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


@dataclass(frozen=True)
class DecentralArtifacts:
    noisy_degrees: np.ndarray
    degree_bounds: np.ndarray
    sensitivity: float
    noisy_neighbor_sums: np.ndarray
    floored: bool = False


@dataclass(frozen=True)
class Estimate:
    q_hat: float
    X: float
    Y: float
    algorithm: str
    budgets: BudgetSpec
    seed: int | None
    M_used: int
    wall_time: float = 0.0
    epsilon0: float | None = None
    sensitivity: float | None = None
    artifacts: DecentralArtifacts | None = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        out = {
            "algorithm": self.algorithm,
            "q_hat": self.q_hat,
            "X": self.X,
            "Y": self.Y,
            "M_used": self.M_used,
            "seed": self.seed,
            "budgets": self.budgets.to_dict(),
        }
        if self.epsilon0 is not None:
            out["epsilon0"] = self.epsilon0
        if self.sensitivity is not None:
            out["sensitivity"] = self.sensitivity
        return out


def _combine(X: float, Y: float, M: int) -> float:
    return X / M - Y / (M * M)


def _square_sum_estimate(noisy_degrees: np.ndarray, scale: float) -> float:
    """Unbiased estimate of ``(1/2 sum d_i^2)^2`` from ``d~_i = d_i + Lap(scale)``."""
    n = noisy_degrees.size
    b2 = scale * scale
    half_sq = 0.5 * math.fsum(noisy_degrees * noisy_degrees)
    return (half_sq - (n + 2) * b2) ** 2 - (5 * n + 4) * b2 * b2


def _check_graph(g: Graph, M_used: int) -> None:
    if g.n < 2:
        raise ParameterError("need at least two users")
    if M_used < 1:
        raise ParameterError("edge count M must be >= 1")


def randomized_row_sums(g: Graph, p: float, weights: np.ndarray, gen: np.random.Generator) -> np.ndarray:
    """Per-user debiased sums ``s_i = sum_{j<i} (a~_ij - p) w_j / (1 - 2p)``.

    User ``i`` randomizes the bits ``a_i0 .. a_i,i-1`` of its own row with flip
    probability ``p``. Rows are processed in order and each row's uniforms are
    consecutive draws of ``gen``, so the result does not depend on the block
    size.
    """
    if p == 0.5:
        raise DegenerateChannelError("randomized response with p = 1/2 cannot be debiased")
    n = g.n
    w = np.asarray(weights, dtype=np.float64)
    edge_pos = g.lower_flat_index()
    cum_w = np.concatenate(([0.0], np.cumsum(w)))
    sums = np.zeros(n, dtype=np.float64)
    row = 1
    while row < n:
        start = row * (row - 1) // 2
        stop_row = row
        # grow the block while it stays under the size limit
        while stop_row < n and (stop_row + 1) * stop_row // 2 - start <= _RR_BLOCK:
            stop_row += 1
        if stop_row == row:
            stop_row = row + 1
        end = stop_row * (stop_row - 1) // 2
        length = end - start
        noisy = (gen.random(length) < p).astype(np.float64) if p > 0 else np.zeros(length)
        lo, hi = np.searchsorted(edge_pos, [start, end])
        hits = edge_pos[lo:hi] - start
        noisy[hits] = 1.0 - noisy[hits]
        rows = np.arange(row, stop_row)
        offsets = rows * (rows - 1) // 2 - start
        cols = np.arange(length) - np.repeat(offsets, rows)
        kept = np.add.reduceat(noisy * w[cols], offsets)
        sums[row:stop_row] = kept - p * cum_w[row:stop_row]
        row = stop_row
    return sums / (1.0 - 2.0 * p)


# Local: one round, RR on the adjacency lower triangle + Laplace degrees

def local_ru(g: Graph, budgets: BudgetSpec, rng: RngStream, *, m_override: int | None = None,
             noiseless: bool = False) -> Estimate:
    t0 = time.perf_counter()
    M = g.M if m_override is None else int(m_override)
    _check_graph(g, M)
    if budgets.eps1 is None:
        raise ParameterError("local estimator needs an eps1/eps2 split")
    d = g.degrees.astype(np.float64)
    if noiseless:
        require_test_mode("noiseless estimation")
        p, b = 0.0, 0.0
    else:
        if budgets.eps1 <= 0:
            raise DegenerateChannelError("eps1 = 0 makes the randomized adjacency bits uninformative")
        if budgets.eps2 <= 0:
            raise ParameterError("eps2 must be > 0")
        p, b = rr_flip_prob(budgets.eps1), 1.0 / budgets.eps2

    # users
    noisy_deg = d + laplace_sample(b, rng.child(role="degree"), size=g.n)
    row_sums = randomized_row_sums(g, p, noisy_deg, rng.child(role="rr").generator())

    # collector
    X = math.fsum(noisy_deg * row_sums)
    Y = _square_sum_estimate(noisy_deg, b)
    return Estimate(q_hat=_combine(X, Y, M), X=X, Y=Y, algorithm="local", budgets=budgets,
                    seed=rng.seed, M_used=M, wall_time=time.perf_counter() - t0)


# Shuffle: two rounds, shuffled per-user reports with amplification

def shuffler_permutation(rng: RngStream, size: int) -> np.ndarray:
    """Uniformly random permutation drawn from the trial's shuffler stream."""
    return rng.child(role="shuffler").generator().permutation(size)


def shuffle_ru(g: Graph, epsilon: float, delta: float, alpha: float, rng: RngStream,
               bound_mode: str = "closed_form", *, bound: amplification.TabulatedBound | None = None,
               permutation=None, m_override: int | None = None, noiseless: bool = False) -> Estimate:
    t0 = time.perf_counter()
    budgets = BudgetSpec.shuffle(epsilon, delta=delta, alpha=alpha)
    M = g.M if m_override is None else int(m_override)
    _check_graph(g, M)
    if bound_mode not in ("closed_form", "external_numerical"):
        raise ParameterError(f"unknown bound mode {bound_mode!r}")
    if bound_mode == "external_numerical" and bound is None:
        raise ParameterError("external_numerical bound mode needs a lookup table")
    n = g.n
    d = g.degrees.astype(np.float64)

    if noiseless:
        require_test_mode("noiseless estimation")
        eps0, p, b = None, 0.0, 0.0
    else:
        eps0 = amplification.local_budget_for(n, epsilon, delta, bound if bound_mode != "closed_form" else None)
        p, b = rr_flip_prob((1.0 - alpha) * eps0), 1.0 / (alpha * eps0)

    # round 1: users send Laplace-noised degrees to the collector
    noisy_deg = d + laplace_sample(b, rng.child(role="degree"), size=n)
    # round 2: collector broadcasts noisy degrees; each user i >= 1 reports
    # r_i = d_i * sum_{j<i} (a~_ij - p) d~_j / (1 - 2p)
    broadcast = noisy_deg.copy()
    reports = (d * randomized_row_sums(g, p, broadcast, rng.child(role="rr").generator()))[1:]

    # shuffler
    if permutation is None:
        permutation = shuffler_permutation(rng, reports.size)
    else:
        permutation = np.asarray(permutation)
        if not np.array_equal(np.sort(permutation), np.arange(reports.size)):
            raise ParameterError("forced permutation must permute the n-1 reports")
    shuffled = reports[permutation]

    # collector: correctly rounded sum, hence independent of the permutation
    X = math.fsum(shuffled)
    Y = _square_sum_estimate(noisy_deg, b)
    return Estimate(q_hat=_combine(X, Y, M), X=X, Y=Y, algorithm="shuffle", budgets=budgets,
                    seed=rng.seed, M_used=M, wall_time=time.perf_counter() - t0, epsilon0=eps0)


# Decentral: users know their 2-hop extended local view

def _sorted_desc(values: np.ndarray) -> np.ndarray:
    """Indices ordering ``values`` descending, ties by ascending index."""
    return np.lexsort((np.arange(values.size), -values))


def decentral_sensitivity(noisy_degrees: np.ndarray, degree_bounds: np.ndarray) -> tuple[float, bool]:
    """Sensitivity ``2 (d*_[1] + d*_[2])`` of the neighbour-degree sums, floored at 2."""
    order = _sorted_desc(degree_bounds)
    sens = 2.0 * (degree_bounds[order[0]] + degree_bounds[order[1]])
    if sens <= 0:
        logger.warning("noisy degree bounds give sensitivity %.3f <= 0; using %.1f", sens, DELTA_FLOOR)
        return DELTA_FLOOR, True
    return float(sens), False


def decentral_degree_round(g: Graph, eps1: float, delta: float, rng: RngStream, *, noiseless: bool = False):
    """First round: noisy degrees and their tail upper bounds."""
    d = g.degrees.astype(np.float64)
    if noiseless:
        require_test_mode("noiseless estimation")
        return d.copy(), d.copy()
    if eps1 <= 0:
        raise ParameterError("eps1 must be > 0")
    if not 0 < delta < 1:
        raise ParameterError("delta must lie in (0, 1)")
    b = 2.0 / eps1
    noisy = d + laplace_sample(b, rng.child(role="degree"), size=g.n)
    return noisy, tail_upper_bound(noisy, b, delta / 2)


def decentral_ru(g: Graph, budgets: BudgetSpec, rng: RngStream, *, m_override: int | None = None,
                 noiseless: bool = False) -> Estimate:
    t0 = time.perf_counter()
    M = g.M if m_override is None else int(m_override)
    _check_graph(g, M)
    if budgets.eps1 is None:
        raise ParameterError("decentral estimator needs an eps1/eps2 split")
    if not noiseless and budgets.eps2 <= 0:
        raise ParameterError("eps2 must be > 0")

    noisy_deg, bounds = decentral_degree_round(g, budgets.eps1, budgets.delta, rng, noiseless=noiseless)
    b = 0.0 if noiseless else 2.0 / budgets.eps1

    # collector fixes the noise scale for the second round
    sens, floored = decentral_sensitivity(noisy_deg, bounds)

    # users: neighbour-degree sums from their 2-hop views
    T = g.neighbor_degree_sums().astype(np.float64)
    t_scale = 0.0 if noiseless else sens / budgets.eps2
    noisy_T = T + laplace_sample(t_scale, rng.child(role="neighbor_sum"), size=g.n)

    X = 0.5 * math.fsum(noisy_deg * noisy_T)
    Y = _square_sum_estimate(noisy_deg, b)
    artifacts = DecentralArtifacts(noisy_degrees=noisy_deg, degree_bounds=bounds, sensitivity=sens,
                                   noisy_neighbor_sums=noisy_T, floored=floored)
    return Estimate(q_hat=_combine(X, Y, M), X=X, Y=Y, algorithm="decentral", budgets=budgets,
                    seed=rng.seed, M_used=M, wall_time=time.perf_counter() - t0,
                    sensitivity=sens, artifacts=artifacts)


def estimate(g: Graph, algorithm: str, budgets: BudgetSpec, rng: RngStream, **kwargs) -> Estimate:
    """Dispatch to one of the three estimators."""
    if algorithm == "local":
        return local_ru(g, budgets, rng, **kwargs)
    if algorithm == "decentral":
        return decentral_ru(g, budgets, rng, **kwargs)
    if algorithm == "shuffle":
        if budgets.alpha is None:
            raise ParameterError("shuffle estimator needs alpha")
        return shuffle_ru(g, budgets.epsilon, budgets.delta, budgets.alpha, rng, **kwargs)
    raise ParameterError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")
