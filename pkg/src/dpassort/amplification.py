"""Privacy amplification by shuffling: closed-form bound and its inversion."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .errors import InfeasibleBudgetError, InfeasiblePopulationError, ParameterError

BISECTION_TOL = 1e-9


class AmplificationBound(Protocol):
    """Maps a local budget ``epsilon0`` to the central ``epsilon`` after shuffling."""

    def __call__(self, n: int, epsilon0: float, delta: float) -> float: ...


def _check_delta(delta: float) -> None:
    if not 0 < delta < 1:
        raise ParameterError(f"delta must lie in (0, 1), got {delta}")


def epsilon0_cap(n: int, delta: float) -> float:
    """Largest local budget the closed-form bound admits: ``ln(n / (16 ln(2/delta)))``."""
    _check_delta(delta)
    if n < 1:
        raise ParameterError("n must be >= 1")
    floor = 16.0 * math.log(2.0 / delta)
    if n <= floor:
        raise InfeasiblePopulationError(
            f"shuffle bound needs n > 16 ln(2/delta) = {floor:.1f} users, got n={n}"
        )
    return math.log(n / floor)


def _closed_form(n: int, epsilon0: float, delta: float) -> float:
    e0 = math.exp(epsilon0)
    spread = 8.0 * math.sqrt(e0 * math.log(4.0 / delta)) / math.sqrt(n) + 8.0 * e0 / n
    return math.log1p(math.tanh(epsilon0 / 2.0) * spread)


def amplified_epsilon(n: int, epsilon0: float, delta: float) -> float:
    """Central epsilon of ``n`` shuffled ``epsilon0``-LDP reports (closed form).

    ``ln(1 + (e^e0 - 1)/(e^e0 + 1) * (8 sqrt(e^e0 ln(4/delta)) / sqrt(n) + 8 e^e0 / n))``
    """
    cap = epsilon0_cap(n, delta)
    if not 0 < epsilon0:
        raise ParameterError(f"epsilon0 must be > 0, got {epsilon0}")
    if epsilon0 > cap:
        raise ParameterError(f"epsilon0={epsilon0} exceeds the bound's cap {cap:.6f} for n={n}, delta={delta}")
    return _closed_form(n, epsilon0, delta)


closed_form_bound: AmplificationBound = amplified_epsilon


@dataclass(frozen=True)
class ShuffleBudget:
    n: int
    epsilon0: float
    epsilon: float
    delta: float
    bound_mode: str = "closed_form"


def local_budget_for(n: int, epsilon: float, delta: float, bound: "TabulatedBound | None" = None) -> float:
    """Largest local budget whose amplified epsilon does not exceed ``epsilon``.

    Returns the cap when the cap itself already satisfies the target. With a
    :class:`TabulatedBound` the table is inverted instead of the closed form.
    """
    if bound is not None:
        return bound.local_budget_for(n, epsilon, delta)
    if not epsilon > 0:
        raise InfeasibleBudgetError(f"no local budget reaches epsilon={epsilon}")
    cap = epsilon0_cap(n, delta)
    if _closed_form(n, cap, delta) <= epsilon:
        return cap
    lo, hi = 0.0, cap
    while hi - lo > BISECTION_TOL:
        mid = 0.5 * (lo + hi)
        if _closed_form(n, mid, delta) <= epsilon:
            lo = mid
        else:
            hi = mid
    if lo <= 0:
        raise InfeasibleBudgetError(f"no local budget > 0 reaches epsilon={epsilon}")
    return lo


def shuffle_budget(n: int, epsilon: float, delta: float, bound: "TabulatedBound | None" = None) -> ShuffleBudget:
    eps0 = local_budget_for(n, epsilon, delta, bound)
    if bound is None:
        achieved, mode = _closed_form(n, eps0, delta), "closed_form"
    else:
        achieved, mode = bound(n, eps0, delta), "external_numerical"
    return ShuffleBudget(n=n, epsilon0=eps0, epsilon=achieved, delta=delta, bound_mode=mode)


class TabulatedBound:
    """Amplification bound given as precomputed ``(epsilon0, epsilon)`` pairs.

    Values between table rows are linearly interpolated. A table is valid
    for the single ``(n, delta)`` it was computed for; the arguments are
    checked when those are known.
    """

    def __init__(self, epsilon0, epsilon, n: int | None = None, delta: float | None = None):
        e0 = np.asarray(epsilon0, dtype=np.float64)
        e = np.asarray(epsilon, dtype=np.float64)
        if e0.ndim != 1 or e0.shape != e.shape or e0.size < 2:
            raise ParameterError("lookup table needs at least two (epsilon0, epsilon) rows")
        if np.any(np.diff(e0) <= 0):
            raise ParameterError("lookup table epsilon0 column must be strictly increasing")
        if np.any(np.diff(e) <= 0):
            raise ParameterError("lookup table epsilon column must be strictly increasing")
        if np.any(e0 <= 0) or np.any(e <= 0):
            raise ParameterError("lookup table values must be positive")
        self.epsilon0 = e0
        self.epsilon = e
        self.n = n
        self.delta = delta

    @classmethod
    def from_file(cls, path, n: int | None = None, delta: float | None = None) -> "TabulatedBound":
        """Read rows ``epsilon0,epsilon``; a non-numeric first row is taken as a header."""
        rows = []
        with open(path, newline="", encoding="utf-8") as fh:
            for lineno, row in enumerate(csv.reader(fh), start=1):
                if not row or row[0].lstrip().startswith("#"):
                    continue
                try:
                    rows.append((float(row[0]), float(row[1])))
                except (ValueError, IndexError):
                    if lineno == 1:
                        continue
                    raise ParameterError(f"{path}:{lineno}: malformed lookup-table row {row!r}") from None
        if not rows:
            raise ParameterError(f"{path}: empty lookup table")
        e0, e = zip(*rows)
        return cls(e0, e, n=n, delta=delta)

    def to_file(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epsilon0", "epsilon"])
            for a, b in zip(self.epsilon0, self.epsilon):
                w.writerow([repr(float(a)), repr(float(b))])

    def _check(self, n, delta):
        if self.n is not None and n != self.n:
            raise ParameterError(f"lookup table computed for n={self.n}, asked for n={n}")
        if self.delta is not None and delta != self.delta:
            raise ParameterError(f"lookup table computed for delta={self.delta}, asked for delta={delta}")

    def __call__(self, n: int, epsilon0: float, delta: float) -> float:
        self._check(n, delta)
        if not self.epsilon0[0] <= epsilon0 <= self.epsilon0[-1]:
            raise ParameterError(f"epsilon0={epsilon0} outside the table range")
        return float(np.interp(epsilon0, self.epsilon0, self.epsilon))

    def local_budget_for(self, n: int, epsilon: float, delta: float) -> float:
        self._check(n, delta)
        if epsilon < self.epsilon[0]:
            raise InfeasibleBudgetError(f"epsilon={epsilon} below the smallest tabulated value {self.epsilon[0]}")
        if epsilon >= self.epsilon[-1]:
            return float(self.epsilon0[-1])
        return float(np.interp(epsilon, self.epsilon, self.epsilon0))


def build_lookup_table(n: int, delta: float, points: int = 4001) -> TabulatedBound:
    """Tabulate the closed-form bound on an even grid over ``(0, cap]``."""
    cap = epsilon0_cap(n, delta)
    grid = np.linspace(cap / points, cap, points)
    values = [_closed_form(n, float(x), delta) for x in grid]
    return TabulatedBound(grid, values, n=n, delta=delta)
