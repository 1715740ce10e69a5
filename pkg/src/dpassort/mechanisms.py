"""Randomized response, Laplace noise and related primitives.

Every randomized function draws from an :class:`RngStream`, a counter-based
stream addressed by ``(seed, run, trial, role, user)``. Streams with distinct
addresses are independent; the same address always reproduces the same draws.
"""

from __future__ import annotations

import contextlib
import hashlib
import math
import os
import struct
from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateChannelError, ParameterError, TestModeError, UnsupportedOrderError

TEST_MODE_ENV = "DPASSORT_TEST_MODE"
MAX_MOMENT_ORDER = 8

_test_mode = os.environ.get(TEST_MODE_ENV, "") not in ("", "0")


def test_mode_enabled() -> bool:
    return _test_mode


@contextlib.contextmanager
def test_mode(enabled: bool = True):
    """Temporarily allow noiseless parameters (``p = 0``, Laplace scale 0)."""
    global _test_mode
    previous = _test_mode
    _test_mode = enabled
    try:
        yield
    finally:
        _test_mode = previous


test_mode.__test__ = False  # keep pytest from collecting it


def require_test_mode(what: str) -> None:
    if not _test_mode:
        raise TestModeError(f"{what} is only available in test mode (set {TEST_MODE_ENV}=1)")


@dataclass(frozen=True)
class RngStream:
    """Address of an independent random stream.

    ``user = -1`` denotes a role-level stream whose draws are consumed in
    user order, so user ``i`` always receives the same slice.
    """

    seed: int
    run: int = 0
    trial: int = 0
    role: str = ""
    user: int = -1

    def child(self, role: str | None = None, user: int | None = None, trial: int | None = None) -> "RngStream":
        changes = {}
        if role is not None:
            changes["role"] = role
        if user is not None:
            changes["user"] = user
        if trial is not None:
            changes["trial"] = trial
        return replace(self, **changes)

    def key(self) -> tuple[int, int]:
        h = hashlib.blake2b(digest_size=16, person=b"dpassort-rng")
        h.update(struct.pack("<QqqQ", self.seed & (2**64 - 1), self.run, self.trial, self.user & (2**64 - 1)))
        h.update(self.role.encode())
        a, b = struct.unpack("<QQ", h.digest())
        return a, b

    def generator(self) -> np.random.Generator:
        a, b = self.key()
        return np.random.Generator(np.random.Philox(key=(a << 64) | b))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise ParameterError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")


# randomized response

def rr_flip_prob(epsilon: float) -> float:
    """Flip probability ``1 / (e^eps + 1)`` of Warner's randomized response."""
    if epsilon < 0 or math.isnan(epsilon):
        raise ParameterError(f"epsilon must be >= 0, got {epsilon}")
    if epsilon > 700:
        return 0.0 if math.isinf(epsilon) else math.exp(-epsilon)
    return 1.0 / (math.exp(epsilon) + 1.0)


@dataclass(frozen=True)
class RRParams:
    epsilon: float
    p: float

    @classmethod
    def from_epsilon(cls, epsilon: float) -> "RRParams":
        p = rr_flip_prob(epsilon)
        if p == 0.0:
            require_test_mode("noiseless randomized response")
        return cls(epsilon=float(epsilon), p=p)

    @classmethod
    def identity(cls) -> "RRParams":
        require_test_mode("noiseless randomized response")
        return cls(epsilon=math.inf, p=0.0)


def rr_perturb(bits, params: RRParams, rng):
    """Keep each bit with probability ``1 - p``, flip it with probability ``p``."""
    gen = as_generator(rng)
    arr = np.asarray(bits)
    if arr.size and not np.all((arr == 0) | (arr == 1)):
        raise ParameterError("randomized response inputs must be 0/1")
    flips = gen.random(arr.shape) < params.p
    out = np.where(flips, 1 - arr, arr).astype(np.int8)
    return int(out) if out.ndim == 0 else out


def rr_debias(noisy_bit, p: float):
    """Unbiased estimate ``(b - p) / (1 - 2p)`` of the true bit."""
    if p == 0.5:
        raise DegenerateChannelError("p = 1/2 (epsilon = 0): randomized response output is independent of the input")
    if np.ndim(noisy_bit):
        noisy_bit = np.asarray(noisy_bit, dtype=np.float64)
    return (noisy_bit - p) / (1.0 - 2.0 * p)


# Laplace

@dataclass(frozen=True)
class LaplaceParams:
    scale: float

    def __post_init__(self):
        if not self.scale >= 0 or math.isinf(self.scale):
            raise ParameterError(f"Laplace scale must be finite and >= 0, got {self.scale}")
        if self.scale == 0:
            require_test_mode("zero-scale Laplace noise")


_U_MAX = 0.5 - 2.0**-54


def laplace_sample(b, rng, size=None):
    """Zero-mean Laplace draw(s) of scale ``b`` by inverting the CDF.

    ``u`` is uniform on ``(-1/2, 1/2)`` and the draw is
    ``-b * sign(u) * log(1 - 2|u|)``. A scale of zero returns exact zeros.
    """
    scale = b.scale if isinstance(b, LaplaceParams) else float(b)
    if scale < 0:
        raise ParameterError("Laplace scale must be >= 0")
    if scale == 0:
        return 0.0 if size is None else np.zeros(size)
    gen = as_generator(rng)
    u = np.clip(gen.random(size) - 0.5, -_U_MAX, _U_MAX)
    x = -scale * np.sign(u) * np.log1p(-2.0 * np.abs(u))
    return float(x) if size is None else x


def laplace_raw_moment(center: float, scale: float, order: int) -> float:
    """``E[X^r]`` for ``X ~ Lap(center, scale)``.

    Only even central terms survive:
    ``sum_k [k even] * r!/(r-k)! * b^k * x^(r-k)``.
    """
    if order < 0 or int(order) != order:
        raise ParameterError("moment order must be a non-negative integer")
    if order > MAX_MOMENT_ORDER:
        raise UnsupportedOrderError(f"moments above order {MAX_MOMENT_ORDER} are not supported")
    if scale < 0:
        raise ParameterError("Laplace scale must be >= 0")
    r = int(order)
    total = 0.0
    for k in range(0, r + 1, 2):
        total += math.perm(r, k) * scale**k * center ** (r - k)
    return total


def tail_upper_bound(noisy_value, scale: float, delta: float):
    """Upper confidence bound ``x~ + b * ln(1 / (2 delta))``, valid w.p. ``1 - delta``."""
    if not scale > 0:
        raise ParameterError("tail bound needs a positive Laplace scale")
    if not 0 < delta < 0.5:
        raise ParameterError(f"delta must lie in (0, 1/2), got {delta}")
    return noisy_value + scale * math.log(1.0 / (2.0 * delta))
