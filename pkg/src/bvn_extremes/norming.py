"""Norming constant b_n with 1 - Phi(b_n) = 1/n, and the affine threshold maps."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .gauss_core import DomainError, SQRT2PI, std_normal_cdf, std_normal_quantile, std_normal_sf

N_MAX = 2**63 - 1


@dataclass(frozen=True)
class NormingConstant:
    n: int
    bn: float
    residual: float  # (1 - Phi(bn)) - 1/n


@dataclass(frozen=True)
class EvalPoint:
    """Thresholds (x1, y1) for the minima and (x2, y2) for the maxima."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        for name in ("x1", "y1", "x2", "y2"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise DomainError(f"EvalPoint.{name} must be finite, got {v!r}")

    @classmethod
    def parse(cls, text: str) -> "EvalPoint":
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 4:
            raise ValueError(f"expected 'x1,y1,x2,y2', got {text!r}")
        return cls(*(float(p) for p in parts))

    def as_tuple(self):
        return (self.x1, self.y1, self.x2, self.y2)


def solve_bn(n: int) -> NormingConstant:
    """Root of 1 - Phi(b) = 1/n by safeguarded Newton from the quantile guess.

    Newton works on the upper tail directly, so the residual is controlled
    relative to 1/n even for n ~ 1e18.
    """
    if int(n) != n or n < 2 or n > N_MAX:
        raise DomainError(f"n must be an integer in [2, 2**63-1], got {n!r}")
    n = int(n)
    target = 1.0 / n
    if n == 2:
        return NormingConstant(2, 0.0, 0.0)
    b = float(std_normal_quantile(1.0 - target)) if target > 1e-12 else _tail_guess(target)
    lo, hi = 0.0, 40.0
    for _ in range(100):
        f = float(std_normal_sf(b)) - target
        if f > 0:
            lo = max(lo, b)
        else:
            hi = min(hi, b)
        dens = math.exp(-0.5 * b * b) / SQRT2PI
        step = f / dens
        nb = b + step  # d/db (1 - Phi(b)) = -phi(b)
        if not (lo <= nb <= hi):
            nb = 0.5 * (lo + hi)
        if abs(nb - b) <= 1e-16 * max(1.0, abs(b)):
            b = nb
            break
        b = nb
    return NormingConstant(n, b, float(std_normal_sf(b)) - target)


def _tail_guess(p: float) -> float:
    # 1 - Phi(b) ~ phi(b)/b
    b = math.sqrt(-2.0 * math.log(p))
    for _ in range(5):
        b = math.sqrt(-2.0 * math.log(p * b * SQRT2PI))
    return b


def _check_scale(b: NormingConstant):
    if b.bn == 0.0:
        raise DomainError(f"thresholds b_n + x / b_n are undefined at n={b.n} (b_n = 0)")


def upper_threshold(b: NormingConstant, x):
    """u_n(x) = b_n + x / b_n."""
    _check_scale(b)
    return b.bn + x / b.bn


def lower_threshold(b: NormingConstant, x):
    """v_n(x) = -b_n + x / b_n."""
    _check_scale(b)
    return -b.bn + x / b.bn


def tail_limit_check(n: int, x: float) -> tuple[float, float]:
    """(n (1 - Phi(u_n(x))), n Phi(v_n(x))); tend to e^{-x} and e^{x}."""
    b = solve_bn(n)
    return (
        n * float(std_normal_sf(upper_threshold(b, x))),
        n * float(std_normal_cdf(lower_threshold(b, x))),
    )


def nair_gap(n: int, x: float) -> float:
    """b_n^2 (n Phi(v_n(x)) - e^x); converges to -(x^2 - 2x) e^x / 2."""
    b = solve_bn(n)
    return b.bn**2 * (n * float(std_normal_cdf(lower_threshold(b, x))) - math.exp(x))


def nair_limit(x: float) -> float:
    return -(x * x - 2.0 * x) * math.exp(x) / 2.0
