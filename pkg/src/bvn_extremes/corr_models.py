"""Correlation profiles m and the per-row correlations rho_ni = 1 - m(i/n)/log n.

Four kinds are shipped:

* ``ContinuousProfile`` - a continuous, strictly positive m on [0, 1]
  (``affine`` is m(t) = t + 1; ``custom:<expr>`` parses an expression in t);
* ``VanishingFamily`` - m(i/n) = i/n for i <= sqrt(n), else 1/n;
* ``DivergingFamily`` - m(i/n) = log(n/i) for i <= sqrt(n), else log n;
* ``ConstantLambda`` - m = lambda^2 for every row, so b_n^2 (1 - rho_n) -> 2 lambda^2
  (the constant-correlation Husler-Reiss case).

Rows are never materialized as one array.  :meth:`CorrelationModel.blocks`
yields ``(rho, multiplicity)`` arrays in fixed chunks of at most
``CHUNK`` distinct values, so families that are constant past sqrt(n)
collapse to a single weighted block.
"""

from __future__ import annotations

import ast
import enum
import logging
import math
import operator
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from .gauss_core import DomainError

log = logging.getLogger(__name__)

CHUNK = 4096


class Regime(enum.Enum):
    VANISHING = "Vanishing"
    DIVERGING = "Diverging"
    CONTINUOUS = "Continuous"
    CONSTANT_HR = "ConstantHR"


class Kind(enum.Enum):
    CONTINUOUS = "ContinuousProfile"
    VANISHING = "VanishingFamily"
    DIVERGING = "DivergingFamily"
    CONSTANT = "ConstantLambda"


_REGIME_OF = {
    Kind.CONTINUOUS: Regime.CONTINUOUS,
    Kind.VANISHING: Regime.VANISHING,
    Kind.DIVERGING: Regime.DIVERGING,
    Kind.CONSTANT: Regime.CONSTANT_HR,
}


class ClampWarning(UserWarning):
    """rho_ni fell outside [-1, 1] and was clamped."""


@dataclass(frozen=True)
class Classification:
    regime: Regime
    max_m: float
    min_m: float


@dataclass(frozen=True)
class CorrelationModel:
    kind: Kind
    description: str
    profile: Callable[[np.ndarray], np.ndarray] | None = field(default=None, compare=False)
    lam: float | None = None

    # -- construction ------------------------------------------------------

    @classmethod
    def continuous(cls, profile, description="custom profile", grid=10_000) -> "CorrelationModel":
        t = np.linspace(0.0, 1.0, grid)
        with np.errstate(all="ignore"):
            vals = np.broadcast_to(np.asarray(profile(t), dtype=float), t.shape)
        if not np.all(np.isfinite(vals)):
            raise DomainError(f"profile {description!r} is not finite on [0, 1]")
        if np.any(vals <= 0.0):
            raise DomainError(f"profile {description!r} is not strictly positive on [0, 1]")
        return cls(Kind.CONTINUOUS, description, profile=profile)

    @classmethod
    def affine(cls) -> "CorrelationModel":
        return cls.continuous(lambda t: t + 1.0, "affine: m(t) = t + 1")

    @classmethod
    def vanishing(cls) -> "CorrelationModel":
        return cls(Kind.VANISHING, "vanishing: m = i/n for i <= sqrt(n), else 1/n")

    @classmethod
    def diverging(cls) -> "CorrelationModel":
        return cls(Kind.DIVERGING, "diverging: m = log(n/i) for i <= sqrt(n), else log n")

    @classmethod
    def constant(cls, lam: float) -> "CorrelationModel":
        lam = float(lam)
        if not (lam >= 0.0 and math.isfinite(lam)):
            raise DomainError(f"lambda must be finite and >= 0, got {lam!r}")
        return cls(Kind.CONSTANT, f"constant: lambda = {lam:g}", lam=lam)

    @classmethod
    def from_name(cls, name: str) -> "CorrelationModel":
        """Parse ``vanishing``, ``diverging``, ``affine``, ``constant:<lam>``, ``custom:<expr>``."""
        name = name.strip()
        head, _, arg = name.partition(":")
        head = head.strip().lower()
        if head == "vanishing" and not arg:
            return cls.vanishing()
        if head == "diverging" and not arg:
            return cls.diverging()
        if head == "affine" and not arg:
            return cls.affine()
        if head == "constant" and arg:
            try:
                lam = float(arg)
            except ValueError:
                raise DomainError(f"bad lambda in model {name!r}") from None
            return cls.constant(lam)
        if head == "custom" and arg:
            return cls.continuous(compile_profile(arg), f"custom: m(t) = {arg.strip()}")
        raise DomainError(
            f"unknown model {name!r}; expected vanishing, diverging, affine, constant:<lambda> or custom:<expr>"
        )

    # -- queries -----------------------------------------------------------

    @property
    def regime(self) -> Regime:
        return _REGIME_OF[self.kind]

    def m_values(self, n: int, i: np.ndarray) -> np.ndarray:
        """m for rows i (1-based) of row n; vectorized."""
        i = np.asarray(i)
        if np.any(i < 1) or np.any(i > n):
            raise DomainError(f"row index must lie in [1, {n}]")
        i = i.astype(float)
        if self.kind is Kind.CONTINUOUS:
            return np.broadcast_to(np.asarray(self.profile(i / n), dtype=float), i.shape).copy()
        if self.kind is Kind.CONSTANT:
            return np.full(i.shape, self.lam**2)
        cut = math.isqrt(n)
        head = i <= cut
        if self.kind is Kind.VANISHING:
            return np.where(head, i / n, 1.0 / n)
        return np.where(head, np.log(n / i), math.log(n))

    def m_value(self, n: int, i: int) -> float:
        return float(self.m_values(n, np.asarray([i]))[0])

    def rho_values(self, n: int, i: np.ndarray) -> np.ndarray:
        if n < 2:
            raise DomainError("rho requires n >= 2")
        r = 1.0 - self.m_values(n, i) / math.log(n)
        bad = (r < -1.0) | (r > 1.0)
        if np.any(bad):
            msg = f"{self.description}: rho clamped into [-1, 1] for {int(bad.sum())} rows at n={n}"
            log.warning(msg)
            warnings.warn(msg, ClampWarning, stacklevel=2)
            r = np.clip(r, -1.0, 1.0)
        return r

    def rho(self, n: int, i: int) -> float:
        if n < 3:
            raise DomainError("rho requires n >= 3")
        return float(self.rho_values(n, np.asarray([i]))[0])

    def blocks(self, n: int, chunk: int = CHUNK) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        """Yield ``(rho, weight)`` chunks covering rows 1..n in order."""
        if n < 2:
            raise DomainError("rows need n >= 2")
        if self.kind is Kind.CONSTANT:
            yield self.rho_values(n, np.array([1])), np.array([float(n)])
            return
        if self.kind is Kind.CONTINUOUS:
            stop = n
        else:
            stop = math.isqrt(n)
        for start in range(1, stop + 1, chunk):
            i = np.arange(start, min(start + chunk, stop + 1))
            yield self.rho_values(n, i), np.ones(i.size)
        if stop < n:
            yield self.rho_values(n, np.array([n])), np.array([float(n - stop)])

    def classify(self, n: int) -> Classification:
        if n < 3:
            raise DomainError("classify requires n >= 3")
        if self.kind is Kind.CONSTANT:
            m = self.lam**2
            return Classification(self.regime, m, m)
        if self.kind is Kind.VANISHING:
            return Classification(self.regime, math.isqrt(n) / n, 1.0 / n)
        if self.kind is Kind.DIVERGING:
            return Classification(self.regime, math.log(n), min(math.log(n / math.isqrt(n)), math.log(n)))
        lo, hi = math.inf, -math.inf
        for start in range(1, n + 1, 1 << 16):
            m = self.m_values(n, np.arange(start, min(start + (1 << 16), n + 1)))
            lo, hi = min(lo, float(m.min())), max(hi, float(m.max()))
        return Classification(self.regime, hi, lo)

    def profile_values(self, t: np.ndarray) -> np.ndarray:
        """m(t) on [0, 1]; for ConstantLambda the constant lambda^2."""
        t = np.asarray(t, dtype=float)
        if self.kind is Kind.CONTINUOUS:
            return np.broadcast_to(np.asarray(self.profile(t), dtype=float), t.shape)
        if self.kind is Kind.CONSTANT:
            return np.full(t.shape, self.lam**2)
        raise DomainError(f"{self.kind.value} has no n-free profile m(t)")

    def is_monotone(self, grid: int = 10_000) -> bool:
        """Weak monotonicity of m on [0, 1], checked on a grid."""
        v = self.profile_values(np.linspace(0.0, 1.0, grid))
        d = np.diff(v)
        tol = 1e-12 * max(1.0, float(np.max(np.abs(v))))
        return bool(np.all(d >= -tol) or np.all(d <= tol))


# ---------------------------------------------------------------------------
# custom profile expressions
# ---------------------------------------------------------------------------

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_FUNCS = {"exp": np.exp, "log": np.log, "sqrt": np.sqrt}
_CONSTS = {"pi": math.pi, "e": math.e}


def compile_profile(expr: str) -> Callable[[np.ndarray], np.ndarray]:
    """Compile an arithmetic expression in ``t`` into a vectorized callable.

    Allowed: numbers, ``t``, ``pi``, ``e``, ``+ - * / **``, unary minus,
    and the functions ``exp``, ``log``, ``sqrt``.
    """
    try:
        tree = ast.parse(expr.strip(), mode="eval")
    except SyntaxError as exc:
        raise DomainError(f"cannot parse profile expression {expr!r}: {exc.msg}") from None
    _validate(tree.body, expr)

    def profile(t):
        return _eval(tree.body, np.asarray(t, dtype=float))

    return profile


def _validate(node, expr):
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        _validate(node.left, expr)
        _validate(node.right, expr)
    elif isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        _validate(node.operand, expr)
    elif isinstance(node, ast.Call):
        if not (isinstance(node.func, ast.Name) and node.func.id in _FUNCS) or len(node.args) != 1 or node.keywords:
            raise DomainError(f"unsupported call in profile expression {expr!r}")
        _validate(node.args[0], expr)
    elif isinstance(node, ast.Name):
        if node.id != "t" and node.id not in _CONSTS:
            raise DomainError(f"unknown name {node.id!r} in profile expression {expr!r}")
    elif isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        pass
    else:
        raise DomainError(f"unsupported syntax in profile expression {expr!r}")


def _eval(node, t):
    if isinstance(node, ast.BinOp):
        return _BINOPS[type(node.op)](_eval(node.left, t), _eval(node.right, t))
    if isinstance(node, ast.UnaryOp):
        v = _eval(node.operand, t)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.Call):
        return _FUNCS[node.func.id](_eval(node.args[0], t))
    if isinstance(node, ast.Name):
        return t if node.id == "t" else _CONSTS[node.id]
    return float(node.value)
