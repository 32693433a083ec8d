"""Limit laws for joint maxima / minima of the Gaussian triangular array.

``hr_H`` is the Husler-Reiss law H_lambda, ``mixture_H`` its average over a
correlation profile (the exponent integrates Phi(sqrt(m(t)) + ...) over
t in [0, 1]), ``tilde_H`` the reflected law for minima, and
``joint_limit`` the product law of (maxima, minima) for each regime.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .corr_models import CorrelationModel, Regime
from .gauss_core import DomainError, gumbel_cdf, std_normal_cdf
from .norming import EvalPoint

INF = math.inf


class QuadratureError(ArithmeticError):
    """Node doubling moved a t-integral by more than the tolerance."""


@dataclass(frozen=True)
class LimitSpec:
    regime: Regime
    model: CorrelationModel | None = None
    quadrature_nodes: int = 64
    panels: int = 8
    tol: float = 1e-10

    def __post_init__(self):
        if self.quadrature_nodes < 32 or self.quadrature_nodes % 2:
            raise DomainError("quadrature_nodes must be even and >= 32")
        if self.regime in (Regime.CONTINUOUS, Regime.CONSTANT_HR) and self.model is None:
            raise DomainError(f"regime {self.regime.value} needs a correlation model")

    @classmethod
    def for_model(cls, model: CorrelationModel, **kw) -> "LimitSpec":
        return cls(model.regime, model, **kw)

    @property
    def lam(self) -> float:
        return self.model.lam


@lru_cache(maxsize=None)
def _panel_rule(nodes: int, panels: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(nodes)
    h = 1.0 / panels
    left = np.arange(panels) * h
    t = (left[:, None] + 0.5 * h * (x[None, :] + 1.0)).ravel()
    wt = np.tile(0.5 * h * w, panels)
    t.setflags(write=False)
    wt.setflags(write=False)
    return t, wt


def t_integral(spec: LimitSpec, integrand) -> np.ndarray:
    """Integrate ``integrand(m(t))`` over t in [0, 1].

    ``integrand`` maps an array of profile values (trailing axis = nodes)
    to integrand values; extra leading axes are allowed, which lets one
    call integrate a family of integrands on the same node set.
    Composite Gauss-Legendre, checked against a doubled panel count.
    """
    if spec.regime is Regime.CONSTANT_HR:
        m = np.array([spec.lam**2])
        return integrand(m)[..., 0]
    if spec.regime is not Regime.CONTINUOUS:
        raise DomainError(f"no t-profile in regime {spec.regime.value}")
    t, w = _panel_rule(spec.quadrature_nodes, spec.panels)
    coarse = integrand(spec.model.profile_values(t)) @ w
    t2, w2 = _panel_rule(spec.quadrature_nodes, 2 * spec.panels)
    fine = integrand(spec.model.profile_values(t2)) @ w2
    err = np.max(np.abs(fine - coarse)) if np.size(fine) else 0.0
    if not err <= spec.tol:
        raise QuadratureError(f"t-integral changed by {err:.3g} under node doubling")
    return fine


def _check_xy(x, y):
    if math.isnan(x) or math.isnan(y):
        raise DomainError("NaN threshold")


def hr_exponent(lam: float, x: float, y: float) -> float:
    """-log H_lambda(x, y)."""
    if lam == 0.0:
        return _exp(-min(x, y))
    if lam == INF:
        return _exp(-x) + _exp(-y)
    a = (x - y) / (2.0 * lam)
    return _mul_exp(std_normal_cdf(lam + a), -y) + _mul_exp(std_normal_cdf(lam - a), -x)


def _exp(v):
    return math.exp(v) if v < 709.0 else INF


def _mul_exp(p, expo):
    # p * e^expo with 0 * inf := 0
    if p == 0.0:
        return 0.0
    return float(p) * math.exp(expo) if expo < 700.0 else _exp(math.log(p) + expo)


def hr_H(lam: float, x: float, y: float) -> float:
    """Husler-Reiss law H_lambda(x, y), lambda in [0, inf]."""
    if lam is None or math.isnan(lam) or lam < 0.0:
        raise DomainError(f"lambda must lie in [0, inf], got {lam!r}")
    _check_xy(x, y)
    return math.exp(-hr_exponent(lam, x, y))


def mixture_exponent(spec: LimitSpec, x: float, y: float) -> float:
    """e^{-y} int Phi(sqrt m + (x-y)/(2 sqrt m)) dt + e^{-x} int Phi(sqrt m + (y-x)/(2 sqrt m)) dt."""
    d = x - y

    def f(m):
        s = np.sqrt(m)
        return np.stack([std_normal_cdf(s + d / (2.0 * s)), std_normal_cdf(s - d / (2.0 * s))])

    i1, i2 = t_integral(spec, f)
    return _mul_exp(i1, -y) + _mul_exp(i2, -x)


def mixture_H(spec: LimitSpec, x: float, y: float) -> float:
    """H(x, y): the Husler-Reiss exponent averaged over the profile m(t)."""
    _check_xy(x, y)
    if spec.regime not in (Regime.CONTINUOUS, Regime.CONSTANT_HR):
        raise DomainError("mixture_H needs a Continuous or ConstantHR LimitSpec")
    return math.exp(-mixture_exponent(spec, x, y))


def max_law(spec: LimitSpec, x: float, y: float) -> float:
    """Limit of P(M_n1 <= u_n(x), M_n2 <= u_n(y)) in the LimitSpec regime."""
    if spec.regime is Regime.VANISHING:
        return hr_H(0.0, x, y)
    if spec.regime is Regime.DIVERGING:
        return hr_H(INF, x, y)
    return mixture_H(spec, x, y)


def tilde_H(spec: LimitSpec, x: float, y: float) -> float:
    """Minima law 1 - Lambda(-x) - Lambda(-y) + H(-x, -y)."""
    _check_xy(x, y)
    v = 1.0 - gumbel_cdf(-x) - gumbel_cdf(-y) + max_law(spec, -x, -y)
    return min(max(v, 0.0), 1.0)


def joint_limit(spec: LimitSpec, p: EvalPoint) -> float:
    """Limit of P(M_n <= u_n, m_n <= v_n): maxima law times minima law."""
    return max_law(spec, p.x2, p.y2) * tilde_H(spec, p.x1, p.y1)


def abs_max_limit(spec: LimitSpec, x: float, y: float) -> float:
    """Limit of P(max|xi| <= b_n + (x + log 2)/b_n, max|eta| <= ...)."""
    if spec.regime not in (Regime.CONTINUOUS, Regime.CONSTANT_HR):
        raise DomainError("abs_max_limit needs a Continuous (or ConstantHR) LimitSpec")
    return mixture_H(spec, x, y)
