"""Second-order terms: the limits of the scaled gap between the finite-n
probability and its limit law, for each correlation regime.

Each ``thm*_rhs`` returns a :class:`SecondOrderResult` carrying the rate it
belongs to, so a caller cannot pair the log log n / log n expansion with
the 1 / log n scaling or vice versa.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .corr_models import Regime
from .gauss_core import DomainError, gumbel_cdf, std_normal_cdf, std_normal_pdf
from .limit_laws import INF, LimitSpec, hr_H, max_law, tilde_H, t_integral
from .norming import EvalPoint

LOGLOG = "2 log n / log log n"
LOG = "4 log n"


@dataclass(frozen=True)
class SecondOrderResult:
    rhs: float
    regime: Regime
    rate: str

    def scale(self, n: int) -> float:
        """Factor multiplying (P_n - limit) whose limit is ``rhs``."""
        if n < 3:
            raise DomainError("scale needs n >= 3")
        ln = math.log(n)
        if self.rate == LOGLOG:
            return 2.0 * ln / math.log(ln)
        return 4.0 * ln


def _prod(*factors) -> float:
    # product with 0 * inf := 0 (a vanishing law times an overflowing exponential)
    if any(f == 0.0 for f in factors):
        return 0.0
    return math.prod(factors)


def _exp(v: float) -> float:
    return math.exp(v) if v < 709.0 else math.inf


def kappa(t: float) -> float:
    """(t^2 + 2t) e^{-t} / 2."""
    return 0.5 * (t * t + 2.0 * t) * math.exp(-t)


def q_lambda(lam: float, alpha: float, x: float, y: float) -> float:
    """Second-order function of the constant-correlation Husler-Reiss expansion."""
    if not (lam > 0.0 and math.isfinite(lam)):
        raise DomainError(f"q_lambda needs 0 < lambda < inf, got {lam!r}")
    a = lam + (y - x) / (2.0 * lam)
    b = lam + (x - y) / (2.0 * lam)
    return (
        kappa(x) * std_normal_cdf(a)
        + kappa(y) * std_normal_cdf(b)
        - (lam**3 + lam * x + lam * y + 2.0 * lam + 2.0 * alpha) * math.exp(-x) * std_normal_pdf(a)
    )


def hr_joint_second_order(lam: float, alpha: float, p: EvalPoint) -> float:
    """Constant-rho limit of b_n^2 [P(M_n <= u_n, m_n <= v_n) - H_lam(x2,y2) H~_lam(x1,y1)].

    Assembled from ``q_lambda``, ``kappa`` and ``hr_H``; valid under
    b_n^2 (lambda_n - lambda) -> alpha.
    """
    q2 = q_lambda(lam, alpha, p.x2, p.y2)
    return hr_H(lam, p.x2, p.y2) * (
        q2
        + hr_H(lam, -p.x1, -p.y1) * (q_lambda(lam, alpha, -p.x1, -p.y1) + q2)
        - gumbel_cdf(-p.x1) * (kappa(-p.x1) + q2)
        - gumbel_cdf(-p.y1) * (kappa(-p.y1) + q2)
    )


def _profile_phi_integral(spec: LimitSpec, x: float, y: float, weight: str) -> float:
    # int_0^1 w(m) phi(sqrt m + (y - x)/(2 sqrt m)) dt with w(m) = sqrt(m) or m
    d = y - x

    def f(m):
        s = np.sqrt(m)
        w = s if weight == "sqrt" else m
        return w * std_normal_pdf(s + d / (2.0 * s))

    return float(t_integral(spec, f))


def thm2_rhs(spec: LimitSpec, p: EvalPoint, weight: str = "sqrt") -> SecondOrderResult:
    """Limit of (2 log n / log log n) (P_n - H(x2,y2) H~(x1,y1)) for a monotone profile.

    ``weight="sqrt"`` integrates sqrt(m(t)) phi(...), which is what the
    tail-sum expansion composes to; ``weight="m"`` uses m(t) phi(...)
    instead, for comparison with the alternative statement of the result.
    """
    if weight not in ("sqrt", "m"):
        raise ValueError("weight must be 'sqrt' or 'm'")
    if spec.regime not in (Regime.CONTINUOUS, Regime.CONSTANT_HR):
        raise DomainError("thm2_rhs needs a continuous profile")
    if spec.regime is Regime.CONTINUOUS and not spec.model.is_monotone():
        raise DomainError(f"profile {spec.model.description!r} is not monotone on [0, 1]")
    h2 = max_law(spec, p.x2, p.y2)
    first = _prod(h2, tilde_H(spec, p.x1, p.y1), _exp(-p.x2), _profile_phi_integral(spec, p.x2, p.y2, weight))
    second = _prod(h2, max_law(spec, -p.x1, -p.y1), _exp(p.x1), _profile_phi_integral(spec, -p.x1, -p.y1, weight))
    return SecondOrderResult(first + second, spec.regime, LOGLOG)


def thm2_nair_term(spec: LimitSpec, p: EvalPoint) -> float:
    """Coefficient of 1/(2 log n) from the minima margins' Nair corrections.

    These are the ((x1^2 - 2 x1) e^{x1} / 2)-type pieces that accompany the
    leading log log n / (2 log n) term in the pMx and pMy factors; they are
    one order smaller and are reported separately, not added to ``thm2_rhs``.
    """
    h2 = max_law(spec, p.x2, p.y2)
    return -_prod(h2, _prod(gumbel_cdf(-p.x1), kappa(-p.x1)) + _prod(gumbel_cdf(-p.y1), kappa(-p.y1)))


def _sq_plus(t):
    # (t^2 + 2t) e^{-t}
    return _prod(t * t + 2.0 * t, _exp(-t))


def _sq_minus(t):
    # (t^2 - 2t) e^{t}
    return _prod(t * t - 2.0 * t, _exp(t))


def _minima_margin_terms(p: EvalPoint) -> float:
    return _prod(_sq_minus(p.x1), gumbel_cdf(-p.x1)) + _prod(_sq_minus(p.y1), gumbel_cdf(-p.y1))


def thm3_rhs(p: EvalPoint) -> SecondOrderResult:
    """Limit of 4 log n (P_n - H_0(x2,y2) H~_0(x1,y1)) when max_i m -> 0 fast."""
    spec = LimitSpec(Regime.VANISHING)
    h0 = hr_H(0.0, p.x2, p.y2)
    mn = min(p.x2, p.y2)
    mx = max(p.x1, p.y1)
    rhs = (
        _prod(_sq_plus(mn), h0, tilde_H(spec, p.x1, p.y1))
        - _prod(_minima_margin_terms(p), h0)
        + _prod(_sq_minus(mx), h0, hr_H(0.0, -p.x1, -p.y1))
    )
    return SecondOrderResult(rhs, Regime.VANISHING, LOG)


def thm4_rhs(p: EvalPoint) -> SecondOrderResult:
    """Limit of 4 log n (P_n - H_inf(x2,y2) H~_inf(x1,y1)) when min_i m -> inf fast."""
    spec = LimitSpec(Regime.DIVERGING)
    hinf = hr_H(INF, p.x2, p.y2)
    rhs = (
        _prod(_sq_plus(p.x2) + _sq_plus(p.y2), hinf, tilde_H(spec, p.x1, p.y1))
        - _prod(_minima_margin_terms(p), hinf)
        + _prod(_sq_minus(p.x1) + _sq_minus(p.y1), hinf, hr_H(INF, -p.x1, -p.y1))
    )
    return SecondOrderResult(rhs, Regime.DIVERGING, LOG)


def tail_sum_expansion_rhs(spec: LimitSpec, x: float, y: float) -> float:
    """e^{-x} int_0^1 sqrt(m) phi(sqrt m + (y - x)/(2 sqrt m)) dt.

    Coefficient of log log n / (2 log n) in the deficit of the exact tail
    sum sum_i (1 - F_i(u_n(x), u_n(y))) below its limit exponent.
    """
    if spec.regime not in (Regime.CONTINUOUS, Regime.CONSTANT_HR):
        raise DomainError("tail_sum_expansion_rhs needs a continuous profile")
    if spec.regime is Regime.CONTINUOUS and not spec.model.is_monotone():
        raise DomainError(f"profile {spec.model.description!r} is not monotone on [0, 1]")
    return _prod(_exp(-x), _profile_phi_integral(spec, x, y, "sqrt"))


def second_order_rhs(spec: LimitSpec, p: EvalPoint) -> SecondOrderResult:
    """Dispatch to the expansion matching the LimitSpec regime."""
    if spec.regime is Regime.VANISHING:
        return thm3_rhs(p)
    if spec.regime is Regime.DIVERGING:
        return thm4_rhs(p)
    return thm2_rhs(spec, p)
