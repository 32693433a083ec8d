import math

import mpmath as mp
import numpy as np
import pytest

from bvn_extremes.corr_models import CorrelationModel, Regime
from bvn_extremes.exact_engine import decomposition_from_rhos
from bvn_extremes.gauss_core import DomainError, gumbel_cdf
from bvn_extremes.limit_laws import INF, LimitSpec, hr_H, joint_limit
from bvn_extremes.norming import EvalPoint, solve_bn
from bvn_extremes.second_order import (
    LOG,
    LOGLOG,
    hr_joint_second_order,
    kappa,
    q_lambda,
    second_order_rhs,
    thm2_nair_term,
    thm2_rhs,
    thm3_rhs,
    thm4_rhs,
    tail_sum_expansion_rhs,
)

AFFINE = LimitSpec.for_model(CorrelationModel.affine())
POINTS = [EvalPoint(0, 0, 0, 0), EvalPoint(1, -1, 2, 0), EvalPoint(-0.5, 0.3, 1.2, -0.4), EvalPoint(2, 2, -1, 0.5)]


def test_thm2_oracles():
    # mpmath: nested quad of the mixture law and the phi-integrals over t
    assert thm2_rhs(AFFINE, EvalPoint(0, 0, 0, 0)).rhs == pytest.approx(0.02343716320297672857, rel=1e-12)
    assert thm2_rhs(AFFINE, EvalPoint(0, 0, 0, 0), weight="m").rhs == pytest.approx(
        0.028442977011797238753, rel=1e-12
    )
    assert thm2_rhs(AFFINE, EvalPoint(1, -1, 0.5, 0.2)).rhs == pytest.approx(0.015881454470718973395, rel=1e-12)


def test_thm2_rate_and_scale():
    r = thm2_rhs(AFFINE, EvalPoint(0, 0, 0, 0))
    assert r.rate == LOGLOG
    n = 10**6
    assert r.scale(n) == pytest.approx(2 * math.log(n) / math.log(math.log(n)))
    with pytest.raises(DomainError):
        r.scale(2)


def test_thm2_rejects_non_monotone_profile():
    spec = LimitSpec.for_model(CorrelationModel.from_name("custom:1 + (t - 0.5)**2"))
    with pytest.raises(DomainError):
        thm2_rhs(spec, EvalPoint(0, 0, 0, 0))
    with pytest.raises(ValueError):
        thm2_rhs(AFFINE, EvalPoint(0, 0, 0, 0), weight="t")


def _lam(x):
    return mp.exp(-mp.exp(-x))


def _thm3_display(x1, y1, x2, y2):
    h0 = lambda a, b: _lam(min(a, b))
    ht = 1 - _lam(-x1) - _lam(-y1) + h0(-x1, -y1)
    mn, mx = min(x2, y2), max(x1, y1)
    return (
        (mn**2 + 2 * mn) * mp.exp(-mn) * h0(x2, y2) * ht
        - ((x1**2 - 2 * x1) * mp.exp(x1) * _lam(-x1) + (y1**2 - 2 * y1) * mp.exp(y1) * _lam(-y1)) * h0(x2, y2)
        + (mx**2 - 2 * mx) * mp.exp(mx) * h0(x2, y2) * h0(-x1, -y1)
    )


def _thm4_display(x1, y1, x2, y2):
    hi = lambda a, b: _lam(a) * _lam(b)
    ht = 1 - _lam(-x1) - _lam(-y1) + hi(-x1, -y1)
    sq = lambda t: (t**2 + 2 * t) * mp.exp(-t)
    sm = lambda t: (t**2 - 2 * t) * mp.exp(t)
    return (
        (sq(x2) + sq(y2)) * hi(x2, y2) * ht
        - (sm(x1) * _lam(-x1) + sm(y1) * _lam(-y1)) * hi(x2, y2)
        + (sm(x1) + sm(y1)) * hi(x2, y2) * hi(-x1, -y1)
    )


@pytest.mark.parametrize("p", POINTS)
def test_thm3_thm4_against_display(p):
    args = [mp.mpf(v) for v in p.as_tuple()]
    assert thm3_rhs(p).rhs == pytest.approx(float(_thm3_display(*args)), rel=1e-13, abs=1e-15)
    assert thm4_rhs(p).rhs == pytest.approx(float(_thm4_display(*args)), rel=1e-13, abs=1e-15)
    assert thm3_rhs(p).rate == thm4_rhs(p).rate == LOG


def test_thm3_matches_comonotone_closed_form():
    # rho == 1: P = Phi(a)^n - (Phi(a) - Phi(c))^n with a, c the binding thresholds
    mp.mp.dps = 40
    p = EvalPoint(1, 0.5, 1, 1.5)
    rhs = thm3_rhs(p).rhs
    lim = joint_limit(LimitSpec(Regime.VANISHING), p)
    gaps = []
    for k in (6, 9, 12, 15, 18):
        n = 10**k
        b = solve_bn(n).bn
        a = mp.mpf(b) + mp.mpf(min(p.x2, p.y2)) / b
        c = -mp.mpf(b) + mp.mpf(min(p.x1, p.y1)) / b
        prob = mp.ncdf(a) ** n - (mp.ncdf(a) - mp.ncdf(c)) ** n
        gaps.append(abs(4 * math.log(n) * (float(prob) - lim) - rhs) / abs(rhs))
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] < 0.06


@pytest.mark.parametrize("lam,p", [(1.0, EvalPoint(0, 0, 0, 0)), (0.6, EvalPoint(1, -1, 0.5, 0.2))])
def test_constant_rho_second_order_against_exact(lam, p):
    # b_n^2 (1 - rho_n) = 2 lam^2 exactly, so alpha = 0
    target = hr_joint_second_order(lam, 0.0, p)
    lim = hr_H(lam, p.x2, p.y2) * (1 - gumbel_cdf(-p.x1) - gumbel_cdf(-p.y1) + hr_H(lam, -p.x1, -p.y1))
    gaps = []
    for k in (4, 6, 9, 12, 15):
        n = 10**k
        bn = solve_bn(n)
        r = 1 - 2 * lam**2 / bn.bn**2
        d = decomposition_from_rhos([(np.array([r]), np.array([float(n)]))], bn, p)
        gaps.append(abs(bn.bn**2 * (d.total - lim) - target))
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] < 0.05 * abs(target)


def test_kappa_and_q_lambda():
    assert kappa(0.0) == 0.0
    assert kappa(1.0) == pytest.approx(1.5 / math.e)
    with pytest.raises(DomainError):
        q_lambda(0.0, 0.0, 0.0, 0.0)
    with pytest.raises(DomainError):
        q_lambda(INF, 0.0, 0.0, 0.0)
    # large lambda: the phi term dies and Q -> kappa(x) + kappa(y)
    assert q_lambda(40.0, 0.0, 0.3, -0.2) == pytest.approx(kappa(0.3) + kappa(-0.2), rel=1e-12)


def test_tail_sum_expansion_is_symmetric():
    # e^{-x} phi(s + (y-x)/(2s)) = e^{-y} phi(s + (x-y)/(2s))
    assert tail_sum_expansion_rhs(AFFINE, 0.7, -0.4) == pytest.approx(
        tail_sum_expansion_rhs(AFFINE, -0.4, 0.7), rel=1e-13
    )


def test_nair_term_sign():
    # at x1 = y1 = 1 both kappa(-1) terms are negative, so the coefficient is positive
    assert thm2_nair_term(AFFINE, EvalPoint(1, 1, 0, 0)) > 0


def test_dispatch():
    p = EvalPoint(0.2, 0.1, 0.5, 0.4)
    assert second_order_rhs(LimitSpec(Regime.VANISHING), p) == thm3_rhs(p)
    assert second_order_rhs(LimitSpec(Regime.DIVERGING), p) == thm4_rhs(p)
    assert second_order_rhs(AFFINE, p) == thm2_rhs(AFFINE, p)
