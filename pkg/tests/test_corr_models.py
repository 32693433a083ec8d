import math
import warnings

import numpy as np
import pytest

from bvn_extremes.corr_models import CHUNK, ClampWarning, CorrelationModel, Kind, Regime, compile_profile
from bvn_extremes.gauss_core import DomainError


def _expand(model, n):
    rho, wt = zip(*model.blocks(n))
    return np.repeat(np.concatenate(rho), np.concatenate(wt).astype(int))


@pytest.mark.filterwarnings("ignore::bvn_extremes.corr_models.ClampWarning")
@pytest.mark.parametrize("name", ["affine", "vanishing", "diverging", "constant:1.5", "custom:exp(t)"])
@pytest.mark.parametrize("n", [3, 17, 10_000, 3 * CHUNK + 5])
def test_blocks_cover_rows_in_order(name, n):
    m = CorrelationModel.from_name(name)
    full = m.rho_values(n, np.arange(1, n + 1))
    np.testing.assert_array_equal(_expand(m, n), full)


def test_blocks_are_compressed_for_families():
    n = 10**8
    blocks = list(CorrelationModel.vanishing().blocks(n))
    assert sum(b[1].sum() for b in blocks) == n
    assert sum(b[0].size for b in blocks) == math.isqrt(n) + 1


def test_affine_rho():
    m = CorrelationModel.affine()
    n = 1000
    assert m.rho(n, 500) == pytest.approx(1 - 1.5 / math.log(n))
    assert m.regime is Regime.CONTINUOUS


def test_families():
    n = 10**4
    v, d = CorrelationModel.vanishing(), CorrelationModel.diverging()
    assert v.m_value(n, 50) == pytest.approx(50 / n)
    assert v.m_value(n, 101) == pytest.approx(1 / n)
    assert d.m_value(n, 50) == pytest.approx(math.log(n / 50))
    assert d.m_value(n, 101) == pytest.approx(math.log(n))
    assert v.classify(n).max_m == pytest.approx(100 / n)
    assert d.classify(n).min_m == pytest.approx(math.log(100))


def test_constant_lambda_limit():
    # b_n^2 (1 - rho_n) -> 2 lambda^2
    from bvn_extremes.norming import solve_bn

    lam = 1.3
    m = CorrelationModel.constant(lam)
    n = 10**15
    bn = solve_bn(n).bn
    val = bn**2 * (1 - m.rho(n, 7))
    assert val == pytest.approx(2 * lam**2, rel=0.15)
    assert m.kind is Kind.CONSTANT


def test_classify_continuous_scan():
    c = CorrelationModel.from_name("custom:2 - t").classify(5000)
    assert c.max_m == pytest.approx(2 - 1 / 5000)
    assert c.min_m == pytest.approx(1.0)


def test_clamp_warns():
    m = CorrelationModel.from_name("custom:10 + t")
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        r = m.rho_values(3, np.arange(1, 4))
    assert any(issubclass(x.category, ClampWarning) for x in w)
    assert np.all(r >= -1.0)


@pytest.mark.parametrize("bad", ["custom:t - 0.5", "custom:log(t)", "custom:1/t"])
def test_nonpositive_or_singular_profiles_rejected(bad):
    with pytest.raises(DomainError):
        CorrelationModel.from_name(bad)


@pytest.mark.parametrize("bad", ["custom:__import__('os')", "custom:t.real", "custom:sin(t)", "custom:x + 1", "nope"])
def test_bad_expressions(bad):
    with pytest.raises(DomainError):
        CorrelationModel.from_name(bad)


def test_compile_profile():
    f = compile_profile("sqrt(t + 1) * e ** (-t) + pi - 3")
    t = np.array([0.0, 0.5, 1.0])
    np.testing.assert_allclose(f(t), np.sqrt(t + 1) * np.exp(-t) + math.pi - 3)


def test_monotonicity_check():
    assert CorrelationModel.affine().is_monotone()
    assert CorrelationModel.constant(1.0).is_monotone()
    assert not CorrelationModel.from_name("custom:1 + (t - 0.5)**2").is_monotone()


def test_small_n():
    with pytest.raises(DomainError):
        CorrelationModel.affine().rho(2, 1)
    with pytest.raises(DomainError):
        list(CorrelationModel.affine().blocks(1))
    with pytest.raises(DomainError):
        CorrelationModel.affine().m_values(10, np.array([11]))
