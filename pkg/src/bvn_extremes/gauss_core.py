"""Scalar and bivariate Gaussian primitives.

Everything downstream (norming constants, the exact finite-n engine, the
Monte Carlo sampler) goes through this module.  The bivariate orthant
probability uses the Drezner-Wesolowsky / Genz integral over the
correlation parameter, compiled with numba; a second, independent route
integrates the conditional form

    P(X > h, Y > k) = int_h^inf phi(z) (1 - Phi((k - r z) / sqrt(1 - r^2))) dz

with graded Gauss-Legendre panels in log space.  The second route keeps
relative accuracy far into the tails (down to ~1e-300 and beyond, since it
returns logarithms) and doubles as a test oracle for the first.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit, vectorize
from scipy import special

SQRT2 = math.sqrt(2.0)
SQRT2PI = math.sqrt(2.0 * math.pi)
TWOPI = 2.0 * math.pi
LOG_SQRT2PI = 0.5 * math.log(2.0 * math.pi)

# |rho| at or above this is routed to the comonotone / countermonotone laws.
DEGENERATE_RHO = 1.0 - 1e-12

# Gauss-Legendre half-rules (abscissae on (0,1), weights) for 6, 12, 20 points.
_GL_X = np.array(
    [
        [0.9324695142031522, 0.6612093864662647, 0.2386191860831970] + [0.0] * 7,
        [
            0.9815606342467191, 0.9041172563704750, 0.7699026741943050,
            0.5873179542866171, 0.3678314989981802, 0.1252334085114692,
        ] + [0.0] * 4,
        [
            0.9931285991850949, 0.9639719272779138, 0.9122344282513259,
            0.8391169718222188, 0.7463319064601508, 0.6360536807265150,
            0.5108670019508271, 0.3737060887154196, 0.2277858511416451,
            0.07652652113349733,
        ],
    ]
)
_GL_W = np.array(
    [
        [0.1713244923791705, 0.3607615730481384, 0.4679139345726904] + [0.0] * 7,
        [
            0.04717533638651177, 0.1069393259953183, 0.1600783285433464,
            0.2031674267230659, 0.2334925365383547, 0.2491470458134029,
        ] + [0.0] * 4,
        [
            0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
            0.08327674157670475, 0.1019301198172404, 0.1181945319615184,
            0.1316886384491766, 0.1420961093183821, 0.1491729864726037,
            0.1527533871307259,
        ],
    ]
)
_GL_N = np.array([3, 6, 10])


class DomainError(ValueError):
    """Raised when an argument lies outside an operation's domain."""


# ---------------------------------------------------------------------------
# scalar kernels (numba)
# ---------------------------------------------------------------------------


@njit(cache=True)
def _phi_cdf(x):
    return 0.5 * math.erfc(-x / SQRT2)


@njit(cache=True)
def _phi_sf(x):
    return 0.5 * math.erfc(x / SQRT2)


@njit(cache=True)
def _bvnu_genz(h, k, r):
    # P(X > h, Y > k), Genz's double-precision variant of Drezner-Wesolowsky.
    ar = abs(r)
    if ar < 0.3:
        ng = 0
    elif ar < 0.75:
        ng = 1
    else:
        ng = 2
    lg = _GL_N[ng]
    hk = h * k
    bvn = 0.0
    if ar < 0.925:
        hs = (h * h + k * k) / 2.0
        asr = math.asin(r)
        for i in range(lg):
            sn = math.sin(asr * (1.0 - _GL_X[ng, i]) / 2.0)
            bvn += _GL_W[ng, i] * math.exp((sn * hk - hs) / (1.0 - sn * sn))
            sn = math.sin(asr * (1.0 + _GL_X[ng, i]) / 2.0)
            bvn += _GL_W[ng, i] * math.exp((sn * hk - hs) / (1.0 - sn * sn))
        return bvn * asr / (2.0 * TWOPI) + _phi_sf(h) * _phi_sf(k)
    if r < 0.0:
        k = -k
        hk = -hk
    if ar < 1.0:
        a_s = (1.0 - r) * (1.0 + r)
        a = math.sqrt(a_s)
        bs = (h - k) ** 2
        c = (4.0 - hk) / 8.0
        d = (12.0 - hk) / 16.0
        asr = -(bs / a_s + hk) / 2.0
        if asr > -100.0:
            bvn = a * math.exp(asr) * (
                1.0 - c * (bs - a_s) * (1.0 - d * bs / 5.0) / 3.0 + c * d * a_s * a_s / 5.0
            )
        if -hk < 100.0:
            b = math.sqrt(bs)
            sp = SQRT2PI * _phi_cdf(-b / a)
            bvn -= math.exp(-hk / 2.0) * sp * b * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0)
        a = a / 2.0
        for i in range(lg):
            for sgn in (-1.0, 1.0):
                xs = (a * (sgn * _GL_X[ng, i] + 1.0)) ** 2
                rs = math.sqrt(1.0 - xs)
                asr = -(bs / xs + hk) / 2.0
                if asr > -100.0:
                    sp = 1.0 + c * xs * (1.0 + d * xs)
                    ep = math.exp(-hk * (1.0 - rs) / (2.0 * (1.0 + rs))) / rs
                    bvn += a * _GL_W[ng, i] * math.exp(asr) * (ep - sp)
        bvn = -bvn / TWOPI
    if r > 0.0:
        bvn += _phi_sf(max(h, k))
    else:
        bvn = -bvn + max(0.0, _phi_sf(h) - _phi_cdf(-k))
    return bvn


@njit(cache=True)
def bvnu_scalar(h, k, r):
    """P(X > h, Y > k) for a standard bivariate normal with correlation ``r``."""
    if h == -math.inf:
        return _phi_sf(k)
    if k == -math.inf:
        return _phi_sf(h)
    if h == math.inf or k == math.inf:
        return 0.0
    if r >= DEGENERATE_RHO:
        return _phi_sf(max(h, k))
    if r <= -DEGENERATE_RHO:
        # X > h and -X > k  <=>  h < X < -k
        return max(0.0, _phi_cdf(-k) - _phi_cdf(h))
    if r == 0.0:
        return _phi_sf(h) * _phi_sf(k)
    v = _bvnu_genz(h, k, r)
    return min(max(v, 0.0), 1.0)


@vectorize(["float64(float64, float64, float64)"], cache=True)
def bvn_upper(h, k, r):
    """Vectorized upper-orthant probability P(X > h, Y > k)."""
    return bvnu_scalar(h, k, r)


@njit(cache=True)
def bvn_cdf_scalar(x, y, r):
    # P(X <= x, Y <= y) = P(-X >= -x, -Y >= -y)
    return bvnu_scalar(-x, -y, r)


@njit(cache=True)
def rect_exclusion_scalar(xlo, xhi, ylo, yhi, r):
    """Probability that (X, Y) falls outside (xlo, xhi] x (ylo, yhi].

    Computed as the union of the four half-plane exclusions; the two
    impossible pairwise intersections ({X > xhi, X <= xlo} and its mirror)
    drop out, so every remaining term is a positive tail probability and
    nothing cancels catastrophically when the union is small.
    """
    s = _phi_sf(xhi) + _phi_sf(yhi) + _phi_cdf(xlo) + _phi_cdf(ylo)
    s -= bvnu_scalar(xhi, yhi, r)
    s -= bvnu_scalar(-xlo, -ylo, r)
    s -= bvnu_scalar(xhi, -ylo, -r)
    s -= bvnu_scalar(-xlo, yhi, -r)
    return min(max(s, 0.0), 1.0)


@njit(cache=True)
def bvn_rect_scalar(xlo, xhi, ylo, yhi, r):
    if xlo >= xhi or ylo >= yhi:
        return 0.0
    excl = rect_exclusion_scalar(xlo, xhi, ylo, yhi, r)
    if excl <= 0.5:
        return 1.0 - excl
    # small box: four-term inclusion-exclusion, two smallest subtracted first
    a = bvn_cdf_scalar(xhi, yhi, r)
    b = bvn_cdf_scalar(xlo, yhi, r)
    c = bvn_cdf_scalar(xhi, ylo, r)
    d = bvn_cdf_scalar(xlo, ylo, r)
    if b < c:
        v = (a - c) - (b - d)
    else:
        v = (a - b) - (c - d)
    return min(max(v, 0.0), 1.0)


# ---------------------------------------------------------------------------
# public scalar Gaussian functions
# ---------------------------------------------------------------------------


def std_normal_cdf(x):
    """Standard normal CDF via ``erfc`` on both sides (accurate in both tails)."""
    return special.ndtr(x)


def std_normal_sf(x):
    """Upper tail ``1 - Phi(x)`` without cancellation."""
    return special.ndtr(-np.asarray(x, dtype=float))


def std_normal_pdf(x):
    x = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * x * x) / SQRT2PI
    return out if out.ndim else float(out)


def log_std_normal_cdf(x):
    return special.log_ndtr(x)


def std_normal_quantile(p):
    """Inverse of :func:`std_normal_cdf`.

    ``ndtri`` is followed by one Newton step on whichever tail is smaller,
    which brings ``|Phi(x) - p|`` to the level of a few ulps of ``p``.
    """
    p_arr = np.asarray(p, dtype=float)
    if np.any(~((p_arr > 0.0) & (p_arr < 1.0))):
        raise DomainError("quantile requires 0 < p < 1")
    x = special.ndtri(p_arr)
    upper = p_arr > 0.5
    # residual in the tail that is represented accurately
    resid = np.where(upper, (1.0 - p_arr) - special.ndtr(-x), special.ndtr(x) - p_arr)
    dens = np.exp(-0.5 * x * x) / SQRT2PI
    step = np.where(upper, -resid, resid) / np.where(dens > 0, dens, 1.0)
    x = x - np.where(dens > 0, step, 0.0)
    return x if x.ndim else float(x)


def gumbel_cdf(x):
    """Lambda(x) = exp(-exp(-x))."""
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore"):
        out = np.exp(-np.exp(-x))
    return out if out.ndim else float(out)


def _check_rho(rho):
    r = np.asarray(rho, dtype=float)
    if np.any(np.isnan(r)) or np.any(np.abs(r) > 1.0):
        raise DomainError(f"correlation must lie in [-1, 1], got {rho!r}")


def bvn_cdf(x, y, rho):
    """P(X <= x, Y <= y) for the standard bivariate normal with correlation rho.

    Accepts scalars or broadcastable arrays.  Absolute error is at the
    1e-15 level; |rho| >= 1 - 1e-12 uses the degenerate closed forms.
    """
    _check_rho(rho)
    out = bvn_upper(-np.asarray(x, dtype=float), -np.asarray(y, dtype=float), np.asarray(rho, dtype=float))
    return out if np.ndim(out) else float(out)


def bvn_rect(xlo, xhi, ylo, yhi, rho):
    """P(xlo < X <= xhi, ylo < Y <= yhi), clamped into [0, 1]."""
    _check_rho(rho)
    xlo, xhi, ylo, yhi = (np.asarray(v, dtype=float) for v in (xlo, xhi, ylo, yhi))
    if np.any(xlo > xhi) or np.any(ylo > yhi):
        raise DomainError("rectangle bounds are inverted")
    out = _bvn_rect_vec(xlo, xhi, ylo, yhi, np.asarray(rho, dtype=float))
    return out if np.ndim(out) else float(out)


@vectorize(["float64(float64, float64, float64, float64, float64)"], cache=True)
def _bvn_rect_vec(xlo, xhi, ylo, yhi, r):
    return bvn_rect_scalar(xlo, xhi, ylo, yhi, r)


# ---------------------------------------------------------------------------
# conditional-integral route (log space, relative accuracy in the tails)
# ---------------------------------------------------------------------------

_QX, _QW = np.polynomial.legendre.leggauss(20)


@njit(cache=True)
def log_ndtr_scalar(x):
    """log Phi(x); asymptotic series below -37 where erfc underflows."""
    if x > -37.0:
        if x > -1.0:
            return math.log1p(-0.5 * math.erfc(x / SQRT2))
        return math.log(0.5 * math.erfc(-x / SQRT2))
    t = 1.0 / (x * x)
    # Mills-ratio series 1 - t + 3t^2 - 15t^3 + ...
    ser = 1.0 + t * (-1.0 + t * (3.0 + t * (-15.0 + t * (105.0 + t * (-945.0 + t * 10395.0)))))
    return -0.5 * x * x - LOG_SQRT2PI - math.log(-x) + math.log(ser)


@njit(cache=True)
def _log_integrand(z, k, r, s):
    # log phi(z) + log(1 - Phi((k - r z)/s))
    return -0.5 * z * z - LOG_SQRT2PI + log_ndtr_scalar((r * z - k) / s)


@njit(cache=True)
def _log_bvnu_quad(h, k, r, min_panels, cut):
    if h < k:
        h, k = k, h
    if h == math.inf:
        return -math.inf
    if k == -math.inf:
        return log_ndtr_scalar(-h)
    if r >= DEGENERATE_RHO:
        return log_ndtr_scalar(-h)
    if r <= -DEGENERATE_RHO:
        p = _phi_cdf(-k) - _phi_cdf(h)
        return math.log(p) if p > 0.0 else -math.inf
    s = math.sqrt((1.0 - r) * (1.0 + r))
    a = max(h, -40.0)
    b = max(a, 0.0) + 40.0
    # coarse scan; the integrand is log-concave so the argmax brackets the mode
    ngrid = 81
    step = (b - a) / (ngrid - 1)
    jbest = 0
    top = -math.inf
    for j in range(ngrid):
        v = _log_integrand(a + j * step, k, r, s)
        if v > top:
            top = v
            jbest = j
    lo = a + max(jbest - 1, 0) * step
    hi = a + min(jbest + 1, ngrid - 1) * step
    g = 0.6180339887498949
    for _ in range(45):
        c = hi - g * (hi - lo)
        d = lo + g * (hi - lo)
        if _log_integrand(c, k, r, s) > _log_integrand(d, k, r, s):
            hi = d
        else:
            lo = c
    zmax = 0.5 * (lo + hi)
    top = max(top, _log_integrand(zmax, k, r, s))
    thresh = top - cut
    # region where the integrand is within exp(-cut) of its peak
    if _log_integrand(a, k, r, s) >= thresh:
        left = a
    else:
        out, inn = a, zmax
        for _ in range(48):
            mid = 0.5 * (out + inn)
            if _log_integrand(mid, k, r, s) >= thresh:
                inn = mid
            else:
                out = mid
        left = out
    if _log_integrand(b, k, r, s) >= thresh:
        right = b
    else:
        out, inn = b, zmax
        for _ in range(48):
            mid = 0.5 * (out + inn)
            if _log_integrand(mid, k, r, s) >= thresh:
                inn = mid
            else:
                out = mid
        right = out
    # the conditional factor can switch on over a width ~ s near an end or the mode
    m = int(math.ceil(math.log2(max(right - left, 1e-300) * 8.0 / s)))
    m = min(max(m, min_panels), 48)
    acc = -math.inf
    vals = np.empty(_QX.size)
    for side in range(2):
        e0 = left if side == 0 else zmax
        e1 = zmax if side == 0 else right
        span = e1 - e0
        if span <= 0.0:
            continue
        denom = 2.0**m - 1.0
        for p in range(2 * m):
            if p < m:
                f0 = 0.5 * (2.0**p - 1.0) / denom
                f1 = 0.5 * (2.0 ** (p + 1) - 1.0) / denom
            else:
                q = 2 * m - 1 - p
                f0 = 1.0 - 0.5 * (2.0 ** (q + 1) - 1.0) / denom
                f1 = 1.0 - 0.5 * (2.0**q - 1.0) / denom
            z0 = e0 + span * f0
            z1 = e0 + span * f1
            hw = 0.5 * (z1 - z0)
            if hw <= 0.0:
                continue
            mid = 0.5 * (z0 + z1)
            pm = -math.inf
            for j in range(_QX.size):
                vals[j] = _log_integrand(mid + hw * _QX[j], k, r, s) + math.log(hw * _QW[j])
                if vals[j] > pm:
                    pm = vals[j]
            tot = 0.0
            for j in range(_QX.size):
                tot += math.exp(vals[j] - pm)
            lp = pm + math.log(tot)
            if lp > acc:
                acc, lp = lp, acc
            if lp > -math.inf:
                acc = acc + math.log1p(math.exp(lp - acc))
    return acc


@vectorize(["float64(float64, float64, float64, int64, float64)"], cache=True)
def _log_bvnu_quad_vec(h, k, r, min_panels, cut):
    return _log_bvnu_quad(h, k, r, min_panels, cut)


def log_bvn_upper_quad(h, k, rho, min_panels=4, cut=60.0):
    """log P(X > h, Y > k) by Gauss-Legendre on the conditional integral.

    The integration variable runs over the larger threshold.  Because the
    integrand is log-concave, the region where it is within ``exp(-cut)``
    of its maximum is a single interval; it is located by bisection, split
    at the mode, and each half is covered with panels graded geometrically
    toward both of its ends.  Returns ``-inf`` for an empty event.
    """
    _check_rho(rho)
    out = _log_bvnu_quad_vec(
        np.asarray(h, dtype=float), np.asarray(k, dtype=float), np.asarray(rho, dtype=float),
        int(min_panels), float(cut),
    )
    return out if np.ndim(out) else float(out)
