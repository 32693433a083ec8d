"""Monte Carlo estimates of the joint extreme-value probabilities.

Randomness comes from Philox4x32-10, a counter-based generator: the
uniforms for row j of replication r are a pure function of
(seed, r, j).  Any split of the replications across workers therefore
sees exactly the same draws, and hit counts are integers, so estimates
do not depend on the worker count.

One Philox call yields 128 bits, i.e. two 52-bit uniforms, which are
mapped to a standard normal pair by the quantile transform.
"""

from __future__ import annotations

import ctypes
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit
from numba.extending import get_cython_function_address

from .corr_models import CorrelationModel
from .gauss_core import DomainError, _phi_cdf
from .norming import EvalPoint, lower_threshold, solve_bn, upper_threshold

REP_BLOCK = 8192
MIN_REPLICATIONS = 100

_ndtri = ctypes.CFUNCTYPE(ctypes.c_double, ctypes.c_double)(
    get_cython_function_address("scipy.special.cython_special", "ndtri")
)

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)


@njit(cache=True, nogil=True, inline="always")
def _round(c0, c1, c2, c3, k0, k1):
    p0 = _M0 * c0
    p1 = _M1 * c2
    return (p1 >> _S32) ^ c1 ^ k0, p1 & _MASK32, (p0 >> _S32) ^ c3 ^ k1, p0 & _MASK32


@njit(cache=True, nogil=True, inline="always")
def _bump(k0, k1):
    return (k0 + _W0) & _MASK32, (k1 + _W1) & _MASK32


@njit(cache=True, nogil=True)
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Philox4x32-10 block; all arguments are uint64 holding 32-bit words."""
    # unrolled: a loop here is about twice as slow
    c0, c1, c2, c3 = _round(c0, c1, c2, c3, k0, k1)
    k0, k1 = _bump(k0, k1)
    c0, c1, c2, c3 = _round(c0, c1, c2, c3, k0, k1)
    k0, k1 = _bump(k0, k1)
    c0, c1, c2, c3 = _round(c0, c1, c2, c3, k0, k1)
    k0, k1 = _bump(k0, k1)
    c0, c1, c2, c3 = _round(c0, c1, c2, c3, k0, k1)
    k0, k1 = _bump(k0, k1)
    c0, c1, c2, c3 = _round(c0, c1, c2, c3, k0, k1)
    k0, k1 = _bump(k0, k1)
    c0, c1, c2, c3 = _round(c0, c1, c2, c3, k0, k1)
    k0, k1 = _bump(k0, k1)
    c0, c1, c2, c3 = _round(c0, c1, c2, c3, k0, k1)
    k0, k1 = _bump(k0, k1)
    c0, c1, c2, c3 = _round(c0, c1, c2, c3, k0, k1)
    k0, k1 = _bump(k0, k1)
    c0, c1, c2, c3 = _round(c0, c1, c2, c3, k0, k1)
    k0, k1 = _bump(k0, k1)
    return _round(c0, c1, c2, c3, k0, k1)


@njit(cache=True, nogil=True)
def _to_unit(a, b):
    # 52 random bits -> (k + 1/2) 2^-52, exact and strictly inside (0, 1)
    k = ((a >> np.uint64(6)) << np.uint64(26)) | (b >> np.uint64(6))
    return (float(k) + 0.5) * (1.0 / 4503599627370496.0)


@njit(cache=True, nogil=True)
def uniform_pair(k0, k1, rep, row):
    """The two uniforms used by row ``row`` of replication ``rep``."""
    c1 = np.uint64(rep) & _MASK32
    c2 = np.uint64(rep) >> _S32
    x0, x1, x2, x3 = philox4x32(np.uint64(row), c1, c2, np.uint64(0), k0, k1)
    return _to_unit(x0, x1), _to_unit(x2, x3)


@njit(nogil=True)
def _extremes(k0, k1, rep0, count, rho, sig, reach, stop_x, stop_y, out):
    """Running max/min of both coordinates for replications rep0..rep0+count-1.

    ``sig`` is sqrt(1 - rho^2) per row and ``reach`` = max(|rho| + sig).
    A replication stops scanning once max xi > stop_x or max eta > stop_y;
    its partial maxima then already exceed those thresholds.
    """
    # Skip rule: if both uniforms lie in (Phi(-a), Phi(a)) then |xi| < a and
    # |eta| < a * reach, so with a chosen from the running extremes the row
    # cannot move any of them and its quantiles are not needed.  The result
    # is identical to the full scan.  a changes only when an extreme does.
    n = rho.size
    for r in range(count):
        rep = rep0 + r
        mx = -math.inf
        my = -math.inf
        nx = math.inf
        ny = math.inf
        lo = 0.5
        hi = 0.5
        for j in range(n):
            u1, u2 = uniform_pair(k0, k1, rep, j)
            if lo < u1 < hi and lo < u2 < hi:
                continue
            z1 = _ndtri(u1)
            eta = rho[j] * z1 + sig[j] * _ndtri(u2)
            if z1 > mx or z1 < nx or eta > my or eta < ny:
                mx = max(mx, z1)
                my = max(my, eta)
                nx = min(nx, z1)
                ny = min(ny, eta)
                if mx > stop_x or my > stop_y:
                    break
                a = min(mx, -nx, my / reach, -ny / reach)
                if a > 0.0:
                    lo = _phi_cdf(-a)
                    hi = 1.0 - lo
        out[0, r] = mx
        out[1, r] = my
        out[2, r] = nx
        out[3, r] = ny


@njit(nogil=True)
def _draw_pairs(k0, k1, rep, rho, out):
    sig = math.sqrt(max(1.0 - rho * rho, 0.0))
    for j in range(out.shape[1]):
        u1, u2 = uniform_pair(k0, k1, rep, j)
        z1 = _ndtri(u1)
        out[0, j] = z1
        out[1, j] = rho * z1 + sig * _ndtri(u2)


def draw_pairs(rho: float, count: int, seed: int, rep: int = 0) -> np.ndarray:
    """``count`` pairs with correlation ``rho`` from the stream of replication ``rep``; shape (2, count)."""
    if not abs(rho) <= 1.0:
        raise DomainError(f"|rho| must be <= 1, got {rho!r}")
    k0, k1 = _split_seed(seed)
    out = np.empty((2, int(count)))
    _draw_pairs(k0, k1, int(rep), float(rho), out)
    return out


@dataclass(frozen=True)
class McEstimate:
    estimate: float
    std_error: float
    replications: int
    seed: int

    @classmethod
    def from_hits(cls, hits: int, replications: int, seed: int) -> "McEstimate":
        p = hits / replications
        return cls(p, math.sqrt(p * (1.0 - p) / replications), replications, seed)


def _split_seed(seed: int) -> tuple[np.uint64, np.uint64]:
    if int(seed) != seed or not 0 <= seed < 2**64:
        raise DomainError(f"seed must be an integer in [0, 2**64), got {seed!r}")
    seed = int(seed)
    return np.uint64(seed & 0xFFFFFFFF), np.uint64(seed >> 32)


def sample_pair(rho: float, u1: float, u2: float) -> tuple[float, float]:
    """(z1, rho z1 + sqrt(1 - rho^2) z2) with z_k the normal quantiles of u_k."""
    if not abs(rho) <= 1.0:
        raise DomainError(f"|rho| must be <= 1, got {rho!r}")
    if not (0.0 < u1 < 1.0 and 0.0 < u2 < 1.0):
        raise DomainError("uniforms must lie in the open interval (0, 1)")
    z1, z2 = _ndtri(u1), _ndtri(u2)
    return z1, rho * z1 + math.sqrt(max(1.0 - rho * rho, 0.0)) * z2


def row_correlations(model: CorrelationModel, n: int) -> np.ndarray:
    """rho_n1..rho_nn as one array (Monte Carlo touches every row anyway)."""
    rho, wt = zip(*model.blocks(n))
    return np.repeat(np.concatenate(rho), np.concatenate(wt).astype(np.int64))


def simulate_extremes(
    model: CorrelationModel,
    n: int,
    replications: int,
    seed: int,
    threads: int = 1,
    stop: tuple[float, float] = (math.inf, math.inf),
) -> np.ndarray:
    """Per-replication (max xi, max eta, min xi, min eta), shape (4, replications).

    ``stop`` gives thresholds on the scaled maxima past which a replication
    may stop early (its maxima are then only lower bounds above ``stop``).
    """
    if replications < 1:
        raise DomainError("replications must be >= 1")
    k0, k1 = _split_seed(seed)
    rho = row_correlations(model, n)
    sig = np.sqrt(np.maximum(1.0 - rho * rho, 0.0))
    reach = float(np.max(np.abs(rho) + sig))
    out = np.empty((4, replications))
    starts = list(range(0, replications, REP_BLOCK))

    def work(s):
        c = min(REP_BLOCK, replications - s)
        view = np.empty((4, c))
        _extremes(k0, k1, s, c, rho, sig, reach, float(stop[0]), float(stop[1]), view)
        out[:, s : s + c] = view

    if threads <= 1:
        for s in starts:
            work(s)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, starts))
    return out


def _check_reps(replications):
    if replications < MIN_REPLICATIONS:
        raise DomainError(f"replications must be >= {MIN_REPLICATIONS}")


def _thresholds(b, p: EvalPoint):
    return (
        upper_threshold(b, p.x2),
        upper_threshold(b, p.y2),
        lower_threshold(b, p.x1),
        lower_threshold(b, p.y1),
    )


def simulate_joint_grid(
    model: CorrelationModel, n: int, points, replications: int, seed: int, threads: int = 1
) -> list[McEstimate]:
    """Joint-event frequencies at several points from one common set of draws."""
    _check_reps(replications)
    points = list(points)
    if not points:
        raise DomainError("empty point grid")
    b = solve_bn(n)
    thr = [_thresholds(b, p) for p in points]
    stop = (max(t[0] for t in thr), max(t[1] for t in thr))
    ext = simulate_extremes(model, n, replications, seed, threads, stop)
    res = []
    for ux, uy, vx, vy in thr:
        hit = (ext[0] <= ux) & (ext[1] <= uy) & (ext[2] <= vx) & (ext[3] <= vy)
        res.append(McEstimate.from_hits(int(np.count_nonzero(hit)), replications, seed))
    return res


def simulate_joint(
    model: CorrelationModel, n: int, p: EvalPoint, replications: int, seed: int, threads: int = 1
) -> McEstimate:
    """Frequency of {max xi <= u_n(x2), max eta <= u_n(y2), min xi <= v_n(x1), min eta <= v_n(y1)}."""
    return simulate_joint_grid(model, n, [p], replications, seed, threads)[0]


def simulate_abs_max(
    model: CorrelationModel, n: int, x: float, y: float, replications: int, seed: int, threads: int = 1
) -> McEstimate:
    """Frequency of {max|xi| <= b_n + (x + log 2)/b_n, max|eta| <= b_n + (y + log 2)/b_n}."""
    _check_reps(replications)
    b = solve_bn(n).bn
    a = b + (x + math.log(2.0)) / b
    c = b + (y + math.log(2.0)) / b
    ext = simulate_extremes(model, n, replications, seed, threads, (a, c))
    hit = (ext[0] <= a) & (ext[1] <= c) & (-ext[2] <= a) & (-ext[3] <= c)
    return McEstimate.from_hits(int(np.count_nonzero(hit)), replications, seed)
