"""Exact finite-n probabilities for the independent triangular array.

Rows are independent, so every joint event over the row is a product of
per-row bivariate Gaussian probabilities.  Each product is accumulated as
a sum of logs.  Per-row probabilities are written as ``1 - union`` of
half-plane exclusions, and the union is expanded into positive tail terms
only (the impossible pairwise intersections vanish), so ``log1p(-union)``
keeps full relative accuracy even when the union is ~1/n.

Reduction contract: rows arrive in fixed chunks (``corr_models.CHUNK``),
each chunk is summed exactly with ``math.fsum`` and chunk sums are merged
by a fixed pairwise tree.  Results are therefore bit-identical for any
number of worker threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from numba import njit

from .corr_models import CorrelationModel
from .gauss_core import _phi_cdf, _phi_sf, bvnu_scalar, log_bvn_upper_quad
from .norming import EvalPoint, NormingConstant, lower_threshold, solve_bn, upper_threshold


class DegenerateProbabilityError(ArithmeticError):
    """A per-row probability evaluated to <= 0."""

    def __init__(self, term: str, row: int, n: int | None = None):
        self.term, self.row, self.n = term, row, n
        where = f" (n={n})" if n is not None else ""
        super().__init__(f"per-row probability for {term} is <= 0 at row i={row}{where}")


@dataclass(frozen=True)
class ProbabilityDecomposition:
    """log P of the four monotone events and their inclusion-exclusion total."""

    log_pM: float  # M_n <= u_n
    log_pMx: float  # M_n <= u_n, m_n1 > v_n(x1)
    log_pMy: float  # M_n <= u_n, m_n2 > v_n(y1)
    log_pBox: float  # v_n < m_n <= M_n <= u_n
    total: float

    @property
    def pM(self) -> float:
        return math.exp(self.log_pM)

    @property
    def pMx(self) -> float:
        return math.exp(self.log_pMx)

    @property
    def pMy(self) -> float:
        return math.exp(self.log_pMy)

    @property
    def pBox(self) -> float:
        return math.exp(self.log_pBox)


@njit(cache=True, nogil=True)
def _row_logs(rho, u2, w2, vx, vy, out):
    """Per-row log-probabilities of the four events; returns first bad row or -1.

    out[:, 0..3] = log P(A), log P(A, xi > vx), log P(A, eta > vy), log P(box)
    with A = {xi <= u2, eta <= w2}.
    """
    e1 = _phi_sf(u2)
    e2 = _phi_sf(w2)
    e3 = _phi_cdf(vx)
    e4 = _phi_cdf(vy)
    bad = -1
    for j in range(rho.size):
        r = rho[j]
        i12 = bvnu_scalar(u2, w2, r)
        i34 = bvnu_scalar(-vx, -vy, r)
        i14 = bvnu_scalar(u2, -vy, -r)
        i23 = bvnu_scalar(-vx, w2, -r)
        ua = (e1 + e2) - i12
        ub = ua + (e3 - i23)
        uc = ua + (e4 - i14)
        ud = ua + (e3 - i23) + (e4 - i14) - i34
        for col, u in enumerate((ua, ub, uc, ud)):
            if u >= 1.0:
                out[j, col] = -math.inf
                if bad < 0:
                    bad = j * 4 + col
            else:
                out[j, col] = math.log1p(-max(u, 0.0))
    return bad


@njit(cache=True, nogil=True)
def _row_tails(rho, u, w, out):
    # 1 - F_i(u, w)
    e = _phi_sf(u) + _phi_sf(w)
    for j in range(rho.size):
        out[j] = e - bvnu_scalar(u, w, rho[j])


def pairwise_merge(values: list[float]) -> float:
    """Fixed-shape pairwise tree sum."""
    vals = list(values)
    if not vals:
        return 0.0
    while len(vals) > 1:
        nxt = [vals[k] + vals[k + 1] for k in range(0, len(vals) - 1, 2)]
        if len(vals) % 2:
            nxt.append(vals[-1])
        vals = nxt
    return vals[0]


def _map_chunks(fn, chunks: Iterable, threads: int):
    if threads <= 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, chunks))


def _with_offsets(blocks):
    # attach the 1-based index of each chunk's first row
    start = 1
    for rho, wt in blocks:
        yield start, rho, wt
        start += int(wt.sum())


def four_event_logs(blocks, u2, w2, vx, vy, threads=1, n=None):
    """Sum of per-row log-probabilities of the four events over all rows."""

    def work(item):
        start, rho, wt = item
        out = np.empty((rho.size, 4))
        bad = _row_logs(np.ascontiguousarray(rho, dtype=float), u2, w2, vx, vy, out)
        if bad >= 0:
            j, col = divmod(bad, 4)
            row = start + int(wt[:j].sum())
            raise DegenerateProbabilityError(("pM", "pMx", "pMy", "pBox")[col], row, n)
        weighted = out * wt[:, None]
        return [math.fsum(weighted[:, c]) for c in range(4)]

    per_chunk = _map_chunks(work, _with_offsets(blocks), threads)
    return tuple(pairwise_merge([c[k] for c in per_chunk]) for k in range(4))


def decomposition_from_rhos(blocks, b: NormingConstant, p: EvalPoint, threads=1, n=None) -> ProbabilityDecomposition:
    u2 = upper_threshold(b, p.x2)
    w2 = upper_threshold(b, p.y2)
    vx = lower_threshold(b, p.x1)
    vy = lower_threshold(b, p.y1)
    la, lb, lc, ld = four_event_logs(blocks, u2, w2, vx, vy, threads=threads, n=n)
    pa, pb, pc, pd = (math.exp(v) for v in (la, lb, lc, ld))
    total = (pa - pb) - (pc - pd)
    return ProbabilityDecomposition(la, lb, lc, ld, min(max(total, 0.0), 1.0))


def joint_prob_exact(model: CorrelationModel, n: int, p: EvalPoint, threads: int = 1) -> ProbabilityDecomposition:
    """P(M_n <= u_n, m_n <= v_n) with its four-event decomposition."""
    b = solve_bn(n)
    return decomposition_from_rhos(model.blocks(n), b, p, threads=threads, n=n)


def abs_max_prob_exact(model: CorrelationModel, n: int, x: float, y: float, threads: int = 1) -> float:
    """P(max|xi| <= b_n + (x + log 2)/b_n, max|eta| <= b_n + (y + log 2)/b_n)."""
    b = solve_bn(n)
    a = b.bn + (x + math.log(2.0)) / b.bn
    c = b.bn + (y + math.log(2.0)) / b.bn
    logs = four_event_logs(model.blocks(n), a, c, -a, -c, threads=threads, n=n)
    return math.exp(logs[3])


def tail_sum(model: CorrelationModel, n: int, x: float, y: float, threads: int = 1) -> float:
    """sum_i (1 - F_i(u_n(x), u_n(y)))."""
    b = solve_bn(n)
    u, w = upper_threshold(b, x), upper_threshold(b, y)

    def work(block):
        rho, wt = block
        out = np.empty(rho.size)
        _row_tails(np.ascontiguousarray(rho, dtype=float), u, w, out)
        return math.fsum(out * wt)

    return pairwise_merge(_map_chunks(work, model.blocks(n), threads))


def cross_tail_sum(model: CorrelationModel, n: int, p: EvalPoint, threads: int = 1) -> tuple[float, float]:
    """(sum_i P(xi > u_n(x2), eta <= v_n(y1)), sum_i P(xi <= v_n(x1), eta > u_n(y2))).

    The terms are far below double-precision absolute resolution, so they
    go through the log-space conditional integral rather than the orthant
    routine.
    """
    b = solve_bn(n)
    u2, w2 = upper_threshold(b, p.x2), upper_threshold(b, p.y2)
    vx, vy = lower_threshold(b, p.x1), lower_threshold(b, p.y1)

    def work(block):
        rho, wt = block
        l1 = log_bvn_upper_quad(u2, -vy, -rho)
        l2 = log_bvn_upper_quad(-vx, w2, -rho)
        return math.fsum(np.exp(l1) * wt), math.fsum(np.exp(l2) * wt)

    parts = _map_chunks(work, model.blocks(n), threads)
    return pairwise_merge([q[0] for q in parts]), pairwise_merge([q[1] for q in parts])


def log_cross_tail_sum(model: CorrelationModel, n: int, p: EvalPoint, threads: int = 1) -> tuple[float, float]:
    """Logarithms of :func:`cross_tail_sum`, safe when the sums underflow."""
    b = solve_bn(n)
    u2, w2 = upper_threshold(b, p.x2), upper_threshold(b, p.y2)
    vx, vy = lower_threshold(b, p.x1), lower_threshold(b, p.y1)

    def lse(logs, wt):
        logs = logs + np.log(wt)
        top = float(np.max(logs))
        if top == -math.inf:
            return top
        return top + math.log(math.fsum(np.exp(logs - top)))

    def work(block):
        rho, wt = block
        return (
            lse(log_bvn_upper_quad(u2, -vy, -rho), wt),
            lse(log_bvn_upper_quad(-vx, w2, -rho), wt),
        )

    parts = _map_chunks(work, model.blocks(n), threads)
    out = []
    for k in range(2):
        logs = np.array([q[k] for q in parts])
        top = float(np.max(logs))
        out.append(top if top == -math.inf else top + math.log(math.fsum(np.exp(logs - top))))
    return out[0], out[1]
