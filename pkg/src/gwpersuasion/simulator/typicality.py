"""Joint typicality tests and the law of a random codeword's joint type.

A sequence tuple is delta-typical for a target joint law when its empirical
joint distribution is within L1 distance delta of the target and puts no mass
where the target has none.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from ..equilibria import BudgetExceeded
from ..model import joint_mass
from ..probcore import entropy_of

L1_SLACK = 1e-12
DELTA_FLOOR = 0.05
DEFAULT_ETA = 0.1
SCHEDULE_BASE = 0.4
SCHEDULE_REF_N = 50
HALF_LIMIT = 2_000_000
LN2 = math.log(2.0)


@dataclass(frozen=True)
class TypicalityConfig:
    delta: float
    eta: float = DEFAULT_ETA

    def __post_init__(self):
        if not (self.delta > 0 and self.eta > 0):
            raise ValueError("delta and eta must be > 0")


def delta_schedule(n: int) -> float:
    """Slack shrinking like n^(-1/3): wide enough for the source to stay typical,
    narrow enough for beliefs to settle as n grows."""
    return SCHEDULE_BASE * (SCHEDULE_REF_N / n) ** (1.0 / 3.0)


def default_config(instance, policy, eta: float = DEFAULT_ETA, n: int | None = None) -> TypicalityConfig:
    """delta = eta * H(U|W0,W1,W2), raised to the blocklength schedule when n is
    given (to DELTA_FLOOR otherwise)."""
    mass = joint_mass(instance, policy)
    h_cond = entropy_of(mass) - entropy_of(mass.sum(axis=0))
    floor = DELTA_FLOOR if n is None else delta_schedule(n)
    return TypicalityConfig(max(eta * h_cond, floor), eta)


def margin_rates(instance, policy, eta: float = DEFAULT_ETA) -> tuple:
    """Split rates I(U;W0)+eta, I(U;W1|W0)+eta, I(U;W2|W0)+eta."""
    from ..model import rate_informations
    info = rate_informations(joint_mass(instance, policy), "Qtilde0")
    return tuple(float(i + eta) for i in info)


def joint_counts(sequences, sizes) -> np.ndarray:
    """Empirical joint count table of aligned integer sequences."""
    flat = np.ravel_multi_index(tuple(np.asarray(s) for s in sequences), sizes)
    return np.bincount(flat, minlength=int(np.prod(sizes))).reshape(sizes)


def is_typical(counts, target, delta: float) -> bool:
    counts = np.asarray(counts, dtype=float)
    n = counts.sum()
    if np.any((counts > 0) & (target <= 0)):
        return False
    return float(np.abs(counts / n - target).sum()) <= delta + L1_SLACK


def typical_rows(counts, target, delta: float) -> np.ndarray:
    """Vectorized test over the leading axis of a stack of count tables."""
    counts = np.asarray(counts, dtype=float)
    k = counts.shape[0]
    flat = counts.reshape(k, -1)
    t = np.asarray(target, dtype=float).reshape(-1)
    n = flat.sum(axis=1, keepdims=True)
    dist = np.abs(flat / n - t).sum(axis=1)
    support_ok = ~np.any((flat > 0) & (t <= 0), axis=1)
    return support_ok & (dist <= delta + L1_SLACK)


# ---------------------------------------------------------------------------
# law of the joint type of an i.i.d. codeword against a fixed sequence

def _bounded_compositions(total: int, target, n: int, budget: float):
    """Count vectors summing to ``total`` with sum_x |N_x/n - target_x| <= budget.

    Symbols are filled one at a time; a frontier entry survives only if the
    remaining mass can still close the gap (triangle inequality bound).
    """
    k = target.shape[0]
    counts = np.zeros((1, 0), dtype=np.int64)
    dist = np.zeros(1)
    left = np.array([total], dtype=np.int64)
    for x in range(k - 1):
        rest_target = float(target[x + 1:].sum())
        slack = budget - dist
        lo = np.maximum(np.ceil((target[x] - slack) * n - 1e-9), 0).astype(np.int64)
        hi = np.minimum(np.floor((target[x] + slack) * n + 1e-9), left).astype(np.int64)
        width = np.maximum(hi - lo + 1, 0)
        if width.sum() > HALF_LIMIT:
            raise BudgetExceeded("cell too large for exact joint-type enumeration")
        parent = np.repeat(np.arange(counts.shape[0]), width)
        offset = np.arange(parent.size) - np.repeat(np.cumsum(width) - width, width)
        value = lo[parent] + offset
        new_dist = dist[parent] + np.abs(value / n - target[x])
        new_left = left[parent] - value
        keep = new_dist + np.abs(new_left / n - rest_target) <= budget
        counts = np.hstack([counts[parent][keep], value[keep][:, None]])
        dist, left = new_dist[keep], new_left[keep]
    dist = dist + np.abs(left / n - target[k - 1])
    counts = np.hstack([counts, left[:, None]])
    keep = dist <= budget
    return counts[keep]


def _cell_outcomes(n_c: int, row, target, n: int, budget: float):
    """Admissible count vectors of one cell with their L1 share and log-probability."""
    m = row.shape[0]
    allowed = (row > 0) & (target > 0)
    fixed = float(target[~allowed].sum())
    idx = np.nonzero(allowed)[0]
    if n_c == 0:
        d = np.array([float(target.sum())])
        keep = d <= budget
        return np.zeros((int(keep.sum()), m), dtype=np.int64), d[keep], np.zeros(int(keep.sum()))
    if idx.size == 0:
        return np.zeros((0, m), dtype=np.int64), np.zeros(0), np.zeros(0)
    if idx.size == 1:
        comp = np.array([[n_c]], dtype=np.int64)
    elif idx.size == 2:
        k = np.arange(n_c + 1, dtype=np.int64)
        comp = np.stack([k, n_c - k], axis=1)
    else:
        comp = _bounded_compositions(n_c, target[idx], n, budget - fixed)
    d = np.abs(comp / n - target[idx]).sum(axis=1) + fixed
    keep = d <= budget
    comp = comp[keep]
    d = d[keep]
    logp = (gammaln(n_c + 1) - gammaln(comp + 1).sum(axis=1)
            + (comp * np.log(row[idx])).sum(axis=1))
    counts = np.zeros((comp.shape[0], m), dtype=np.int64)
    counts[:, idx] = comp
    return counts, d, logp


def _combine(cells, budget, m):
    """Outer product of per-cell outcomes, pruned to total distance <= budget."""
    counts = np.zeros((1, 0, m), dtype=np.int64)
    d = np.zeros(1)
    logp = np.zeros(1)
    for c_counts, c_d, c_logp in cells:
        tot = d[:, None] + c_d[None, :]
        ii, jj = np.nonzero(tot <= budget)
        if ii.size > HALF_LIMIT:
            raise BudgetExceeded("joint-type enumeration exceeds its size limit")
        counts = np.concatenate([counts[ii], c_counts[jj][:, None, :]], axis=1)
        d = tot[ii, jj]
        logp = logp[ii] + c_logp[jj]
    return counts, d, logp


def _logsumexp(x) -> float:
    if x.size == 0:
        return -math.inf
    top = float(x.max())
    if top == -math.inf:
        return top
    return top + math.log(float(np.exp(x - top).sum()))


class RestrictedTypeLaw:
    """Joint type of a random codeword restricted to the typical set.

    Positions are grouped into cells (one per value of the already fixed
    sequences); in cell c the codeword symbols are i.i.d. ``rows[c]``. The
    event of interest is that the full empirical joint lies within L1
    ``delta`` of ``targets`` (shape cells x symbols, entries are joint masses).
    Cells with a single admissible outcome are folded into a fixed offset; the
    rest are split in two halves combined through sorted cumulative sums.
    """

    def __init__(self, cell_sizes, rows, targets, delta: float):
        self.cell_sizes = np.asarray(cell_sizes, dtype=np.int64)
        self.rows = np.asarray(rows, dtype=float)
        self.targets = np.asarray(targets, dtype=float)
        self.n = int(self.cell_sizes.sum())
        self.m = self.rows.shape[1]
        budget = delta + L1_SLACK
        self.fixed = np.zeros((len(self.cell_sizes), self.m), dtype=np.int64)
        self.log_p = -math.inf
        # empty cells and cells with one admissible symbol, vectorized
        allowed = (self.rows > 0) & (self.targets > 0)
        n_allowed = allowed.sum(axis=1)
        sizes = self.cell_sizes
        if np.any((sizes > 0) & (n_allowed == 0)):
            return
        empty = sizes == 0
        single = (~empty) & (n_allowed == 1)
        fixed_d = float(self.targets[empty].sum())
        fixed_logp = 0.0
        if np.any(single):
            sym = allowed[single].argmax(axis=1)
            cells = np.nonzero(single)[0]
            t = self.targets[single]
            picked = t[np.arange(cells.size), sym]
            fixed_d += float((np.abs(sizes[single] / self.n - picked) + t.sum(axis=1) - picked).sum())
            fixed_logp += float((sizes[single] * np.log(self.rows[cells, sym])).sum())
            self.fixed[cells, sym] = sizes[single]
        free = []
        for c in np.nonzero(~(empty | single))[0]:
            out = _cell_outcomes(int(sizes[c]), self.rows[c], self.targets[c], self.n, budget - fixed_d)
            if out[0].shape[0] == 0:
                return
            if out[0].shape[0] == 1:
                self.fixed[c] = out[0][0]
                fixed_d += float(out[1][0])
                fixed_logp += float(out[2][0])
            else:
                free.append((c, out))
        budget -= fixed_d
        if budget < 0:
            return
        self.budget = budget
        self.fixed_logp = fixed_logp
        # balance the two halves by outcome counts
        free.sort(key=lambda item: -item[1][0].shape[0])
        half_a, half_b, size_a, size_b = [], [], 0.0, 0.0
        for item in free:
            s = math.log(item[1][0].shape[0])
            if size_a <= size_b:
                half_a.append(item)
                size_a += s
            else:
                half_b.append(item)
                size_b += s
        self.half_a = [c for c, _ in half_a]
        self.half_b = [c for c, _ in half_b]
        self.a = _combine([o for _, o in half_a], budget, self.m)
        b = _combine([o for _, o in half_b], budget, self.m)
        order_b = np.argsort(b[1], kind="stable")
        self.b = (b[0][order_b], b[1][order_b], b[2][order_b])
        self.b_logcdf = np.logaddexp.accumulate(self.b[2])
        self.a_tail = self._logcdf_b(budget - self.a[1])
        self.log_p = fixed_logp + _logsumexp(self.a[2] + self.a_tail)

    def _logcdf_b(self, x):
        pos = np.searchsorted(self.b[1], x, side="right") - 1
        out = np.full(np.shape(x), -np.inf)
        ok = pos >= 0
        out[ok] = self.b_logcdf[pos[ok]]
        return out

    def expected_fractions(self) -> np.ndarray:
        """E[count / cell size | typical] per cell and symbol (zero rows for empty cells)."""
        if self.log_p == -math.inf:
            return np.zeros((len(self.cell_sizes), self.m))
        out = self.fixed.astype(float)
        free_log_p = self.log_p - self.fixed_logp
        wa = np.exp(self.a[2] + self.a_tail - free_log_p)
        for j, c in enumerate(self.half_a):
            out[c] = wa @ self.a[0][:, j, :]
        if self.half_b:
            order_a = np.argsort(self.a[1], kind="stable")
            a_d = self.a[1][order_a]
            a_cdf = np.logaddexp.accumulate(self.a[2][order_a])
            pos = np.searchsorted(a_d, self.budget - self.b[1], side="right") - 1
            tail = np.full(pos.shape, -np.inf)
            tail[pos >= 0] = a_cdf[pos[pos >= 0]]
            wb = np.exp(self.b[2] + tail - free_log_p)
            for j, c in enumerate(self.half_b):
                out[c] = wb @ self.b[0][:, j, :]
        sizes = self.cell_sizes[:, None].astype(float)
        return np.divide(out, sizes, out=np.zeros_like(out), where=sizes > 0)

    def sample(self, rng) -> np.ndarray:
        """Draw a count table (cells x symbols) from the law conditioned on typicality."""
        if self.log_p == -math.inf:
            raise ValueError("typical set is empty for this law")
        out = self.fixed.copy()
        wa = np.exp(self.a[2] + self.a_tail - self.a_tail.max() - self.a[2].max())
        ia = int(rng.choice(wa.shape[0], p=wa / wa.sum())) if wa.shape[0] > 1 else 0
        limit = np.searchsorted(self.b[1], self.budget - self.a[1][ia], side="right")
        wb = np.exp(self.b[2][:limit] - self.b[2][:limit].max())
        ib = int(rng.choice(limit, p=wb / wb.sum())) if limit > 1 else 0
        for j, c in enumerate(self.half_a):
            out[c] = self.a[0][ia, j]
        for j, c in enumerate(self.half_b):
            out[c] = self.b[0][ib, j]
        return out


def log_success(log_p: float, log_k: float) -> float:
    """log P(at least one of K i.i.d. trials succeeds) for success log-probability log_p."""
    if log_p == -math.inf:
        return -math.inf
    p = math.exp(log_p)
    if p >= 1.0:
        return 0.0
    # K * (-log(1 - p)) in log domain
    log_rate = log_k + (math.log(-math.log1p(-p)) if p > 1e-300 else log_p)
    if log_rate < -30:
        return log_rate
    if log_rate > 6:
        return -math.exp(-math.exp(log_rate))
    return math.log(-math.expm1(-math.exp(log_rate)))


def log_failure(log_p: float, log_k: float) -> float:
    """log P(all K i.i.d. trials fail)."""
    if log_p == -math.inf:
        return 0.0
    p = math.exp(log_p)
    if p >= 1.0:
        return -math.inf
    rate = math.exp(log_k + (math.log(-math.log1p(-p)) if p > 1e-300 else log_p))
    return -rate
