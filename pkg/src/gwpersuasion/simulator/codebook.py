"""Random codebooks, the typicality encoder and block transmissions.

Two sources share one interface. ``Codebook`` stores every word explicitly and
is usable while ``n * (K0 + K0*K1 + K0*K2)`` fits a memory budget.
``CodebookEnsemble`` never materializes the books: for a source sequence it
draws the first typical codeword of a fresh random codebook directly, using
the exact law of a random word's joint type (see ``typicality``).
Message indices are zero based; index 0 plays the role of the failure word.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..equilibria import BudgetExceeded
from ..model import RateTriple, joint_mass
from .typicality import (LN2, RestrictedTypeLaw, TypicalityConfig, is_typical, joint_counts,
                         log_failure, margin_rates)

DEFAULT_MAX_SYMBOLS = 50_000_000
REJECTION_TRIES = 10_000


def message_bits(n: int, rate: float) -> int:
    """floor(n * R), guarded against representation error in n * R."""
    return int(math.floor(n * rate + 1e-9))


class CodingTargets:
    """Target joint laws and codeword generation laws of an information policy."""

    def __init__(self, instance, policy):
        mass = joint_mass(instance, policy)
        self.instance = instance
        self.policy = policy
        self.prior = np.asarray(instance.prior, dtype=float)
        self.mass = mass
        self.t0 = mass.sum(axis=(2, 3))   # U x W0
        self.t1 = mass.sum(axis=3)        # U x W0 x W1
        self.t2 = mass.sum(axis=2)        # U x W0 x W2
        self.q_w0 = self.t0.sum(axis=0)
        self.q_w1 = _conditional(self.t1.sum(axis=0), self.q_w0)
        self.q_w2 = _conditional(self.t2.sum(axis=0), self.q_w0)
        self.sizes = mass.shape

    @property
    def n_u(self) -> int:
        return self.sizes[0]


def _conditional(joint, marginal):
    out = np.zeros_like(joint)
    np.divide(joint, marginal[:, None], out=out, where=marginal[:, None] > 0)
    return out


def _draw(rng, probs, shape):
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    return np.searchsorted(cdf, rng.random(shape), side="right").astype(np.int16)


def _draw_conditional(rng, table, given):
    """Symbols drawn from table[given[i]] independently."""
    cdf = np.cumsum(table, axis=-1)
    cdf[..., -1] = 1.0
    r = rng.random(given.shape)
    return (r[..., None] >= cdf[given]).sum(axis=-1).astype(np.int16)


# ---------------------------------------------------------------------------
# explicit codebooks

@dataclass(frozen=True, eq=False)
class Codebook:
    n: int
    rates: RateTriple
    w0_words: np.ndarray   # K0 x n
    w1_words: np.ndarray   # K0 x K1 x n
    w2_words: np.ndarray   # K0 x K2 x n
    seed: int
    policy: object
    instance: object
    targets: CodingTargets = field(repr=False)

    @property
    def sizes(self) -> tuple:
        return (self.w0_words.shape[0], self.w1_words.shape[1], self.w2_words.shape[1])


def resolve_rates(instance, policy, config: TypicalityConfig, rates=None) -> RateTriple:
    if rates is None:
        return RateTriple(*margin_rates(instance, policy, config.eta))
    if isinstance(rates, RateTriple):
        return rates
    return RateTriple(*rates)


def generate_codebook(instance, policy, config: TypicalityConfig, n: int, seed: int,
                      rates=None, max_symbols: int = DEFAULT_MAX_SYMBOLS) -> Codebook:
    """Random codebook; ``rates`` defaults to the split rates plus ``config.eta``."""
    if n < 1:
        raise ValueError("blocklength must be >= 1")
    rates = resolve_rates(instance, policy, config, rates)
    bits = [message_bits(n, r) for r in (rates.R0, rates.R1, rates.R2)]
    if max(bits) > 40:
        raise BudgetExceeded(f"message sets of 2^{max(bits)} words cannot be stored")
    k0, k1, k2 = (1 << b for b in bits)
    need = n * (k0 + k0 * k1 + k0 * k2)
    if need > max_symbols:
        raise BudgetExceeded(f"codebook needs {need} stored symbols, budget is {max_symbols}")
    targets = CodingTargets(instance, policy)
    rng = np.random.default_rng(seed)
    w0 = _draw(rng, targets.q_w0, (k0, n))
    w1 = _draw_conditional(rng, targets.q_w1, np.broadcast_to(w0[:, None, :], (k0, k1, n)))
    w2 = _draw_conditional(rng, targets.q_w2, np.broadcast_to(w0[:, None, :], (k0, k2, n)))
    for arr in (w0, w1, w2):
        arr.setflags(write=False)
    return Codebook(n, rates, w0, w1, w2, seed, policy, instance, targets)


def _first_typical(u, words, extra, sizes, target, delta):
    """Index of the first word typical with (u, *extra), or -1."""
    n = u.shape[0]
    k = words.shape[0]
    base = np.ravel_multi_index((u,) + tuple(extra), sizes[:-1]) * sizes[-1]
    flat = base[None, :] + words
    cells = int(np.prod(sizes))
    counts = np.zeros((k, cells))
    for s in np.unique(flat):
        counts[:, s] = (flat == s).sum(axis=1)
    t = target.reshape(-1)
    dist = np.abs(counts / n - t).sum(axis=1)
    ok = ~np.any((counts > 0) & (t <= 0), axis=1) & (dist <= delta + 1e-12)
    hits = np.nonzero(ok)[0]
    return int(hits[0]) if hits.size else -1


def encode(codebook: Codebook, u_sequence, config: TypicalityConfig):
    """Returns (m0, m1, m2, (f0, f1, f2)); any failure sends (0, 0, 0)."""
    u = np.asarray(u_sequence, dtype=np.int64)
    if u.shape != (codebook.n,):
        raise ValueError(f"source sequence must have length {codebook.n}")
    tg = codebook.targets
    nu, k0, k1, k2 = tg.sizes
    m0 = _first_typical(u, codebook.w0_words, (), (nu, k0), tg.t0, config.delta)
    if m0 < 0:
        return 0, 0, 0, (True, False, False)
    w0 = codebook.w0_words[m0].astype(np.int64)
    m1 = _first_typical(u, codebook.w1_words[m0], (w0,), (nu, k0, k1), tg.t1, config.delta)
    m2 = _first_typical(u, codebook.w2_words[m0], (w0,), (nu, k0, k2), tg.t2, config.delta)
    f1, f2 = m1 < 0, m2 < 0
    if f1 or f2:
        return 0, 0, 0, (False, f1, f2)
    return m0, m1, m2, (False, False, False)


# ---------------------------------------------------------------------------
# traces

@dataclass(eq=False)
class BlockTrace:
    u: np.ndarray
    messages: tuple
    flags: tuple
    w0: np.ndarray          # transmitted codewords
    w1: np.ndarray
    w2: np.ndarray
    joint_typical: bool
    v1: Optional[np.ndarray] = None
    v2: Optional[np.ndarray] = None
    weight: float = 1.0
    posteriors: Optional[dict] = None

    @property
    def success(self) -> bool:
        return not any(self.flags)

    @property
    def n(self) -> int:
        return int(self.u.shape[0])


def _full_typical(targets: CodingTargets, u, w0, w1, w2, delta) -> bool:
    counts = joint_counts((u, w0, w1, w2), targets.sizes)
    return is_typical(counts, targets.mass, delta)


def codebook_trace(codebook: Codebook, u, config: TypicalityConfig, weight: float = 1.0) -> BlockTrace:
    m0, m1, m2, flags = encode(codebook, u, config)
    w0 = codebook.w0_words[m0].astype(np.int64)
    w1 = codebook.w1_words[m0, m1].astype(np.int64)
    w2 = codebook.w2_words[m0, m2].astype(np.int64)
    u = np.asarray(u, dtype=np.int64)
    typ = _full_typical(codebook.targets, u, w0, w1, w2, config.delta)
    return BlockTrace(u, (m0, m1, m2), flags, w0, w1, w2, typ, weight=weight)


# ---------------------------------------------------------------------------
# codebook ensemble

class CodebookEnsemble:
    """Random-codebook ensemble: each transmission uses a fresh random codebook."""

    def __init__(self, instance, policy, config: TypicalityConfig, n: int, rates=None):
        if n < 1:
            raise ValueError("blocklength must be >= 1")
        self.instance = instance
        self.policy = policy
        self.config = config
        self.n = n
        self.rates = resolve_rates(instance, policy, config, rates)
        self.bits = tuple(message_bits(n, r) for r in (self.rates.R0, self.rates.R1, self.rates.R2))
        self.log_k = tuple(b * LN2 for b in self.bits)
        self.targets = CodingTargets(instance, policy)
        self._laws = {}

    @property
    def sizes(self) -> tuple:
        return tuple(1 << b for b in self.bits)

    # laws of the joint type of a random word, keyed by the fixed-sequence type
    def law0(self, u_counts) -> RestrictedTypeLaw:
        key = (0, tuple(int(c) for c in u_counts))
        if key not in self._laws:
            tg = self.targets
            rows = np.broadcast_to(tg.q_w0, (tg.n_u, tg.q_w0.size))
            self._laws[key] = RestrictedTypeLaw(u_counts, rows, tg.t0, self.config.delta)
        return self._laws[key]

    def law_private(self, k: int, uw0_counts) -> RestrictedTypeLaw:
        """Law for the private word of decoder k given the (u, w0) count table."""
        uw0_counts = np.asarray(uw0_counts)
        key = (k, uw0_counts.tobytes())
        if key not in self._laws:
            tg = self.targets
            q = tg.q_w1 if k == 1 else tg.q_w2
            t = tg.t1 if k == 1 else tg.t2
            nu, k0 = uw0_counts.shape
            rows = np.broadcast_to(q[None, :, :], (nu,) + q.shape).reshape(nu * k0, -1)
            rows = np.where(rows.sum(axis=1, keepdims=True) > 0, rows, 1.0 / rows.shape[1])
            self._laws[key] = RestrictedTypeLaw(uw0_counts.reshape(-1), rows,
                                                t.reshape(nu * k0, -1), self.config.delta)
        return self._laws[key]

    def clear_cache(self):
        self._laws.clear()

    # ---- sampling helpers
    def _first_index(self, log_p: float, bits: int, rng) -> int:
        """Index of the first typical word among 2^bits, given that one exists."""
        k = 1 << bits
        if log_p >= 0:
            return 0
        log_rate = bits * LN2 + log_p
        if log_rate < -30:
            return min(k - 1, int(rng.integers(0, 1 << 53)) * k >> 53)
        p = math.exp(log_p)
        success = -math.expm1(k * math.log1p(-p)) if p > 1e-300 else -math.expm1(-math.exp(log_rate))
        v = rng.random()
        num = -math.log1p(-v * success)
        den = -math.log1p(-p) if p > 1e-300 else None
        if den is not None and den > 0:
            log_idx = math.log(num) - math.log(den) if num > 0 else -math.inf
        else:
            log_idx = (math.log(num) - log_p) if num > 0 else -math.inf
        if log_idx == -math.inf:
            return 0
        log2_idx = log_idx / LN2
        if log2_idx < 52:
            idx = int(math.floor(math.exp(log_idx)))
        else:
            shift = int(log2_idx) - 52
            idx = int(2.0 ** (log2_idx - shift)) << shift
        return min(idx, k - 1)

    def _arrange(self, cell_of, counts, rng):
        """Place a cells x symbols count table on positions grouped by cell."""
        out = np.empty(cell_of.shape[0], dtype=np.int64)
        for c in range(counts.shape[0]):
            pos = np.nonzero(cell_of == c)[0]
            if pos.size == 0:
                continue
            symbols = np.repeat(np.arange(counts.shape[1]), counts[c])
            out[pos] = rng.permutation(symbols)
        return out

    def _nontypical(self, rng, sampler, test):
        for _ in range(REJECTION_TRIES):
            word = sampler()
            if not test(word):
                return word
        raise RuntimeError("could not draw a non-typical failure word")

    def transmit(self, u, rng) -> BlockTrace:
        tg = self.targets
        nu, k0, k1, k2 = tg.sizes
        delta = self.config.delta
        u = np.asarray(u, dtype=np.int64)
        n = self.n
        u_counts = np.bincount(u, minlength=nu)
        law0 = self.law0(u_counts)
        f0 = rng.random() < math.exp(log_failure(law0.log_p, self.log_k[0]))
        f1 = f2 = False
        m = [0, 0, 0]
        sel = [None, None, None]
        if not f0:
            sel[0] = self._arrange(u, law0.sample(rng), rng)
            m[0] = self._first_index(law0.log_p, self.bits[0], rng)
            cell = u * k0 + sel[0]
            uw0 = np.bincount(cell, minlength=nu * k0).reshape(nu, k0)
            flags = []
            for k in (1, 2):
                law = self.law_private(k, uw0)
                fail = rng.random() < math.exp(log_failure(law.log_p, self.log_k[k]))
                flags.append(fail)
                if not fail:
                    sel[k] = self._arrange(cell, law.sample(rng), rng)
                    m[k] = self._first_index(law.log_p, self.bits[k], rng)
            f1, f2 = flags
        flags = (bool(f0), bool(f1), bool(f2))
        if not any(flags):
            w0, w1, w2 = sel
            messages = tuple(m)
        else:
            messages = (0, 0, 0)
            w0, w1, w2 = self._failure_words(u, f0, m, sel, flags, rng)
        typ = _full_typical(tg, u, w0, w1, w2, delta)
        return BlockTrace(u, messages, flags, w0, w1, w2, typ)

    def _failure_words(self, u, f0, m, sel, flags, rng):
        tg = self.targets
        nu, k0, k1, k2 = tg.sizes
        delta = self.config.delta
        n = self.n

        def draw0():
            return _draw(rng, tg.q_w0, n).astype(np.int64)

        if not f0 and m[0] == 0:
            w0 = sel[0]
            tested = True
        else:
            w0 = self._nontypical(rng, draw0,
                                  lambda w: is_typical(joint_counts((u, w), (nu, k0)), tg.t0, delta))
            tested = False
        out = [w0]
        for k, (q, t, kk) in ((1, (tg.q_w1, tg.t1, k1)), (2, (tg.q_w2, tg.t2, k2))):
            def draw_k(q=q):
                return _draw_conditional(rng, q, w0).astype(np.int64)
            if tested and not flags[k] and m[k] == 0:
                out.append(sel[k])
            elif tested:
                out.append(self._nontypical(
                    rng, draw_k,
                    lambda w, t=t, kk=kk: is_typical(joint_counts((u, w0, w), (nu, k0, kk)), t, delta)))
            else:
                out.append(draw_k())
        return out


# ---------------------------------------------------------------------------
# running trials

def trial_rng(seed: int, trial: int):
    return np.random.default_rng([int(seed), int(trial)])


def draw_source(rng, prior, n: int) -> np.ndarray:
    return _draw(rng, np.asarray(prior, dtype=float), n).astype(np.int64)


def simulate_traces(source, config: TypicalityConfig, trials: int, seed: int, strategies=None):
    """Independent transmissions, trial i seeded by (seed, i)."""
    traces = []
    prior = source.targets.prior
    for i in range(trials):
        rng = trial_rng(seed, i)
        u = draw_source(rng, prior, source.n)
        if isinstance(source, CodebookEnsemble):
            trace = source.transmit(u, rng)
        else:
            trace = codebook_trace(source, u, config)
        if strategies is not None:
            apply_strategies(trace, strategies, rng)
        traces.append(trace)
    return traces


def apply_strategies(trace: BlockTrace, strategies, rng=None):
    """Actions from symbol-level strategies applied to the transmitted codewords."""
    s1 = strategies.sigma_1[trace.w0, trace.w1]
    s2 = strategies.sigma_2[trace.w0, trace.w2]
    if strategies.is_pure():
        trace.v1, trace.v2 = s1.argmax(axis=1), s2.argmax(axis=1)
        return trace
    if rng is None:
        raise ValueError("mixed strategies need a random generator")
    trace.v1 = (rng.random((s1.shape[0], 1)) >= np.cumsum(s1, axis=1)).sum(axis=1)
    trace.v2 = (rng.random((s2.shape[0], 1)) >= np.cumsum(s2, axis=1)).sum(axis=1)
    trace.v1 = np.minimum(trace.v1, s1.shape[1] - 1)
    trace.v2 = np.minimum(trace.v2, s2.shape[1] - 1)
    return trace


def all_sequences(alphabet_size: int, n: int) -> np.ndarray:
    grids = np.indices((alphabet_size,) * n).reshape(n, -1).T
    return grids.astype(np.int64)


def sequence_probabilities(prior, seqs) -> np.ndarray:
    return np.prod(np.asarray(prior, dtype=float)[seqs], axis=1)


EXHAUSTIVE_LIMIT = 1 << 16


def exhaustive_traces(codebook: Codebook, config: TypicalityConfig, strategies=None):
    """One trace per source sequence, weighted by its probability."""
    nu = codebook.targets.n_u
    if nu ** codebook.n > EXHAUSTIVE_LIMIT:
        raise BudgetExceeded(f"{nu}^{codebook.n} source sequences exceed the enumeration limit")
    seqs = all_sequences(nu, codebook.n)
    probs = sequence_probabilities(codebook.targets.prior, seqs)
    traces = []
    for u, p in zip(seqs, probs):
        if p <= 0:
            continue
        trace = codebook_trace(codebook, u, config, weight=float(p))
        if strategies is not None:
            if not strategies.is_pure():
                raise ValueError("exhaustive traces need pure strategies")
            apply_strategies(trace, strategies)
        traces.append(trace)
    return traces
