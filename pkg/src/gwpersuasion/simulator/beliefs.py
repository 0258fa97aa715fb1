"""Message-conditional beliefs and their divergence from the single-letter targets.

Explicit codebooks with few source sequences are handled by exact summation
over all sequences. For the codebook ensemble the posterior of the source
given the transmitted words is exchangeable within the positions sharing the
same word symbols, so it is a law on count tables. That law is summed exactly
when the tables are few and sampled by a Metropolis chain otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy.special import gammaln

from ..game import game_from_joint
from ..model import is_uninformative
from .codebook import (EXHAUSTIVE_LIMIT, Codebook, CodebookEnsemble, all_sequences, encode,
                       sequence_probabilities, simulate_traces)
from .typicality import TypicalityConfig, log_success, typical_rows

EXACT_CONFIG_LIMIT = 200_000
MCMC_SWEEPS = 60


class NoConditioningMass(RuntimeError):
    """No successful transmission to condition on."""


def kl_bits(p, q) -> np.ndarray:
    """Row-wise KL(p || q) in bits; 0 log 0 = 0, positive mass on q = 0 gives inf.

    Rounding can push a zero divergence slightly negative; rows are clipped at 0.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    pos = p > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(pos, p * (np.log2(np.where(pos, p, 1.0)) - np.log2(q)), 0.0)
    return np.maximum(terms.sum(axis=-1), 0.0)


# ---------------------------------------------------------------------------
# count-table posteriors for the ensemble

class _TablePosterior:
    """Posterior over the source given the words of the observed channels.

    ``observed`` lists the private channels (1, 2) whose words are known in
    addition to the common word.
    """

    def __init__(self, ens: CodebookEnsemble, trace, observed: tuple):
        self.ens = ens
        tg = ens.targets
        self.nu, self.k0, self.k1, self.k2 = tg.sizes
        self.observed = observed
        self.m = trace.messages
        w1 = trace.w1 if 1 in observed else np.zeros_like(trace.w1)
        w2 = trace.w2 if 2 in observed else np.zeros_like(trace.w2)
        keys = np.stack([trace.w0, w1, w2], axis=1)
        self.cells, self.cell_of, sizes = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
        self.cell_of = self.cell_of.reshape(-1)
        self.sizes = sizes
        c = self.cells.shape[0]
        self.c = c
        self.map0 = np.zeros((c, self.k0))
        self.map0[np.arange(c), self.cells[:, 0]] = 1
        self.map1 = np.zeros((c, self.k0 * self.k1))
        self.map1[np.arange(c), self.cells[:, 0] * self.k1 + self.cells[:, 1]] = 1
        self.map2 = np.zeros((c, self.k0 * self.k2))
        self.map2[np.arange(c), self.cells[:, 0] * self.k2 + self.cells[:, 2]] = 1
        # symbols of u allowed in each cell by the support of the targets
        allowed = tg.t0[:, self.cells[:, 0]].T > 0
        if 1 in observed:
            allowed &= tg.t1[:, self.cells[:, 0], self.cells[:, 1]].T > 0
        if 2 in observed:
            allowed &= tg.t2[:, self.cells[:, 0], self.cells[:, 2]].T > 0
        self.allowed = allowed
        self.log_prior = np.log(np.where(tg.prior > 0, tg.prior, 1.0))
        self.start = np.zeros((c, self.nu), dtype=np.int64)
        np.add.at(self.start, (self.cell_of, trace.u), 1)

    # aggregates
    def a0(self, table):
        return (table.T @ self.map0).astype(np.int64)          # U x W0

    def a1(self, table):
        return (table.T @ self.map1).reshape(self.nu, self.k0, self.k1)

    def a2(self, table):
        return (table.T @ self.map2).reshape(self.nu, self.k0, self.k2)

    def _index_term(self, law, index: int) -> float:
        if index == 0:
            return 0.0
        p = math.exp(law.log_p)
        if p >= 1.0:
            return -math.inf
        return -math.exp(math.log(index) + (math.log(-math.log1p(-p)) if p > 1e-300 else law.log_p))

    def _a0_extra(self, a0) -> float:
        """Log-weight terms that depend on the table only through the (u, w0) counts."""
        ens = self.ens
        total = self._index_term(ens.law0(a0.sum(axis=1)), self.m[0])
        for k in (1, 2):
            law = ens.law_private(k, a0)
            if k in self.observed:
                total += self._index_term(law, self.m[k])
            else:
                total += log_success(law.log_p, ens.log_k[k])
        return total

    def _typical(self, tables) -> np.ndarray:
        tg, delta = self.ens.targets, self.ens.config.delta
        keep = typical_rows(np.einsum("scu,cw->suw", tables, self.map0), tg.t0, delta)
        if 1 in self.observed:
            agg = np.einsum("scu,cw->suw", tables, self.map1)
            keep &= typical_rows(agg, tg.t1.reshape(self.nu, -1), delta)
        if 2 in self.observed:
            agg = np.einsum("scu,cw->suw", tables, self.map2)
            keep &= typical_rows(agg, tg.t2.reshape(self.nu, -1), delta)
        return keep

    def extra(self, table) -> float:
        """Log-weight beyond the multinomial-times-prior part; -inf if excluded."""
        if not self._typical(table[None])[0]:
            return -math.inf
        return self._a0_extra(self.a0(table))

    def log_weight(self, table) -> float:
        base = float(-gammaln(table + 1).sum() + (table.sum(axis=0) * self.log_prior).sum())
        return base + self.extra(table)

    def _type_belief(self, k, a0, frac):
        e = self.ens.law_private(k, a0).expected_fractions()        # (U*W0) x Wk
        e = e.reshape(self.nu, self.k0, -1)[:, self.cells[:, 0], :]  # U x C x Wk
        return np.einsum("cu,ucw->cw", frac, e)

    def statistic(self, table) -> dict:
        frac = table / self.sizes[:, None]
        out = {"u": frac}
        a0 = self.a0(table)
        for k in (1, 2):
            if k not in self.observed:
                out[f"type{k}"] = self._type_belief(k, a0, frac)
        return out

    # enumeration -----------------------------------------------------------
    def _cell_choices(self, c):
        idx = np.nonzero(self.allowed[c])[0]
        n_c = int(self.sizes[c])
        if idx.size == 0:
            return np.zeros((0, self.nu), dtype=np.int64)
        grids = [np.arange(n_c + 1)] * (idx.size - 1)
        rows = []
        for head in product(*grids):
            rest = n_c - sum(head)
            if rest >= 0:
                rows.append(list(head) + [rest])
        comp = np.array(rows, dtype=np.int64).reshape(-1, idx.size)
        out = np.zeros((comp.shape[0], self.nu), dtype=np.int64)
        out[:, idx] = comp
        return out

    def config_count(self) -> int:
        total = 1
        for c in range(self.c):
            k = int(self.allowed[c].sum())
            total *= math.comb(int(self.sizes[c]) + k - 1, k - 1) if k else 0
        return total

    def exact(self) -> dict:
        tables = np.zeros((1, 0, self.nu), dtype=np.int64)
        for c in range(self.c):
            choice = self._cell_choices(c)
            ii, jj = np.meshgrid(np.arange(tables.shape[0]), np.arange(choice.shape[0]), indexing="ij")
            tables = np.concatenate([tables[ii.ravel()], choice[jj.ravel()][:, None, :]], axis=1)
        tables = tables[self._typical(tables)]
        a0 = np.einsum("scu,cw->suw", tables, self.map0)
        uniq, inv = np.unique(a0.reshape(a0.shape[0], -1), axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        uniq = uniq.reshape(-1, self.nu, self.k0)
        extra = np.array([self._a0_extra(a) for a in uniq])
        base = -gammaln(tables + 1).sum(axis=(1, 2)) + tables.sum(axis=1) @ self.log_prior
        logw = base + extra[inv]
        if not np.any(np.isfinite(logw)):
            raise NoConditioningMass("no source table is consistent with the transmitted words")
        w = np.exp(logw - logw.max())
        w /= w.sum()
        frac = tables / self.sizes[None, :, None]
        out = {"u": np.einsum("s,scu->cu", w, frac)}
        missing = [k for k in (1, 2) if k not in self.observed]
        if missing:
            grouped = np.zeros((uniq.shape[0],) + frac.shape[1:])
            np.add.at(grouped, inv, w[:, None, None] * frac)
            for k in missing:
                out[f"type{k}"] = sum(self._type_belief(k, a, g) for a, g in zip(uniq, grouped)
                                      if g.any())
        return out

    def mcmc(self, rng, sweeps: int = MCMC_SWEEPS) -> dict:
        """Metropolis chain moving one position's source symbol at a time."""
        n = int(self.sizes.sum())
        table = self.start.copy()
        cur_extra = self.extra(table)
        if not math.isfinite(cur_extra):
            raise NoConditioningMass("the realized source table is not admissible")
        steps = sweeps * n
        burn = steps // 5
        acc, count = None, 0
        lp = self.log_prior
        for step in range(steps):
            pos = int(rng.integers(n))
            # a uniform position: its cell and symbol follow the table
            cum = np.cumsum(table.reshape(-1))
            j = int(np.searchsorted(cum, pos, side="right"))
            c, u = divmod(j, self.nu)
            choices = [x for x in np.nonzero(self.allowed[c])[0] if x != u]
            if choices:
                v = int(choices[int(rng.integers(len(choices)))])
                table[c, u] -= 1
                table[c, v] += 1
                new_extra = self.extra(table)
                log_ratio = lp[v] - lp[u] + new_extra - cur_extra
                if math.isfinite(new_extra) and math.log(rng.random() + 1e-300) < log_ratio:
                    cur_extra = new_extra
                else:
                    table[c, v] -= 1
                    table[c, u] += 1
            if step >= burn:
                stat = self.statistic(table)
                if acc is None:
                    acc = {k: v.copy() for k, v in stat.items()}
                else:
                    for k, v in stat.items():
                        acc[k] += v
                count += 1
        return {k: v / count for k, v in acc.items()}

    def solve(self, rng) -> dict:
        if self.config_count() <= EXACT_CONFIG_LIMIT:
            stat = self.exact()
        else:
            stat = self.mcmc(rng)
        # expand from cells to positions
        return {k: v[self.cell_of] for k, v in stat.items()}


def ensemble_posteriors(ens: CodebookEnsemble, trace, observed=(1, 2), rng=None) -> dict:
    """Per-position beliefs given the common word and the ``observed`` private words.

    Keys: "u" (n x U) and, for unobserved private channels k, "type{k}"
    (n x Wk), the belief about the other decoder's type symbol.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    return _TablePosterior(ens, trace, tuple(observed)).solve(rng)


# ---------------------------------------------------------------------------
# explicit codebooks: exact summation over all source sequences

@dataclass(eq=False)
class EncodedSources:
    seqs: np.ndarray
    probs: np.ndarray
    messages: np.ndarray   # S x 3
    flags: np.ndarray      # S x 3


def encode_all(codebook: Codebook, config: TypicalityConfig) -> EncodedSources:
    nu = codebook.targets.n_u
    if nu ** codebook.n > EXHAUSTIVE_LIMIT:
        raise NoConditioningMass(f"{nu}^{codebook.n} sequences exceed the exact-summation limit; "
                                 "use a codebook ensemble")
    seqs = all_sequences(nu, codebook.n)
    probs = sequence_probabilities(codebook.targets.prior, seqs)
    msgs = np.zeros((seqs.shape[0], 3), dtype=np.int64)
    flags = np.zeros((seqs.shape[0], 3), dtype=bool)
    for i, u in enumerate(seqs):
        m0, m1, m2, f = encode(codebook, u, config)
        msgs[i] = (m0, m1, m2)
        flags[i] = f
    return EncodedSources(seqs, probs, msgs, flags)


def explicit_posteriors(codebook: Codebook, enc: EncodedSources, messages, observed=(1, 2)) -> dict:
    nu = codebook.targets.n_u
    m0, m1, m2 = messages
    mask = enc.messages[:, 0] == m0
    if 1 in observed:
        mask &= enc.messages[:, 1] == m1
    if 2 in observed:
        mask &= enc.messages[:, 2] == m2
    w = enc.probs * mask
    total = w.sum()
    if total <= 0:
        raise NoConditioningMass("messages have probability zero")
    w = w / total
    out = {"u": np.stack([w @ (enc.seqs == a) for a in range(nu)], axis=1)}
    for k, words, kk in ((1, codebook.w1_words, codebook.targets.sizes[2]),
                         (2, codebook.w2_words, codebook.targets.sizes[3])):
        if k in observed:
            continue
        sym = words[enc.messages[:, 0], enc.messages[:, k]]          # S x n
        out[f"type{k}"] = np.stack([w @ (sym == a) for a in range(kk)], axis=1)
    return out


# ---------------------------------------------------------------------------

@dataclass
class BeliefReport:
    avg_state_kl: float
    avg_type_kl_1: float
    avg_type_kl_2: float
    successes: int
    trials: int
    n: int
    mode: str
    per_trace: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"n": self.n, "trials": self.trials, "successes": self.successes, "mode": self.mode,
                "avg_state_kl": self.avg_state_kl, "avg_type_kl_1": self.avg_type_kl_1,
                "avg_type_kl_2": self.avg_type_kl_2}


def _trace_kls(game, trace, post_all, post_1, post_2):
    w0, w1, w2 = trace.w0, trace.w1, trace.w2
    state = float(kl_bits(post_all["u"], game.posterior_u[w0, w1, w2]).mean())
    type1 = float(kl_bits(post_1["type2"], game.belief_2_given_01[w0, w1]).mean())
    type2 = float(kl_bits(post_2["type1"], game.belief_1_given_02[w0, w2]).mean())
    return state, type1, type2


def empirical_belief_divergence(source, instance, config: TypicalityConfig, trials: int,
                                seed: int, traces=None) -> BeliefReport:
    """Average KL of the decoders' message-conditional beliefs from the targets.

    State: (1/n) sum_t KL(P(U_t | m0, m1, m2) || Q(U | W0t, W1t, W2t)).
    Type 1: decoder 1's belief about W2t given (m0, m1) against Q(W2 | W0t, W1t);
    type 2 symmetric. Averages run over successful transmissions.
    """
    if traces is None:
        traces = simulate_traces(source, config, trials, seed)
    ok = [t for t in traces if t.success]
    if not ok:
        raise NoConditioningMass("no successful transmission among the trials")
    explicit = isinstance(source, Codebook)
    mode = "exact" if explicit else "ensemble"
    if is_uninformative(source.policy):
        zeros = [(0.0, 0.0, 0.0)] * len(ok)
        return BeliefReport(0.0, 0.0, 0.0, len(ok), len(traces), source.n, mode, zeros)
    game = game_from_joint(instance, source.targets.mass)
    enc = encode_all(source, config) if explicit else None
    rows = []
    for i, trace in enumerate(ok):
        if explicit:
            posts = [explicit_posteriors(source, enc, trace.messages, obs)
                     for obs in ((1, 2), (1,), (2,))]
        else:
            rng = np.random.default_rng([int(seed), 1, i])
            posts = [ensemble_posteriors(source, trace, obs, rng) for obs in ((1, 2), (1,), (2,))]
        rows.append(_trace_kls(game, trace, *posts))
    arr = np.array(rows)
    means = arr.mean(axis=0)
    return BeliefReport(float(means[0]), float(means[1]), float(means[2]), len(ok), len(traces),
                        source.n, mode, [tuple(map(float, r)) for r in rows])
