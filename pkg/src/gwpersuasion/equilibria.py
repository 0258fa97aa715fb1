"""Bayes-Nash equilibria of the one-shot game and the encoder-worst selection.

Types of both decoders share the common symbol w0, and a decoder of type
(w0, wi) only ever faces opponents with the same w0. The equilibrium
conditions therefore split into independent blocks, one per w0, and the
equilibrium set is the Cartesian product of the per-block sets. Sets are
stored in that factored form.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .game import (
    TIE_TOL,
    DecoderStrategy,
    SingleLetterGame,
    build_single_letter_game,
    deviation_gain,
    encoder_cost_of,
    psi_table,
)
from .model import InformationPolicy, JointPolicy, ProblemInstance, joint_mass

DEFAULT_BUDGET = 10**7
ENUM_EPS_TOL = 1e-6
FP_TOL = 1e-3
MATERIALIZE_LIMIT = 10**6


class BudgetExceeded(RuntimeError):
    """Requested computation is larger than the configured budget."""


class NoEquilibrium(RuntimeError):
    """An operation needed at least one equilibrium and got none."""


@dataclass(frozen=True, eq=False)
class EquilibriumSet:
    """Product over w0 blocks of local strategy profiles.

    ``blocks[w0]`` is a pair of arrays (m, W1, V1) and (m, W2, V2) holding the
    m local profiles admissible in that block. Rows of zero-probability types
    are set to the first action.
    """

    blocks: tuple
    method: str
    converged: bool
    epsilon: float

    @property
    def count(self) -> int:
        return math.prod(b[0].shape[0] for b in self.blocks)

    def __len__(self):
        return self.count

    def __bool__(self):
        return self.count > 0

    def __iter__(self):
        sizes = [range(b[0].shape[0]) for b in self.blocks]
        for pick in itertools.product(*sizes):
            yield self.member(pick)

    def member(self, pick) -> DecoderStrategy:
        s1 = np.stack([b[0][i] for b, i in zip(self.blocks, pick)])
        s2 = np.stack([b[1][i] for b, i in zip(self.blocks, pick)])
        return DecoderStrategy(s1, s2)

    @property
    def equilibria(self) -> list:
        if self.count > MATERIALIZE_LIMIT:
            raise BudgetExceeded(f"{self.count} equilibria exceed the materialization limit")
        return list(self)


def _canonical(game: SingleLetterGame, sigma_1, sigma_2):
    s1 = np.array(sigma_1, dtype=float)
    s2 = np.array(sigma_2, dtype=float)
    s1[~game.type1_supported] = np.eye(s1.shape[2])[0]
    s2[~game.type2_supported] = np.eye(s2.shape[2])[0]
    return s1, s2


def set_from_strategies(game: SingleLetterGame, strategies, method, converged, epsilon) -> EquilibriumSet:
    """Factored set generated by the given (mutually compatible) strategies."""
    k0 = game.cards[0]
    n1, n2 = game.n_actions
    canon = [_canonical(game, s.sigma_1, s.sigma_2) for s in strategies]
    blocks = []
    for w0 in range(k0):
        seen = []
        for s1, s2 in canon:
            if not any(np.array_equal(s1[w0], a) and np.array_equal(s2[w0], b) for a, b in seen):
                seen.append((s1[w0], s2[w0]))
        if seen:
            blocks.append((np.stack([a for a, _ in seen]), np.stack([b for _, b in seen])))
        else:
            blocks.append((np.zeros((0, game.cards[1], n1)), np.zeros((0, game.cards[2], n2))))
    return EquilibriumSet(tuple(blocks), method, converged, float(epsilon))


def _profiles(n_actions: int, k: int) -> np.ndarray:
    if k == 0:
        return np.zeros((1, 0), dtype=np.int64)
    grids = np.indices((n_actions,) * k).reshape(k, -1).T
    return grids.astype(np.int64)


def enumeration_work(game: SingleLetterGame) -> int:
    """Number of opponent profiles the block enumeration will scan."""
    n1, n2 = game.n_actions
    work = 0
    for w0 in range(game.cards[0]):
        k1 = int(game.type1_supported[w0].sum())
        k2 = int(game.type2_supported[w0].sum())
        if k1 or k2:
            work += min(n1 ** k1, n2 ** k2)
    return work


def _block_pure(game: SingleLetterGame, w0: int, tol: float, budget: int):
    """All pure local equilibria of one block, as action arrays on supported types."""
    n1, n2 = game.n_actions
    t1 = np.nonzero(game.type1_supported[w0])[0]
    t2 = np.nonzero(game.type2_supported[w0])[0]
    # costs restricted to the block, both written as (own types, opp types, own action, opp action)
    c1 = game.cost_star_1[w0][np.ix_(t1, t2)]                       # (k1, k2, n1, n2)
    c2 = np.transpose(game.cost_star_2[w0][np.ix_(t1, t2)], (1, 0, 3, 2))  # (k2, k1, n2, n1)
    b1 = game.belief_2_given_01[w0][np.ix_(t1, t2)]                 # (k1, k2)
    b2 = game.belief_1_given_02[w0][np.ix_(t2, t1)]                 # (k2, k1)
    sides = [(c1, b1, n1, n2), (c2, b2, n2, n1)]
    # scan the player with the smaller strategy space as the "opponent"
    swap = n2 ** len(t2) > n1 ** len(t1)
    (ca, ba, na, nb), (cb, bb, _, _) = (sides[1], sides[0]) if swap else (sides[0], sides[1])
    ka, kb = ba.shape
    opp = _profiles(nb, kb)                                        # (Q, kb)
    # psi_a[q, i, a] = sum_j ba[i, j] * ca[i, j, a, opp[q, j]]
    gathered = np.transpose(ca, (1, 3, 0, 2))[np.arange(kb)[None, :], opp]  # (Q, kb, ka, na)
    psi_a = np.einsum("ij,qjia->qia", ba, gathered)
    ties_a = psi_a <= psi_a.min(axis=2, keepdims=True) + tol
    found_a, found_b = [], []
    n_ties = ties_a.sum(axis=2)
    for q in range(opp.shape[0]):
        if ka and np.any(n_ties[q] > 1):
            options = [np.nonzero(ties_a[q, i])[0] for i in range(ka)]
            cands = np.array(list(itertools.product(*options)), dtype=np.int64).reshape(-1, ka)
        else:
            cands = ties_a[q].argmax(axis=1)[None, :] if ka else np.zeros((1, 0), dtype=np.int64)
        if len(found_a) + cands.shape[0] > budget:
            raise BudgetExceeded("equilibrium list exceeds the enumeration budget")
        # check the scanned player's best-response condition against each candidate
        # psi_b[c, j, b] = sum_i bb[j, i] * cb[j, i, b, cands[c, i]]
        g = np.transpose(cb, (1, 3, 0, 2))[np.arange(ka)[None, :], cands]  # (C, ka, kb, nb)
        psi_b = np.einsum("ji,cijb->cjb", bb, g)
        best = psi_b.min(axis=2)
        played = psi_b[:, np.arange(kb), opp[q]] if kb else np.zeros((cands.shape[0], 0))
        ok = np.all(played <= best + tol, axis=1)
        for c in np.nonzero(ok)[0]:
            found_a.append(cands[c])
            found_b.append(opp[q])
    acts_a = np.array(found_a, dtype=np.int64).reshape(len(found_a), ka)
    acts_b = np.array(found_b, dtype=np.int64).reshape(len(found_b), kb)
    if swap:
        acts_a, acts_b = acts_b, acts_a
    return t1, t2, acts_a, acts_b


def enumerate_pure_bne(game: SingleLetterGame, budget: int = DEFAULT_BUDGET, tol: float = TIE_TOL) -> EquilibriumSet:
    """Every pure profile in which each supported type plays a best response."""
    work = enumeration_work(game)
    if work > budget:
        raise BudgetExceeded(
            f"pure enumeration needs {work} profiles (budget {budget}); use iterative methods")
    k0, K1, K2 = game.cards
    n1, n2 = game.n_actions
    blocks = []
    for w0 in range(k0):
        t1, t2, a1, a2 = _block_pure(game, w0, tol, budget)
        m = a1.shape[0]
        s1 = np.zeros((m, K1, n1))
        s1[:, :, 0] = 1.0
        s2 = np.zeros((m, K2, n2))
        s2[:, :, 0] = 1.0
        if m:
            s1[:, t1, :] = np.eye(n1)[a1]
            s2[:, t2, :] = np.eye(n2)[a2]
        blocks.append((s1, s2))
    return EquilibriumSet(tuple(blocks), "pure-enumeration", True, 0.0)


def _respond(game, player, own, other, keep_incumbent=True):
    values = psi_table(game, player, other)
    minimum = values.min(axis=2, keepdims=True)
    ties = values <= minimum + TIE_TOL
    choice = ties.argmax(axis=2)
    if keep_incumbent:
        pure = np.all((own == 0) | (own == 1), axis=2)
        current = own.argmax(axis=2)
        stay = pure & np.take_along_axis(ties, current[..., None], axis=2)[..., 0]
        choice = np.where(stay, current, choice)
    return np.eye(values.shape[2])[choice]


def iterated_best_response(game: SingleLetterGame, init: DecoderStrategy | None = None,
                           max_rounds: int = 100, tol: float = ENUM_EPS_TOL) -> EquilibriumSet:
    """Alternate exact best responses (decoder 1 then decoder 2) until a fixed point."""
    if init is None:
        init = DecoderStrategy.uniform(game)
    s1, s2 = _canonical(game, init.sigma_1, init.sigma_2)
    converged = False
    for _ in range(max_rounds):
        n1 = _canonical(game, _respond(game, 1, s1, s2), s2)[0]
        n2 = _canonical(game, n1, _respond(game, 2, s2, n1))[1]
        if np.array_equal(n1, s1) and np.array_equal(n2, s2):
            converged = True
            break
        s1, s2 = n1, n2
    strategy = DecoderStrategy(s1, s2)
    eps = deviation_gain(game, strategy)
    members = [strategy] if converged and eps <= tol else []
    return set_from_strategies(game, members, "iterated-BR", converged, eps)


def _fictitious_play_run(game: SingleLetterGame, rounds: int, tol: float, check_every: int = 25,
                         blocks=None):
    """Simultaneous fictitious play restricted to the w0 ``blocks`` (all by default).

    Blocks do not interact, so each one can be run on its own. Returns the
    frequencies as a full strategy (uniform outside ``blocks``) and the largest
    deviation gain inside them.
    """
    k0, k1, k2 = game.cards
    n1, n2 = game.n_actions
    idx = np.arange(k0) if blocks is None else np.asarray(blocks, dtype=np.int64)
    a = idx.size
    # per-block payoff operators: values_1 = m1 @ play_2, values_2 = m2 @ play_1
    m1 = game.belief_2_given_01[idx][:, :, :, None, None] * game.cost_star_1[idx]
    m1 = m1.transpose(0, 1, 3, 2, 4).reshape(a, k1 * n1, k2 * n2)
    b1 = np.transpose(game.belief_1_given_02[idx], (0, 2, 1))[:, :, :, None, None]
    m2 = (b1 * game.cost_star_2[idx]).transpose(0, 2, 4, 1, 3).reshape(a, k2 * n2, k1 * n1)
    sup1 = game.type1_supported[idx]
    sup2 = game.type2_supported[idx]
    eye1, eye2 = np.eye(n1), np.eye(n2)
    counts1 = np.zeros((a, k1, n1))
    counts2 = np.zeros((a, k2, n2))
    play1 = np.full((a, k1, n1), 1.0 / n1)
    play2 = np.full((a, k2, n2), 1.0 / n2)
    eps = math.inf
    for t in range(1, rounds + 1):
        v1 = (m1 @ play2.reshape(a, -1, 1)).reshape(a, k1, n1)
        v2 = (m2 @ play1.reshape(a, -1, 1)).reshape(a, k2, n2)
        counts1 += eye1[v1.argmin(axis=2)]
        counts2 += eye2[v2.argmin(axis=2)]
        play1, play2 = counts1 / t, counts2 / t
        if t % check_every == 0 or t == rounds or t == 1:
            v1 = (m1 @ play2.reshape(a, -1, 1)).reshape(a, k1, n1)
            v2 = (m2 @ play1.reshape(a, -1, 1)).reshape(a, k2, n2)
            g1 = (v1 * play1).sum(axis=2) - v1.min(axis=2)
            g2 = (v2 * play2).sum(axis=2) - v2.min(axis=2)
            eps = max(float(g1[sup1].max()) if sup1.any() else 0.0,
                      float(g2[sup2].max()) if sup2.any() else 0.0, 0.0)
            if eps <= tol:
                break
    s1 = np.full((k0, k1, n1), 1.0 / n1)
    s2 = np.full((k0, k2, n2), 1.0 / n2)
    s1[idx], s2[idx] = play1, play2
    return DecoderStrategy(*_canonical(game, s1, s2)), eps


def fictitious_play(game: SingleLetterGame, rounds: int = 5000, tol: float = FP_TOL) -> EquilibriumSet:
    """Simultaneous fictitious play on per-type empirical action frequencies.

    The final frequencies are kept only if no type can gain more than ``tol``
    by deviating.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    strategy, eps = _fictitious_play_run(game, rounds, tol)
    ok = eps <= tol
    return set_from_strategies(game, [strategy] if ok else [], "fictitious-play", ok, eps)


def worst_from_mass(mass: np.ndarray, cost_e: np.ndarray, eqset: EquilibriumSet):
    """Encoder-worst member of a factored set for a given U x W0 x W1 x W2 mass."""
    if eqset.count == 0:
        raise NoEquilibrium("equilibrium set is empty; widen the search")
    pick = []
    for w0, (s1, s2) in enumerate(eqset.blocks):
        costs = np.einsum("ubc,mbx,mcy,uxy->m", mass[:, w0], s1, s2, cost_e)
        pick.append(int(np.argmax(costs)))
    witness = eqset.member(pick)
    return encoder_cost_of(mass, cost_e, witness.sigma_1, witness.sigma_2), witness


def worst_equilibrium_cost(instance: ProblemInstance, policy, eqset: EquilibriumSet):
    """(max encoder cost over the set, attaining member); first occurrence on ties."""
    if isinstance(policy, SingleLetterGame):
        mass = policy.mass
    else:
        mass = joint_mass(instance, policy)
    return worst_from_mass(mass, instance.cost_e, eqset)


def equilibrium_pool(game: SingleLetterGame, budget: int = DEFAULT_BUDGET,
                     fp_rounds: int = 5000, fp_tol: float = FP_TOL) -> EquilibriumSet:
    """Candidate equilibria for the inner maximization.

    Pure enumeration when affordable; blocks without any pure equilibrium
    (or games over budget) fall back to best-response dynamics and
    fictitious play. The method string records what was used.
    """
    try:
        eqset = enumerate_pure_bne(game, budget)
    except BudgetExceeded:
        eqset = None
    if eqset is not None and eqset.count > 0:
        return eqset
    missing = None if eqset is None else [w0 for w0, b in enumerate(eqset.blocks) if b[0].shape[0] == 0]
    fp_strategy, fp_eps = _fictitious_play_run(game, fp_rounds, fp_tol, blocks=missing)
    fp_ok = fp_eps <= fp_tol
    if eqset is None:
        members = []
        for init in [None] + [_constant_strategy(game, a) for a in range(2)]:
            members.extend(iterated_best_response(game, init))
        if fp_ok or not members:
            members.append(fp_strategy)
        eps = fp_eps if fp_ok or len(members) == 1 else 0.0
        method = "iterated-BR+fictitious-play"
        return set_from_strategies(game, members, method, fp_ok or len(members) > 1, eps)
    # blocks without a pure equilibrium get the fictitious-play point
    blocks = list(eqset.blocks)
    for w0, (s1, s2) in enumerate(blocks):
        if s1.shape[0] == 0:
            blocks[w0] = (fp_strategy.sigma_1[w0][None], fp_strategy.sigma_2[w0][None])
    return EquilibriumSet(tuple(blocks), "pure-enumeration+fictitious-play", fp_ok, fp_eps)


def _constant_strategy(game, a):
    k0, k1, k2 = game.cards
    n1, n2 = game.n_actions
    s1 = np.zeros((k0, k1, n1))
    s1[:, :, min(a, n1 - 1)] = 1
    s2 = np.zeros((k0, k2, n2))
    s2[:, :, min(a, n2 - 1)] = 1
    return DecoderStrategy(s1, s2)


# ---------------------------------------------------------------------------
# essentiality probe

@dataclass(frozen=True)
class EssentialityReport:
    radius: float
    samples: int
    max_strategy_drift: float
    verdict: str
    threshold: float


def _joint_table(policy) -> np.ndarray:
    if isinstance(policy, JointPolicy):
        return np.array(policy.table)
    a, b, c = policy.arrays
    return a[:, :, None, None] * b[:, :, :, None] * c[:, :, None, :]


def _set_drift(base: EquilibriumSet, other: EquilibriumSet) -> float:
    """max over base members of the L1 distance to the closest member of other."""
    if other.count == 0:
        return math.inf
    total = 0.0
    for (a1, a2), (b1, b2) in zip(base.blocks, other.blocks):
        d = (np.abs(a1[:, None] - b1[None]).sum(axis=(2, 3))
             + np.abs(a2[:, None] - b2[None]).sum(axis=(2, 3)))
        total += float(d.min(axis=1).max()) if d.size else 0.0
    return total


def essentiality_probe(instance: ProblemInstance, policy, radius: float, samples: int, seed: int,
                       threshold_factor: float = 10.0, budget: int = DEFAULT_BUDGET) -> EssentialityReport:
    """Perturb Q(w0,w1,w2|u) row-wise within L1 ``radius`` and track the equilibrium set."""
    tables = (policy.table,) if isinstance(policy, JointPolicy) else policy.arrays
    if not all(np.all(t > 0) for t in tables):
        raise ValueError("essentiality probe requires a full-support policy")
    if radius < 0 or samples < 1:
        raise ValueError("radius must be >= 0 and samples >= 1")
    base_table = _joint_table(policy)
    base = equilibrium_pool(build_single_letter_game(instance, JointPolicy.from_array(base_table)), budget)
    rng = np.random.default_rng(seed)
    nu = base_table.shape[0]
    flat = base_table.reshape(nu, -1)
    drift = 0.0
    for _ in range(samples):
        step = rng.standard_normal(flat.shape)
        step -= step.mean(axis=1, keepdims=True)
        norms = np.abs(step).sum(axis=1, keepdims=True)
        step = np.where(norms > 0, step / np.where(norms > 0, norms, 1), 0.0) * radius
        rows = np.clip(flat + step, 0.0, None)
        rows /= rows.sum(axis=1, keepdims=True)
        perturbed = JointPolicy.from_array(rows.reshape(base_table.shape))
        other = equilibrium_pool(build_single_letter_game(instance, perturbed), budget)
        drift = max(drift, _set_drift(base, other))
    threshold = threshold_factor * radius
    verdict = "fragile" if drift > threshold else "essential-consistent"
    return EssentialityReport(float(radius), int(samples), float(drift), verdict, float(threshold))
