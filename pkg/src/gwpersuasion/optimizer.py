"""Outer minimization of the encoder's worst-equilibrium cost over information policies."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .equilibria import DEFAULT_BUDGET, FP_TOL, BudgetExceeded, equilibrium_pool, worst_from_mass
from .game import DecoderStrategy, encoder_expected_cost, game_from_joint
from .model import (
    InformationPolicy,
    JointPolicy,
    ProblemInstance,
    check_instance,
    constant_policy,
    copy_policy,
    feasible_from_mass,
    rate_membership,
    resolve_cardinalities,
)

INNER_CAVEAT = ("inner maximum taken over all pure equilibria plus best-response/fictitious-play "
                "limit points: a lower bound on the maximum over all mixed equilibria")
OUTER_CAVEAT = ("outer infimum estimated by multistart local search: the value is attained by the "
                "returned policy, so it upper-estimates the infimum (given the inner caveat)")
SEPARABLE_TOL = 1e-9


@dataclass(frozen=True)
class SolverConfig:
    grid_resolution: int = 20
    restarts: int = 6
    seed: int = 0
    local_steps: int = 150
    eq_tol: float = FP_TOL
    eq_budget: int = DEFAULT_BUDGET
    fp_rounds: int = 2000
    variant: str = "Q0"
    sweep_seed_budget: int = 20000
    cards: tuple | None = None


@dataclass(frozen=True, eq=False)
class PolicyValue:
    value: float
    witness: DecoderStrategy
    method: str
    epsilon: float


@dataclass(frozen=True, eq=False)
class SolveResult:
    value: float
    policy: object
    witness: DecoderStrategy
    eq_method: str
    slacks: tuple
    restarts_used: int
    certified: str
    caveats: tuple = field(default=())
    evaluations: int = 0

    def to_dict(self) -> dict:
        from .model import policy_to_dict
        return {
            "value": self.value,
            "policy": policy_to_dict(self.policy),
            "witness": self.witness.to_dict(),
            "slacks": list(self.slacks),
            "restarts_used": self.restarts_used,
            "caveats": list(self.caveats),
            "certified": self.certified,
            "eq_method": self.eq_method,
        }


class _Evaluator:
    """Memoized worst-equilibrium evaluation of joint mass arrays."""

    def __init__(self, instance: ProblemInstance, config: SolverConfig):
        self.instance = instance
        self.config = config
        self.cache = {}
        self.calls = 0

    def __call__(self, mass: np.ndarray) -> PolicyValue:
        key = mass.tobytes()
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        self.calls += 1
        game = game_from_joint(self.instance, mass)
        eqset = equilibrium_pool(game, self.config.eq_budget, self.config.fp_rounds, self.config.eq_tol)
        value, witness = worst_from_mass(mass, self.instance.cost_e, eqset)
        out = PolicyValue(value, witness, eqset.method, eqset.epsilon)
        self.cache[key] = out
        return out


# ---------------------------------------------------------------------------
# search spaces: a state is a list of row-stochastic matrices

class _FactorizedSpace:
    variant_default = "Q0"

    def __init__(self, instance, cards):
        self.prior = instance.prior
        self.nu = len(instance.alphabet_u)
        self.cards = cards

    def shapes(self):
        k0, k1, k2 = self.cards
        return [(self.nu, k0), (self.nu * k0, k1), (self.nu * k0, k2)]

    def from_policy(self, policy: InformationPolicy):
        a, b, c = policy.arrays
        return [np.array(a), np.array(b).reshape(-1, b.shape[2]), np.array(c).reshape(-1, c.shape[2])]

    def to_policy(self, state, alphabet_u):
        k0 = self.cards[0]
        return InformationPolicy.from_arrays(state[0], state[1].reshape(self.nu, k0, -1),
                                             state[2].reshape(self.nu, k0, -1), alphabet_u)

    def mass(self, state):
        k0 = self.cards[0]
        a = state[0]
        b = state[1].reshape(self.nu, k0, -1)
        c = state[2].reshape(self.nu, k0, -1)
        return (self.prior[:, None, None, None] * a[:, :, None, None]
                * b[:, :, :, None] * c[:, :, None, :])

    def row_weights(self, state):
        active = (state[0] > 0).reshape(-1).astype(float)
        w_b = 0.1 + active
        return [np.ones(self.nu), w_b, w_b.copy()], np.array([0.4, 0.3, 0.3])


class _JointSpace:
    variant_default = "Qhat0"

    def __init__(self, instance, cards):
        self.prior = instance.prior
        self.nu = len(instance.alphabet_u)
        self.cards = cards

    def shapes(self):
        k0, k1, k2 = self.cards
        return [(self.nu, k0), (self.nu * k0, k1 * k2)]

    def from_policy(self, policy):
        if isinstance(policy, InformationPolicy):
            policy = JointPolicy.from_factorized(policy)
        t = np.array(policy.table).reshape(self.nu, -1)
        return self._split(t)

    def _split(self, t):
        # state: marginal rows over w0, and conditional rows over (w1, w2) given (u, w0)
        k0, k1, k2 = self.cards
        t = t.reshape(self.nu, k0, k1 * k2)
        marg = t.sum(axis=2)
        cond = np.full((self.nu, k0, k1 * k2), 1.0 / (k1 * k2))
        np.divide(t, marg[:, :, None], out=cond, where=marg[:, :, None] > 0)
        return [marg, cond.reshape(self.nu * k0, k1 * k2)]

    def table(self, state):
        k0, k1, k2 = self.cards
        cond = state[1].reshape(self.nu, k0, k1, k2)
        return state[0][:, :, None, None] * cond

    def to_policy(self, state, alphabet_u):
        return JointPolicy.from_array(self.table(state), alphabet_u)

    def mass(self, state):
        return self.prior[:, None, None, None] * self.table(state)

    def row_weights(self, state):
        active = (state[0] > 0).reshape(-1).astype(float)
        return [np.ones(self.nu), 0.1 + active], np.array([0.4, 0.6])


def _feasible(space, state, rates, variant) -> bool:
    ok = feasible_from_mass(space.mass(state), rates, variant)[0]
    if variant == "Qtilde0":
        return ok and all(np.all(m > 0) for m in state)
    return ok


def _propose_row(row, rng, grid):
    k = row.shape[0]
    kind = rng.integers(6)
    if kind == 0:
        return np.eye(k)[rng.integers(k)]
    if kind == 1:
        lam = rng.integers(1, grid + 1) / grid
        return (1 - lam) * row + lam * np.eye(k)[rng.integers(k)]
    if kind == 2:
        return rng.dirichlet(np.full(k, 0.5))
    if kind == 3:
        i, j = rng.integers(k), rng.integers(k)
        out = row.copy()
        move = out[i] * rng.integers(1, grid + 1) / grid
        out[i] -= move
        out[j] += move
        return out
    if kind == 4:
        lam = rng.integers(1, grid + 1) / grid
        return (1 - lam) * row + lam * np.full(k, 1.0 / k)
    out = row + rng.normal(scale=0.05, size=k)
    out = np.clip(out, 0, None)
    s = out.sum()
    return out / s if s > 0 else row.copy()


def _with_row(state, m, r, row):
    new = [x for x in state]
    new[m] = state[m].copy()
    row = np.clip(row, 0.0, None)
    new[m][r] = row / row.sum()
    return new


def _line_search(space, state, m, r, target, rates, variant, iters=14):
    """Largest feasible step from the current row towards ``target`` (feasible at 0)."""
    base = state[m][r]
    lo, hi = 0.0, 1.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if _feasible(space, _with_row(state, m, r, base + mid * (target - base)), rates, variant):
            lo = mid
        else:
            hi = mid
    if lo <= 1e-9:
        return None
    return _with_row(state, m, r, base + lo * (target - base))


def _shrink_to_feasible(space, anchor, target, rates, variant, iters=20):
    """Mix every row of ``target`` with ``anchor`` as far towards target as feasible."""
    if _feasible(space, target, rates, variant):
        return target
    lo, hi = 0.0, 1.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        mix = [(1 - mid) * a + mid * t for a, t in zip(anchor, target)]
        if _feasible(space, mix, rates, variant):
            lo = mid
        else:
            hi = mid
    return [(1 - lo) * a + lo * t for a, t in zip(anchor, target)]


def _local_search(space, evaluate, state, value, rng, config, rates, variant):
    shapes = [m.shape for m in state]
    for _ in range(config.local_steps):
        weights, kinds = space.row_weights(state)
        m = int(rng.choice(len(shapes), p=kinds / kinds.sum()))
        w = weights[m] / weights[m].sum()
        r = int(rng.choice(shapes[m][0], p=w))
        target = _propose_row(state[m][r], rng, config.grid_resolution)
        cand = _with_row(state, m, r, target)
        if not _feasible(space, cand, rates, variant):
            cand = _line_search(space, state, m, r, target, rates, variant)
            if cand is None:
                continue
        pv = evaluate(space.mass(cand))
        if pv.value < value.value - 1e-12 or (pv.value <= value.value and rng.random() < 0.25):
            state, value = cand, pv
    return state, value


def _random_state(space, rng):
    out = []
    for shape in space.shapes():
        alpha = 0.3 if rng.random() < 0.5 else 1.0
        out.append(rng.dirichlet(np.full(shape[1], alpha), size=shape[0]))
    return out


def _anchor_policies(instance, cards):
    pols = [constant_policy(instance, cards)]
    for channel in ("common", "private", "both"):
        pols.append(copy_policy(instance, channel, cards))
    k0, k1, k2 = cards
    nu = len(instance.alphabet_u)
    pols.append(InformationPolicy.from_arrays(np.full((nu, k0), 1 / k0), np.full((nu, k0, k1), 1 / k1),
                                              np.full((nu, k0, k2), 1 / k2), instance.alphabet_u))
    return pols


def _search(instance, config, space, start_states, rates, variant):
    evaluate = _Evaluator(instance, config)
    rng = np.random.default_rng(config.seed)
    pool = []
    for st in start_states:
        if _feasible(space, st, rates, variant):
            pool.append((evaluate(space.mass(st)), st))
    if not pool:
        raise AssertionError("no rate-feasible starting policy (empty feasible region)")
    anchor = min(pool, key=lambda p: p[0].value)[1]
    uniform_anchor = [np.full(s, 1.0 / s[1]) for s in space.shapes()]
    if not _feasible(space, uniform_anchor, rates, variant):
        uniform_anchor = anchor
    best = None
    for restart in range(config.restarts):
        if restart == 0:
            ordered = sorted(range(len(pool)), key=lambda i: (pool[i][0].value, i))
            value, state = pool[ordered[0]]
        elif restart < len(pool) and restart % 2 == 1:
            ordered = sorted(range(len(pool)), key=lambda i: (pool[i][0].value, i))
            value, state = pool[ordered[min(restart, len(ordered) - 1)]]
        else:
            state = _shrink_to_feasible(space, uniform_anchor, _random_state(space, rng), rates, variant)
            if not _feasible(space, state, rates, variant):
                continue
            value = evaluate(space.mass(state))
        state, value = _local_search(space, evaluate, state, value, rng, config, rates, variant)
        if best is None or value.value < best[0].value:
            best = (value, state, restart)
    return best, evaluate.calls


def _result(instance, space, best, config, variant, rates, evaluations):
    value, state, _ = best
    policy = space.to_policy(state, instance.alphabet_u)
    report = rate_membership(instance, policy, variant, rates)
    exact = encoder_expected_cost(instance, policy, value.witness)
    caveats = [INNER_CAVEAT, OUTER_CAVEAT]
    if value.epsilon > 0:
        caveats.append(f"witness is an epsilon-equilibrium with epsilon = {value.epsilon:.3g}")
    return SolveResult(exact, policy, value.witness, value.method, report.slacks, config.restarts,
                       "upper-estimate", tuple(caveats), evaluations)


def solve_gamma_star(instance: ProblemInstance, config: SolverConfig = SolverConfig(), warm_start=None) -> SolveResult:
    """Best factorized policy found for the worst-equilibrium encoder cost."""
    check_instance(instance)
    variant = config.variant if config.variant in ("Q0", "Qtilde0") else "Q0"
    cards = resolve_cardinalities(instance, config.cards)
    space = _FactorizedSpace(instance, cards)
    starts = [space.from_policy(p) for p in _anchor_policies(instance, cards)]
    if warm_start is not None:
        starts.insert(0, space.from_policy(warm_start))
    if variant == "Q0":
        try:
            sweep = deterministic_policy_sweep(instance, budget=config.sweep_seed_budget, config=config)
            if sweep.policy is not None:
                starts.insert(0, space.from_policy(sweep.policy))
        except BudgetExceeded:
            pass
    best, calls = _search(instance, config, space, starts, instance.rates, variant)
    return _result(instance, space, best, config, variant, instance.rates, calls)


def solve_gamma_hat(instance: ProblemInstance, config: SolverConfig = SolverConfig(), star: SolveResult | None = None) -> SolveResult:
    """Best unfactorized policy found; starts from the factorized optimum so it never does worse."""
    check_instance(instance)
    if star is None:
        star = solve_gamma_star(instance, replace(config, variant="Q0"))
    cards = resolve_cardinalities(instance, config.cards)
    space = _JointSpace(instance, cards)
    starts = [space.from_policy(star.policy)] + [space.from_policy(p) for p in _anchor_policies(instance, cards)]
    best, calls = _search(instance, replace(config, seed=config.seed + 1), space, starts, instance.rates, "Qhat0")
    return _result(instance, space, best, config, "Qhat0", instance.rates, calls)


# ---------------------------------------------------------------------------
# deterministic sweep

@dataclass(frozen=True, eq=False)
class SweepResult:
    value: float
    policy: InformationPolicy | None
    witness: DecoderStrategy | None
    enumerated: int
    feasible: int
    exact: bool


def _canonical_maps(n: int, k: int):
    """Maps {0..n-1} -> {0..k-1} up to relabeling of the image (restricted growth)."""
    def rec(prefix, top):
        if len(prefix) == n:
            yield tuple(prefix)
            return
        for v in range(min(top + 2, k)):
            yield from rec(prefix + [v], max(top, v))
    yield from rec([], -1)


def sweep_size(instance: ProblemInstance, cards=None) -> int:
    k0, k1, k2 = resolve_cardinalities(instance, cards)
    nu = len(instance.alphabet_u)
    n_f = sum(1 for _ in _canonical_maps(nu, k0)) if k0 ** nu <= 10**6 else k0 ** nu
    return n_f * (k1 * k2) ** nu


def deterministic_policy_sweep(instance: ProblemInstance, budget: int = DEFAULT_BUDGET,
                               config: SolverConfig = SolverConfig()) -> SweepResult:
    """Exact minimum over deterministic policies of the worst-equilibrium cost.

    Only the kernel rows reachable from some u affect the induced joint, and
    relabeling W0 leaves the game unchanged, so each distinct joint is visited
    once: W0 = f(u) with f in restricted-growth form, W1 = g(u), W2 = h(u).
    """
    check_instance(instance)
    cards = resolve_cardinalities(instance, config.cards)
    k0, k1, k2 = cards
    nu = len(instance.alphabet_u)
    size = sweep_size(instance, cards)
    if size > budget:
        raise BudgetExceeded(f"deterministic sweep needs {size} policies (budget {budget})")
    evaluate = _Evaluator(instance, config)
    variant = config.variant if config.variant in ("Q0", "Qtilde0") else "Q0"
    best = None
    feasible = 0
    exact = True
    enumerated = 0
    eye0, eye1, eye2 = np.eye(k0), np.eye(k1), np.eye(k2)
    for f in _canonical_maps(nu, k0):
        a = eye0[list(f)]
        for g in itertools.product(range(k1), repeat=nu):
            b = np.zeros((nu, k0, k1))
            b[:, :, 0] = 1
            for u in range(nu):
                b[u, f[u]] = eye1[g[u]]
            for h in itertools.product(range(k2), repeat=nu):
                enumerated += 1
                c = np.zeros((nu, k0, k2))
                c[:, :, 0] = 1
                for u in range(nu):
                    c[u, f[u]] = eye2[h[u]]
                mass = (instance.prior[:, None, None, None] * a[:, :, None, None]
                        * b[:, :, :, None] * c[:, :, None, :])
                if variant == "Qtilde0" or not feasible_from_mass(mass, instance.rates, variant)[0]:
                    continue
                feasible += 1
                pv = evaluate(mass)
                if pv.method != "pure-enumeration":
                    exact = False
                if best is None or pv.value < best[0].value:
                    best = (pv, (a, b, c))
    if best is None:
        return SweepResult(math.inf, None, None, enumerated, 0, exact)
    pv, (a, b, c) = best
    policy = InformationPolicy.from_arrays(a, b, c, instance.alphabet_u)
    return SweepResult(pv.value, policy, pv.witness, enumerated, feasible, exact)


# ---------------------------------------------------------------------------
# separable costs

def separable_parts(cost_e: np.ndarray):
    """Split c(u,v1,v2) into a(u,v1) + b(u,v2) using the first columns as reference.

    Returns (a, b, residual) where residual is the largest absolute misfit.
    """
    cost_e = np.asarray(cost_e, dtype=float)
    a = cost_e[:, :, 0]
    b = cost_e[:, 0, :] - cost_e[:, :1, 0]
    residual = float(np.max(np.abs(cost_e - a[:, :, None] - b[:, None, :])))
    return a, b, residual


def separable_gap_check(instance: ProblemInstance, config: SolverConfig = SolverConfig()) -> dict:
    _, _, residual = separable_parts(instance.cost_e)
    star = solve_gamma_star(instance, replace(config, variant="Q0"))
    hat = solve_gamma_hat(instance, config, star=star)
    return {
        "gamma_star": star.value,
        "gamma_hat": hat.value,
        "gap": star.value - hat.value,
        "separable": residual <= SEPARABLE_TOL,
        "residual": residual,
    }
