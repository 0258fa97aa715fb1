"""Problem instances, information policies and rate-region membership."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .probcore import (
    FiniteDistribution,
    JointDistribution,
    StochasticKernel,
    conditional_mutual_information_of,
    mutual_information_of,
)

RATE_TOL = 1e-12
ZERO_RATE = 1e-12
ZERO_INFO_TOL = 1e-12
MARKOV_TOL = 1e-9
VARIANTS = ("Q0", "Qhat0", "Qtilde0")
JOINT_NAMES = ("U", "W0", "W1", "W2")


class InstanceFormatError(ValueError):
    """Instance document cannot be parsed into the expected structure."""


class InvalidInstance(ValueError):
    """Instance parsed but violates its invariants."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


@dataclass(frozen=True)
class RateTriple:
    R0: float
    R1: float
    R2: float

    def __post_init__(self):
        for name in ("R0", "R1", "R2"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float, np.floating, np.integer)) and math.isfinite(value) and value >= 0):
                raise ValueError(f"rate {name} must be a finite number >= 0, got {value!r}")
            object.__setattr__(self, name, float(value))

    def as_tuple(self) -> tuple:
        return (self.R0, self.R1, self.R2)


@dataclass
class ProblemInstance:
    """Alphabets, prior, the three cost tensors indexed (u, v1, v2), and rates.

    Values are stored as given; ``validate_instance`` reports what is wrong
    with them and ``check_instance`` raises on the first problem.
    """

    alphabet_u: tuple
    alphabet_v1: tuple
    alphabet_v2: tuple
    prior: np.ndarray
    cost_e: np.ndarray
    cost_1: np.ndarray
    cost_2: np.ndarray
    rates: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        self.alphabet_u = tuple(self.alphabet_u)
        self.alphabet_v1 = tuple(self.alphabet_v1)
        self.alphabet_v2 = tuple(self.alphabet_v2)
        self.prior = np.asarray(self.prior, dtype=float)
        self.cost_e = np.asarray(self.cost_e, dtype=float)
        self.cost_1 = np.asarray(self.cost_1, dtype=float)
        self.cost_2 = np.asarray(self.cost_2, dtype=float)
        if isinstance(self.rates, RateTriple):
            self.rates = self.rates.as_tuple()
        self.rates = tuple(float(r) for r in self.rates)

    @property
    def shape(self) -> tuple:
        return (len(self.alphabet_u), len(self.alphabet_v1), len(self.alphabet_v2))

    @property
    def rate_triple(self) -> RateTriple:
        return RateTriple(*self.rates)

    @property
    def prior_distribution(self) -> FiniteDistribution:
        return FiniteDistribution(self.alphabet_u, self.prior)

    def costs(self) -> tuple:
        return (self.cost_e, self.cost_1, self.cost_2)

    def with_rates(self, rates) -> "ProblemInstance":
        rates = rates.as_tuple() if isinstance(rates, RateTriple) else tuple(rates)
        return ProblemInstance(self.alphabet_u, self.alphabet_v1, self.alphabet_v2, self.prior,
                               self.cost_e, self.cost_1, self.cost_2, rates)

    def with_costs(self, cost_e=None, cost_1=None, cost_2=None) -> "ProblemInstance":
        return ProblemInstance(
            self.alphabet_u, self.alphabet_v1, self.alphabet_v2, self.prior,
            self.cost_e if cost_e is None else cost_e,
            self.cost_1 if cost_1 is None else cost_1,
            self.cost_2 if cost_2 is None else cost_2,
            self.rates)


@dataclass(frozen=True)
class Violation:
    field: str
    rule: str

    def __str__(self):
        return f"{self.field}: {self.rule}"


def _alphabet_problems(name, alphabet):
    out = []
    if len(alphabet) == 0:
        out.append(Violation(name, "alphabet must be nonempty"))
    elif len(set(alphabet)) != len(alphabet):
        out.append(Violation(name, "symbols must be distinct"))
    return out


def validate_instance(instance: ProblemInstance) -> list:
    """Return every invariant violation; empty list means the instance is valid."""
    out = []
    out += _alphabet_problems("alphabet_U", instance.alphabet_u)
    out += _alphabet_problems("alphabet_V1", instance.alphabet_v1)
    out += _alphabet_problems("alphabet_V2", instance.alphabet_v2)
    prior = instance.prior
    if prior.ndim != 1 or prior.shape[0] != len(instance.alphabet_u):
        out.append(Violation("prior", f"must have one entry per U symbol ({len(instance.alphabet_u)})"))
    elif not np.all(np.isfinite(prior)):
        out.append(Violation("prior", "entries must be finite"))
    elif np.any(prior < 0):
        out.append(Violation("prior", "entries must be >= 0"))
    elif abs(prior.sum() - 1.0) > 1e-9:
        out.append(Violation("prior", f"must sum to 1 (sums to {prior.sum():.12g})"))
    shape = instance.shape
    for name, tensor in (("cost_e", instance.cost_e), ("cost_1", instance.cost_1), ("cost_2", instance.cost_2)):
        if tensor.shape != shape:
            out.append(Violation(name, f"shape must be |U|x|V1|x|V2| = {shape}, got {tensor.shape}"))
            continue
        for idx in zip(*np.nonzero(~np.isfinite(tensor))):
            cell = "".join(f"[{int(i)}]" for i in idx)
            out.append(Violation(f"{name}{cell}", f"entry must be finite, got {tensor[idx]!r}"))
    if len(instance.rates) != 3:
        out.append(Violation("rates", "must contain exactly three values R0,R1,R2"))
    else:
        for name, r in zip(("R0", "R1", "R2"), instance.rates):
            if not math.isfinite(r) or r < 0:
                out.append(Violation(f"rates.{name}", f"must be finite and >= 0, got {r!r}"))
    return out


def check_instance(instance: ProblemInstance) -> ProblemInstance:
    problems = validate_instance(instance)
    if problems:
        raise InvalidInstance(problems)
    return instance


# ---------------------------------------------------------------------------
# instance documents

def instance_from_dict(doc) -> ProblemInstance:
    if not isinstance(doc, dict):
        raise InstanceFormatError("instance document must be a JSON object")
    missing = [k for k in ("alphabets", "prior", "costs", "rates") if k not in doc]
    if missing:
        raise InstanceFormatError(f"missing keys: {', '.join(missing)}")
    alphabets = doc["alphabets"]
    if not (isinstance(alphabets, list) and len(alphabets) == 3 and all(isinstance(a, list) for a in alphabets)):
        raise InstanceFormatError("'alphabets' must be three arrays of strings")
    if not all(isinstance(s, str) for a in alphabets for s in a):
        raise InstanceFormatError("alphabet symbols must be strings")
    costs = doc["costs"]
    if isinstance(costs, dict):
        try:
            costs = [costs["c_e"], costs["c_1"], costs["c_2"]]
        except KeyError as exc:
            raise InstanceFormatError(f"'costs' object lacks {exc}") from None
    if not (isinstance(costs, list) and len(costs) == 3):
        raise InstanceFormatError("'costs' must hold three tensors in the order c_e, c_1, c_2")

    def numeric(value, what):
        try:
            arr = np.array(value, dtype=float)
        except (TypeError, ValueError):
            raise InstanceFormatError(f"'{what}' must be a (rectangular) numeric array") from None
        return arr

    prior = numeric(doc["prior"], "prior")
    tensors = [numeric(c, f"costs[{i}]") for i, c in enumerate(costs)]
    rates = numeric(doc["rates"], "rates")
    if rates.ndim != 1:
        raise InstanceFormatError("'rates' must be an array [R0, R1, R2]")
    return ProblemInstance(tuple(alphabets[0]), tuple(alphabets[1]), tuple(alphabets[2]),
                           prior, tensors[0], tensors[1], tensors[2], tuple(rates.tolist()))


def instance_to_dict(instance: ProblemInstance) -> dict:
    return {
        "alphabets": [list(instance.alphabet_u), list(instance.alphabet_v1), list(instance.alphabet_v2)],
        "prior": instance.prior.tolist(),
        "costs": [instance.cost_e.tolist(), instance.cost_1.tolist(), instance.cost_2.tolist()],
        "rates": list(instance.rates),
    }


def load_instance(path) -> ProblemInstance:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InstanceFormatError(f"cannot read {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"invalid JSON in {path}: {exc}") from None
    return instance_from_dict(doc)


def matching_instance(rates=(0.0, 0.0, 0.0)) -> ProblemInstance:
    """Uniform binary source; each decoder pays 1 for missing the source symbol."""
    c1 = np.zeros((2, 2, 2))
    c2 = np.zeros((2, 2, 2))
    for u in range(2):
        for v1 in range(2):
            for v2 in range(2):
                c1[u, v1, v2] = float(v1 != u)
                c2[u, v1, v2] = float(v2 != u)
    return ProblemInstance(("0", "1"), ("0", "1"), ("0", "1"), np.array([0.5, 0.5]),
                           c1 + c2, c1, c2, tuple(rates))


# ---------------------------------------------------------------------------
# policies

def default_cardinalities(instance: ProblemInstance) -> tuple:
    _, n1, n2 = instance.shape
    return (n1 * n2 + 1, n1, n2)


def resolve_cardinalities(instance: ProblemInstance, cards=None) -> tuple:
    """Default auxiliary alphabet sizes; overrides may only enlarge them."""
    base = default_cardinalities(instance)
    if cards is None:
        return base
    cards = tuple(int(c) for c in cards)
    if len(cards) != 3 or any(c < b for c, b in zip(cards, base)):
        raise ValueError(f"cardinalities {cards} must be >= the defaults {base}")
    return cards


@dataclass(frozen=True, eq=False)
class InformationPolicy:
    """Factorized policy Q(w0|u) Q(w1|u,w0) Q(w2|u,w0)."""

    q_w0_given_u: StochasticKernel
    q_w1_given_uw0: StochasticKernel
    q_w2_given_uw0: StochasticKernel

    def __post_init__(self):
        a, b, c = self.q_w0_given_u.table, self.q_w1_given_uw0.table, self.q_w2_given_uw0.table
        if a.ndim != 2 or b.ndim != 3 or c.ndim != 3 or b.shape[:2] != a.shape or c.shape[:2] != a.shape:
            raise ValueError(f"inconsistent policy kernel shapes {a.shape}, {b.shape}, {c.shape}")

    @classmethod
    def from_arrays(cls, q_w0, q_w1, q_w2, alphabet_u=None) -> "InformationPolicy":
        q_w0 = np.asarray(q_w0, dtype=float)
        q_w1 = np.asarray(q_w1, dtype=float)
        q_w2 = np.asarray(q_w2, dtype=float)
        nu, k0 = q_w0.shape
        u = tuple(alphabet_u) if alphabet_u is not None else nu
        return cls(StochasticKernel((u,), (k0,), q_w0),
                   StochasticKernel((u, k0), (q_w1.shape[2],), q_w1),
                   StochasticKernel((u, k0), (q_w2.shape[2],), q_w2))

    @property
    def cards(self) -> tuple:
        return (self.q_w0_given_u.table.shape[1], self.q_w1_given_uw0.table.shape[2],
                self.q_w2_given_uw0.table.shape[2])

    @property
    def arrays(self) -> tuple:
        return (self.q_w0_given_u.table, self.q_w1_given_uw0.table, self.q_w2_given_uw0.table)

    def is_deterministic(self) -> bool:
        return all(np.all((t == 0) | (t == 1)) for t in self.arrays)


@dataclass(frozen=True, eq=False)
class JointPolicy:
    """Unfactorized policy Q(w0,w1,w2|u), used for the converse-side bound."""

    q_w0w1w2_given_u: StochasticKernel

    def __post_init__(self):
        if self.q_w0w1w2_given_u.table.ndim != 4:
            raise ValueError("joint policy table must have shape |U|x|W0|x|W1|x|W2|")

    @classmethod
    def from_array(cls, table, alphabet_u=None) -> "JointPolicy":
        table = np.asarray(table, dtype=float)
        nu = table.shape[0]
        u = tuple(alphabet_u) if alphabet_u is not None else nu
        return cls(StochasticKernel((u,), table.shape[1:], table))

    @classmethod
    def from_factorized(cls, policy: InformationPolicy) -> "JointPolicy":
        a, b, c = policy.arrays
        table = a[:, :, None, None] * b[:, :, :, None] * c[:, :, None, :]
        return cls.from_array(table / table.sum(axis=(1, 2, 3), keepdims=True),
                              policy.q_w0_given_u.input_alphabets[0])

    @property
    def cards(self) -> tuple:
        return tuple(self.q_w0w1w2_given_u.table.shape[1:])

    @property
    def table(self) -> np.ndarray:
        return self.q_w0w1w2_given_u.table


def constant_policy(instance: ProblemInstance, cards=None) -> InformationPolicy:
    """Uninformative deterministic policy: every auxiliary equals its first symbol."""
    k0, k1, k2 = resolve_cardinalities(instance, cards)
    nu = len(instance.alphabet_u)
    a = np.zeros((nu, k0))
    a[:, 0] = 1
    b = np.zeros((nu, k0, k1))
    b[:, :, 0] = 1
    c = np.zeros((nu, k0, k2))
    c[:, :, 0] = 1
    return InformationPolicy.from_arrays(a, b, c, instance.alphabet_u)


def copy_policy(instance: ProblemInstance, channel: str = "common", cards=None) -> InformationPolicy:
    """Deterministic policy revealing u (modulo the alphabet size) on one channel.

    ``channel`` is "common" (W0 carries u), "private" (both W1 and W2 carry u)
    or "both".
    """
    k0, k1, k2 = resolve_cardinalities(instance, cards)
    nu = len(instance.alphabet_u)
    a = np.zeros((nu, k0))
    b = np.zeros((nu, k0, k1))
    c = np.zeros((nu, k0, k2))
    for u in range(nu):
        a[u, u % k0 if channel in ("common", "both") else 0] = 1
        if channel in ("private", "both"):
            b[u, :, u % k1] = 1
            c[u, :, u % k2] = 1
        else:
            b[u, :, 0] = 1
            c[u, :, 0] = 1
    return InformationPolicy.from_arrays(a, b, c, instance.alphabet_u)


def is_uninformative(policy) -> bool:
    """True when the auxiliary law does not depend on u (rows agree bit for bit)."""
    if isinstance(policy, JointPolicy):
        tables = (policy.table,)
    else:
        tables = policy.arrays
    return all(np.array_equal(t, np.broadcast_to(t[:1], t.shape)) for t in tables)


def policy_to_dict(policy) -> dict:
    if isinstance(policy, JointPolicy):
        return {"kind": "joint", "q_w0w1w2_given_u": policy.table.tolist()}
    a, b, c = policy.arrays
    return {"kind": "factorized", "q_w0_given_u": a.tolist(), "q_w1_given_uw0": b.tolist(),
            "q_w2_given_uw0": c.tolist()}


def policy_from_dict(doc, alphabet_u=None):
    try:
        kind = doc.get("kind", "factorized")
        if kind == "joint":
            return JointPolicy.from_array(doc["q_w0w1w2_given_u"], alphabet_u)
        return InformationPolicy.from_arrays(doc["q_w0_given_u"], doc["q_w1_given_uw0"],
                                             doc["q_w2_given_uw0"], alphabet_u)
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise InstanceFormatError(f"malformed policy document: {exc}") from None


def _check_policy_shape(instance: ProblemInstance, policy):
    nu = len(instance.alphabet_u)
    rows = policy.table.shape[0] if isinstance(policy, JointPolicy) else policy.arrays[0].shape[0]
    if rows != nu:
        raise ValueError(f"policy is defined for {rows} source symbols, instance has {nu}")


def joint_mass(instance: ProblemInstance, policy) -> np.ndarray:
    """Unvalidated U x W0 x W1 x W2 mass array for a policy."""
    _check_policy_shape(instance, policy)
    prior = instance.prior
    if isinstance(policy, JointPolicy):
        return prior[:, None, None, None] * policy.table
    a, b, c = policy.arrays
    return (prior[:, None, None, None] * a[:, :, None, None]
            * b[:, :, :, None] * c[:, :, None, :])


def build_joint(instance: ProblemInstance, policy) -> JointDistribution:
    cards = policy.cards
    return JointDistribution(
        (instance.alphabet_u, cards[0], cards[1], cards[2]),
        joint_mass(instance, policy), JOINT_NAMES)


@dataclass(frozen=True)
class MembershipReport:
    feasible: bool
    slacks: tuple
    variant: str
    informations: tuple
    notes: tuple = field(default=())


def rate_informations(mass: np.ndarray, variant: str) -> tuple:
    """The three information terms the rate region compares against."""
    if variant == "Qtilde0":
        return (mutual_information_of(mass, (0,), (1,)),
                conditional_mutual_information_of(mass, (0,), (2,), (1,)),
                conditional_mutual_information_of(mass, (0,), (3,), (1,)))
    return (mutual_information_of(mass, (0,), (1,)),
            mutual_information_of(mass, (0,), (1, 2)),
            mutual_information_of(mass, (0,), (1, 3)))


def rate_slacks(mass: np.ndarray, rates, variant: str = "Q0") -> tuple:
    r0, r1, r2 = rates
    info = rate_informations(mass, variant)
    if variant == "Qtilde0":
        return (r0 - info[0], r1 - info[1], r2 - info[2]), info
    return (r0 - info[0], r0 + r1 - info[1], r0 + r2 - info[2]), info


def information_is_zero(mass: np.ndarray, x_axes) -> bool:
    """U independent of the given axes: every conditional row Q(x|u) agrees within 1e-12.

    Used instead of a tolerance on I(U;X) when the allowed rate is zero; near
    independence the information is quadratic in the perturbation, so any
    positive tolerance would admit first-order changes in the law.
    """
    drop = tuple(a for a in range(1, mass.ndim) if a not in tuple(x_axes))
    pux = mass.sum(axis=drop) if drop else mass
    pu = pux.reshape(pux.shape[0], -1).sum(axis=1)
    rows = pux.reshape(pux.shape[0], -1)[pu > 0] / pu[pu > 0, None]
    return bool(np.all(np.abs(rows - rows[0]) <= ZERO_INFO_TOL))


def feasible_from_mass(mass: np.ndarray, rates, variant: str = "Q0"):
    """(feasible, slacks, informations) for a U x W0 x W1 x W2 mass array."""
    slacks, info = rate_slacks(mass, rates, variant)
    if variant == "Qtilde0":
        return all(s > 0 for s in slacks), slacks, info
    r0, r1, r2 = rates
    bounds = (r0, r0 + r1, r0 + r2)
    groups = ((1,), (1, 2), (1, 3))
    ok = True
    for bound, slack, axes in zip(bounds, slacks, groups):
        if bound <= ZERO_RATE:
            ok = ok and information_is_zero(mass, axes)
        else:
            ok = ok and slack >= -RATE_TOL
    return ok, slacks, info


def rate_membership(instance: ProblemInstance, policy, variant: str = "Q0", rates=None) -> MembershipReport:
    """Check a policy against the rate region; slacks are rate minus information."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    rates = instance.rates if rates is None else tuple(rates)
    mass = joint_mass(instance, policy)
    feasible, slacks, info = feasible_from_mass(mass, rates, variant)
    notes = []
    if variant == "Qtilde0":
        tables = (policy.table,) if isinstance(policy, JointPolicy) else policy.arrays
        if not all(np.all(t > 0) for t in tables):
            feasible = False
            notes.append("policy kernels are not full support")
    else:
        if variant == "Q0" and isinstance(policy, JointPolicy):
            leak = conditional_mutual_information_of(mass, (2,), (3,), (0, 1))
            if leak > MARKOV_TOL:
                feasible = False
                notes.append(f"joint policy violates W1 - (U,W0) - W2 (I = {leak:.3g})")
    return MembershipReport(feasible, tuple(float(s) for s in slacks), variant,
                            tuple(float(i) for i in info), tuple(notes))


def noisy_copy_policy(instance: ProblemInstance, crossover: float, cards=None) -> InformationPolicy:
    """W0 is u passed through a symmetric channel flipping to each other symbol
    with equal probability (total flip mass ``crossover``); W1, W2 constant."""
    k0, k1, k2 = resolve_cardinalities(instance, cards)
    nu = len(instance.alphabet_u)
    if not 0 <= crossover <= 1:
        raise ValueError("crossover must lie in [0, 1]")
    a = np.zeros((nu, k0))
    for u in range(nu):
        a[u, :nu] = crossover / (nu - 1) if nu > 1 else 0.0
        a[u, u] = 1 - crossover if nu > 1 else 1.0
    b = np.zeros((nu, k0, k1))
    b[:, :, 0] = 1
    c = np.zeros((nu, k0, k2))
    c[:, :, 0] = 1
    return InformationPolicy.from_arrays(a, b, c, instance.alphabet_u)
