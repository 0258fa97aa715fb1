"""The auxiliary one-shot Bayesian game induced by an information policy.

Decoder 1's type is (w0, w1) and decoder 2's type is (w0, w2). Tables are
plain arrays indexed by symbol position; entries for zero-probability types
are zero and flagged by the ``*_supported`` masks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ProblemInstance, joint_mass
from .probcore import FiniteDistribution, JointDistribution

TIE_TOL = 1e-10


class UnsupportedType(ValueError):
    """A decoder type of probability zero was queried."""


@dataclass(frozen=True, eq=False)
class SingleLetterGame:
    instance: ProblemInstance
    mass: np.ndarray             # U x W0 x W1 x W2
    type_joint: JointDistribution
    supported: np.ndarray        # W0 x W1 x W2
    posterior_u: np.ndarray      # W0 x W1 x W2 x U
    type1_supported: np.ndarray  # W0 x W1
    type2_supported: np.ndarray  # W0 x W2
    belief_2_given_01: np.ndarray  # W0 x W1 x W2, normalized over W2
    belief_1_given_02: np.ndarray  # W0 x W2 x W1, normalized over W1
    cost_star_1: np.ndarray      # W0 x W1 x W2 x V1 x V2
    cost_star_2: np.ndarray
    cost_star_e: np.ndarray

    @property
    def cards(self) -> tuple:
        return self.supported.shape

    @property
    def n_actions(self) -> tuple:
        return self.cost_star_1.shape[3:]

    def posterior(self, w0, w1, w2) -> FiniteDistribution:
        if not self.supported[w0, w1, w2]:
            raise UnsupportedType(f"triple {(w0, w1, w2)} has probability zero")
        return FiniteDistribution(self.instance.alphabet_u, self.posterior_u[w0, w1, w2])

    def type_supported(self, player: int, w0: int, wi: int) -> bool:
        table = self.type1_supported if player == 1 else self.type2_supported
        return bool(table[w0, wi])


def _divide(num, den):
    out = np.zeros(np.broadcast_shapes(num.shape, den.shape))
    np.divide(num, den, out=out, where=den > 0)
    return out


def game_from_joint(instance: ProblemInstance, mass) -> SingleLetterGame:
    """Game for an arbitrary U x W0 x W1 x W2 joint mass array."""
    mass = np.asarray(mass, dtype=float)
    p = mass.sum(axis=0)
    supported = p > 0
    p01 = p.sum(axis=2)
    p02 = p.sum(axis=1)
    posterior = _divide(np.moveaxis(mass, 0, -1), p[..., None])
    b2 = _divide(p, p01[:, :, None])
    b1 = _divide(np.transpose(p, (0, 2, 1)), p02[:, :, None])
    stars = []
    for cost in (instance.cost_1, instance.cost_2, instance.cost_e):
        stars.append(np.einsum("abcu,uxy->abcxy", posterior, cost))
    type_joint = JointDistribution(tuple(range(k) for k in p.shape), p, ("W0", "W1", "W2"))
    return SingleLetterGame(instance, mass, type_joint, supported, posterior,
                            p01 > 0, p02 > 0, b2, b1, stars[0], stars[1], stars[2])


def build_single_letter_game(instance: ProblemInstance, policy) -> SingleLetterGame:
    return game_from_joint(instance, joint_mass(instance, policy))


@dataclass(frozen=True, eq=False)
class DecoderStrategy:
    """Behavioral strategies: sigma_1[w0, w1, v1] and sigma_2[w0, w2, v2]."""

    sigma_1: np.ndarray
    sigma_2: np.ndarray

    def __post_init__(self):
        for name in ("sigma_1", "sigma_2"):
            arr = np.array(getattr(self, name), dtype=float)
            if arr.ndim != 3:
                raise ValueError(f"{name} must have shape (W0, Wi, Vi)")
            if np.any(arr < -1e-12) or np.any(np.abs(arr.sum(axis=2) - 1) > 1e-9):
                raise ValueError(f"{name} rows must be probability vectors")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_pure(cls, actions_1, actions_2, n1: int, n2: int) -> "DecoderStrategy":
        """Build from integer action tables indexed (w0, w1) and (w0, w2)."""
        return cls(np.eye(n1)[np.asarray(actions_1)], np.eye(n2)[np.asarray(actions_2)])

    @classmethod
    def uniform(cls, game: SingleLetterGame) -> "DecoderStrategy":
        k0, k1, k2 = game.cards
        n1, n2 = game.n_actions
        return cls(np.full((k0, k1, n1), 1.0 / n1), np.full((k0, k2, n2), 1.0 / n2))

    def is_pure(self) -> bool:
        return bool(np.all((self.sigma_1 == 0) | (self.sigma_1 == 1))
                    and np.all((self.sigma_2 == 0) | (self.sigma_2 == 1)))

    def pure_actions(self) -> tuple:
        return self.sigma_1.argmax(axis=2), self.sigma_2.argmax(axis=2)

    def to_dict(self) -> dict:
        return {"sigma_1": self.sigma_1.tolist(), "sigma_2": self.sigma_2.tolist()}


def psi_table(game: SingleLetterGame, player: int, opponent_sigma) -> np.ndarray:
    """Expected cost of every own pure action for every type of ``player``.

    Returns an array (W0, Wi, Vi); rows of unsupported types are zero.
    """
    opponent_sigma = np.asarray(opponent_sigma, dtype=float)
    if player == 1:
        return np.einsum("abc,acy,abcxy->abx", game.belief_2_given_01, opponent_sigma, game.cost_star_1)
    if player == 2:
        return np.einsum("acb,abx,abcxy->acy", game.belief_1_given_02, opponent_sigma, game.cost_star_2)
    raise ValueError("player must be 1 or 2")


def expected_cost_psi(game: SingleLetterGame, strategies: DecoderStrategy, player: int, type_) -> float:
    """Expected cost of a decoder of the given type under the strategy pair."""
    w0, wi = type_
    if not game.type_supported(player, w0, wi):
        raise UnsupportedType(f"player {player} type {type_} has probability zero")
    if player == 1:
        table = psi_table(game, 1, strategies.sigma_2)
        return float(table[w0, wi] @ strategies.sigma_1[w0, wi])
    table = psi_table(game, 2, strategies.sigma_1)
    return float(table[w0, wi] @ strategies.sigma_2[w0, wi])


@dataclass(frozen=True, eq=False)
class BestResponse:
    player: int
    values: np.ndarray   # (W0, Wi, Vi) expected cost per own action
    minimum: np.ndarray  # (W0, Wi)
    tie_sets: dict       # supported (w0, wi) -> tuple of minimizing actions
    strategy: np.ndarray  # (W0, Wi, Vi) lowest-index selection, one-hot


def best_response(game: SingleLetterGame, player: int, opponent_sigma, tol: float = TIE_TOL) -> BestResponse:
    values = psi_table(game, player, opponent_sigma)
    support = game.type1_supported if player == 1 else game.type2_supported
    minimum = values.min(axis=2)
    ties = values <= minimum[:, :, None] + tol
    tie_sets = {}
    for w0, wi in zip(*np.nonzero(support)):
        tie_sets[(int(w0), int(wi))] = tuple(int(a) for a in np.nonzero(ties[w0, wi])[0])
    choice = ties.argmax(axis=2)
    strategy = np.eye(values.shape[2])[choice]
    return BestResponse(player, values, minimum, tie_sets, strategy)


def encoder_cost_of(mass: np.ndarray, cost_e: np.ndarray, sigma_1, sigma_2) -> float:
    return float(np.einsum("uabc,abx,acy,uxy->", mass, sigma_1, sigma_2, cost_e))


def encoder_expected_cost(instance: ProblemInstance, policy, strategies: DecoderStrategy) -> float:
    """E[c_e(U,V1,V2)] over source, policy and decoder strategies."""
    mass = joint_mass(instance, policy)
    return encoder_cost_of(mass, instance.cost_e, strategies.sigma_1, strategies.sigma_2)


def decoder_expected_cost(game: SingleLetterGame, strategies: DecoderStrategy, player: int) -> float:
    cost = game.instance.cost_1 if player == 1 else game.instance.cost_2
    return encoder_cost_of(game.mass, cost, strategies.sigma_1, strategies.sigma_2)


def deviation_gain(game: SingleLetterGame, strategies: DecoderStrategy) -> float:
    """Largest cost reduction any supported type gets from a pure deviation."""
    gain = 0.0
    for player, own, other, support in (
            (1, strategies.sigma_1, strategies.sigma_2, game.type1_supported),
            (2, strategies.sigma_2, strategies.sigma_1, game.type2_supported)):
        values = psi_table(game, player, other)
        current = np.einsum("abx,abx->ab", values, own)
        delta = current - values.min(axis=2)
        if np.any(support):
            gain = max(gain, float(delta[support].max()))
    return gain
