"""Stage-wise evaluation of the block game played on a code.

With an explicit codebook whose source sequences can be enumerated, stage t
is the exact game whose types are the messages, with beliefs computed from
the joint law of (U_t, M0, M1, M2). Otherwise the stage games are pooled:
decoder types are the transmitted word symbols and the joint law is the
empirical frequency of (U_t, W0t, W1t, W2t) over all trials and stages.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..equilibria import DEFAULT_BUDGET, FP_TOL, NoEquilibrium, equilibrium_pool, worst_from_mass
from ..game import game_from_joint
from .beliefs import encode_all
from .codebook import (EXHAUSTIVE_LIMIT, Codebook, apply_strategies, codebook_trace, simulate_traces)
from .typicality import TypicalityConfig


class StageFailure(NoEquilibrium):
    def __init__(self, stage, message):
        super().__init__(f"stage {stage}: {message}")
        self.stage = stage


@dataclass
class StageRecord:
    stage: object
    cost: float
    method: str
    equilibria: int
    converged: bool
    epsilon: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class BlockGameResult:
    block_encoder_cost: float
    stages: list
    mode: str
    traces: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {"block_encoder_cost": self.block_encoder_cost, "mode": self.mode,
                "stages": [s.to_dict() for s in self.stages]}


def _solve_stage(instance, mass, stage, budget, fp_rounds, fp_tol):
    game = game_from_joint(instance, mass)
    try:
        eqset = equilibrium_pool(game, budget, fp_rounds, fp_tol)
        cost, witness = worst_from_mass(mass, instance.cost_e, eqset)
    except NoEquilibrium as exc:
        raise StageFailure(stage, str(exc)) from exc
    record = StageRecord(stage, float(cost), eqset.method, int(eqset.count), bool(eqset.converged),
                         float(eqset.epsilon))
    return record, witness


def _exact_stage_masses(codebook: Codebook, config: TypicalityConfig):
    enc = encode_all(codebook, config)
    nu = codebook.targets.n_u
    k0, k1, k2 = codebook.sizes
    masses = []
    for t in range(codebook.n):
        mass = np.zeros((nu, k0, k1, k2))
        np.add.at(mass, (enc.seqs[:, t], enc.messages[:, 0], enc.messages[:, 1], enc.messages[:, 2]),
                  enc.probs)
        masses.append(mass)
    return enc, masses


def stagewise_block_game(source, instance, config: TypicalityConfig, trials: int, seed: int,
                         budget: int = DEFAULT_BUDGET, fp_rounds: int = 2000,
                         fp_tol: float = FP_TOL) -> BlockGameResult:
    """Encoder-worst equilibrium cost of every stage game, averaged over the block."""
    exact = isinstance(source, Codebook) and source.targets.n_u ** source.n <= EXHAUSTIVE_LIMIT
    if exact:
        enc, masses = _exact_stage_masses(source, config)
        records, witnesses = [], []
        for t, mass in enumerate(masses):
            record, witness = _solve_stage(instance, mass, t, budget, fp_rounds, fp_tol)
            records.append(record)
            witnesses.append(witness)
        block = float(np.mean([r.cost for r in records]))
        traces = []
        for u, p in zip(enc.seqs, enc.probs):
            if p <= 0:
                continue
            trace = codebook_trace(source, u, config, weight=float(p))
            m0, m1, m2 = trace.messages
            trace.v1 = np.array([int(np.argmax(w.sigma_1[m0, m1])) for w in witnesses])
            trace.v2 = np.array([int(np.argmax(w.sigma_2[m0, m2])) for w in witnesses])
            traces.append(trace)
        return BlockGameResult(block, records, "exact", traces)

    traces = simulate_traces(source, config, trials, seed)
    tg = source.targets
    mass = np.zeros(tg.sizes)
    weight = sum(t.weight for t in traces)
    for trace in traces:
        np.add.at(mass, (trace.u, trace.w0, trace.w1, trace.w2), trace.weight / (weight * trace.n))
    record, witness = _solve_stage(instance, mass, "pooled", budget, fp_rounds, fp_tol)
    rng = np.random.default_rng([int(seed), 2])
    for trace in traces:
        apply_strategies(trace, witness, rng)
    return BlockGameResult(record.cost, [record], "pooled", traces)
