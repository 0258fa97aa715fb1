"""Single-letter quantities induced by block traces.

The common auxiliary is the pair (M0, T) with T uniform over the block, the
private ones are M1 and M2, and the actions are read at time T. The induced
joint therefore has U-marginal equal to the source law, rate terms bounded by
the message-set sizes, and an encoder cost equal to the block average.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..model import RATE_TOL, RateTriple
from ..probcore import JointDistribution
from .beliefs import ensemble_posteriors
from .codebook import CodebookEnsemble

DENSE_LIMIT = 2_000_000


@dataclass
class ConverseReport:
    induced_joint: JointDistribution | None
    u_marginal: np.ndarray
    u_marginal_error: float
    u_standard_errors: np.ndarray
    u_marginal_ok: bool
    informations: tuple
    information_standard_errors: tuple
    slacks: tuple
    qhat0_member: bool
    block_cost: float
    single_letter_cost: float
    cost_identity_residual: float
    exhaustive: bool
    estimator: str

    def to_dict(self) -> dict:
        return {"u_marginal": self.u_marginal.tolist(), "u_marginal_error": self.u_marginal_error,
                "u_standard_errors": self.u_standard_errors.tolist(),
                "u_marginal_ok": self.u_marginal_ok, "informations": list(self.informations),
                "information_standard_errors": list(self.information_standard_errors),
                "slacks": list(self.slacks), "qhat0_member": self.qhat0_member,
                "block_cost": self.block_cost, "single_letter_cost": self.single_letter_cost,
                "cost_identity_residual": self.cost_identity_residual,
                "exhaustive": self.exhaustive, "estimator": self.estimator}


def _labels(values):
    """Dense labels for hashable values, ordered by sort order of the values."""
    uniq = sorted(set(values))
    index = {v: i for i, v in enumerate(uniq)}
    return np.array([index[v] for v in values], dtype=np.int64), uniq


def _entropy(weights) -> float:
    w = weights[weights > 0]
    return float(-(w * np.log2(w)).sum())


def _plugin_information(u, key, weight) -> float:
    """I(U; K) in bits of the weighted empirical law of the rows (u, key)."""
    k_lab, _ = _labels(key)
    nu = int(u.max()) + 1
    joint = np.bincount(k_lab * nu + u, weights=weight, minlength=(k_lab.max() + 1) * nu)
    pk = np.bincount(k_lab, weights=weight)
    pu = np.bincount(u, weights=weight, minlength=nu)
    return _entropy(pu) + _entropy(pk) - _entropy(joint)


def converse_check(instance, traces, rates=None, exhaustive: bool = False, source=None,
                   seed: int = 0, tol: float = 1e-12) -> ConverseReport:
    """Checks the induced single-letter joint of a set of traces.

    ``exhaustive`` marks traces that enumerate every source sequence with its
    probability as weight; comparisons are then exact up to ``tol``. For
    Monte-Carlo traces they are made within three standard errors, and the rate
    terms are estimated from ensemble posteriors when ``source`` is a codebook
    ensemble (plug-in estimates otherwise).
    """
    if not traces:
        raise ValueError("need at least one trace")
    if any(t.v1 is None or t.v2 is None for t in traces):
        raise ValueError("traces must carry realized actions")
    rates = RateTriple(*(rates.as_tuple() if isinstance(rates, RateTriple) else
                         rates if rates is not None else instance.rates))
    n = traces[0].n
    prior = np.asarray(instance.prior, dtype=float)
    nu = prior.size
    w = np.array([t.weight for t in traces], dtype=float)
    w = w / w.sum()
    rows = len(traces) * n
    u = np.concatenate([t.u for t in traces])
    v1 = np.concatenate([t.v1 for t in traces])
    v2 = np.concatenate([t.v2 for t in traces])
    tt = np.tile(np.arange(n), len(traces))
    m = [np.repeat([t.messages[k] for t in traces], n) for k in range(3)]
    rw = np.repeat(w / n, n)

    # (a) U marginal
    frac = np.stack([np.bincount(t.u, minlength=nu) / n for t in traces])
    u_marg = w @ frac
    if exhaustive:
        se = np.zeros(nu)
    else:
        se = frac.std(axis=0, ddof=1) / np.sqrt(len(traces)) if len(traces) > 1 else np.full(nu, np.inf)
    err = np.abs(u_marg - prior)
    u_ok = bool(np.all(err <= 3 * se + tol))

    # induced joint U x (M0,T) x M1 x M2 x V1 x V2
    w0_key = list(zip(m[0].tolist(), tt.tolist()))
    w0_lab, w0_vals = _labels(w0_key)
    w1_lab, w1_vals = _labels(m[1].tolist())
    w2_lab, w2_vals = _labels(m[2].tolist())
    n1, n2 = instance.cost_e.shape[1:]
    shape = (nu, len(w0_vals), len(w1_vals), len(w2_vals), n1, n2)
    joint = None
    if int(np.prod(shape)) <= DENSE_LIMIT:
        mass = np.zeros(shape)
        np.add.at(mass, (u, w0_lab, w1_lab, w2_lab, v1, v2), rw)
        joint = JointDistribution((tuple(range(nu)), tuple(w0_vals), tuple(w1_vals), tuple(w2_vals),
                                   tuple(range(n1)), tuple(range(n2))), mass,
                                  ("U", "W0", "W1", "W2", "V1", "V2"))

    # (b) rate terms
    bounds = (rates.R0, rates.R0 + rates.R1, rates.R0 + rates.R2)
    if exhaustive or not isinstance(source, CodebookEnsemble):
        keys = (w0_key, list(zip(w0_key, m[1].tolist())), list(zip(w0_key, m[2].tolist())))
        info = tuple(_plugin_information(u, k, rw) for k in keys)
        info_se = (0.0, 0.0, 0.0)
        estimator = "plug-in"
    else:
        info, info_se = _posterior_informations(source, traces, prior, seed)
        estimator = "ensemble-posterior"
    slacks = tuple(float(b - i) for b, i in zip(bounds, info))
    member = all(s + 3 * e >= -max(tol, RATE_TOL) for s, e in zip(slacks, info_se))

    # (c) cost identity
    per_trace = np.array([instance.cost_e[t.u, t.v1, t.v2].mean() for t in traces])
    block = float(w @ per_trace)
    uvv = np.zeros((nu, n1, n2))
    np.add.at(uvv, (u, v1, v2), rw)
    single = float((uvv * instance.cost_e).sum())
    return ConverseReport(joint, u_marg, float(err.max()), se, u_ok, tuple(map(float, info)),
                          tuple(map(float, info_se)), slacks, bool(member), block, single,
                          abs(block - single), exhaustive, estimator)


def _posterior_informations(ens: CodebookEnsemble, traces, prior, seed):
    """I(U_T; M0, T) and friends as H(U) minus the average posterior entropy.

    Failed transmissions are counted at the prior entropy, which can only lower
    the estimates.
    """
    h_u = _entropy(prior)
    per = []
    for i, trace in enumerate(traces):
        if not trace.success:
            per.append((0.0, 0.0, 0.0))
            continue
        rng = np.random.default_rng([int(seed), 3, i])
        row = []
        for obs in ((), (1,), (2,)):
            post = ensemble_posteriors(ens, trace, obs, rng)["u"]
            p = np.clip(post, 1e-300, 1.0)
            h = float(-(np.where(post > 0, post * np.log2(p), 0.0)).sum(axis=1).mean())
            row.append(h_u - h)
        per.append(tuple(row))
    arr = np.array(per)
    se = arr.std(axis=0, ddof=1) / np.sqrt(len(per)) if len(per) > 1 else np.zeros(3)
    return tuple(arr.mean(axis=0)), tuple(se)
