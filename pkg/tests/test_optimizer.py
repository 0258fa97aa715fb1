import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gwpersuasion.equilibria import BudgetExceeded
from gwpersuasion.model import constant_policy, joint_mass, matching_instance, rate_membership
from gwpersuasion.optimizer import (SolverConfig, _Evaluator, deterministic_policy_sweep, separable_gap_check,
                                    separable_parts, solve_gamma_hat, solve_gamma_star, sweep_size)

from conftest import random_instance

FAST = SolverConfig(restarts=2, local_steps=40)


def double_difference_separable(cost):
    """Separable iff every mixed second difference vanishes, for every reference pair."""
    _, n1, n2 = cost.shape
    for r1, r2 in itertools.product(range(n1), range(n2)):
        d = cost - cost[:, [r1], :] - cost[:, :, [r2]] + cost[:, [r1], [r2]][:, :, None]
        if np.max(np.abs(d)) > 1e-12:
            return False
    return True


class TestGammaStar:
    def test_matching_full_common_rate(self):
        inst = matching_instance((1.0, 0.0, 0.0))
        res = solve_gamma_star(inst, FAST)
        assert res.value == pytest.approx(0.0, abs=1e-9)
        assert deterministic_policy_sweep(inst).value == pytest.approx(0.0, abs=1e-12)

    def test_matching_zero_rates(self):
        inst = matching_instance((0.0, 0.0, 0.0))
        res = solve_gamma_star(inst, FAST)
        assert res.value == pytest.approx(1.0, abs=1e-9)
        assert deterministic_policy_sweep(inst).value == pytest.approx(1.0, abs=1e-12)

    def test_zero_encoder_cost(self):
        rng = np.random.default_rng(0)
        inst = random_instance(rng)
        inst = inst.with_costs(cost_e=np.zeros_like(inst.cost_e))
        assert solve_gamma_star(inst, FAST).value == 0.0

    def test_result_is_feasible_and_documented(self):
        inst = random_instance(np.random.default_rng(1), rates=(0.3, 0.2, 0.1))
        res = solve_gamma_star(inst, FAST)
        assert rate_membership(inst, res.policy, "Q0").feasible
        doc = res.to_dict()
        assert {"value", "policy", "witness", "slacks", "restarts_used", "caveats"} <= set(doc)

    def test_seed_determinism(self):
        inst = random_instance(np.random.default_rng(2), rates=(0.5, 0.25, 0.25))
        a = solve_gamma_star(inst, FAST).to_dict()
        b = solve_gamma_star(inst, FAST).to_dict()
        assert a == b


class TestGammaHat:
    def test_not_above_star_when_revealing(self):
        inst = random_instance(np.random.default_rng(3), rates=(2.0, 2.0, 2.0))
        star = solve_gamma_star(inst, FAST)
        assert solve_gamma_hat(inst, FAST, star=star).value <= star.value + 1e-12

    def test_constant_cost(self):
        inst = random_instance(np.random.default_rng(4))
        inst = inst.with_costs(cost_e=np.full(inst.cost_e.shape, 0.37))
        assert solve_gamma_hat(inst, FAST).value == pytest.approx(0.37, abs=1e-12)


class TestSeparable:
    def test_sum_form(self, matching):
        assert separable_parts(matching.cost_e)[2] == 0.0
        assert double_difference_separable(matching.cost_e)

    def test_joint_miss(self):
        c = np.zeros((2, 2, 2))
        for u, v1, v2 in np.ndindex(2, 2, 2):
            c[u, v1, v2] = float(v1 == v2 != u)
        assert separable_parts(c)[2] > 0
        assert not double_difference_separable(c)

    @given(st.integers(0, 10**6), st.booleans())
    def test_residual_agrees_with_double_differences(self, seed, sep):
        rng = np.random.default_rng(seed)
        if sep:
            c = rng.random((2, 3))[:, :, None] + rng.random((2, 2))[:, None, :]
        else:
            c = rng.integers(0, 2, (2, 3, 2)).astype(float)
        assert (separable_parts(c)[2] <= 1e-9) == double_difference_separable(c)

    def test_gap_check_on_matching(self):
        out = separable_gap_check(matching_instance((0.5, 0.5, 0.5)), FAST)
        assert out["separable"] and abs(out["gap"]) <= 1e-9


class TestSweep:
    def test_uninformative_only(self):
        rng = np.random.default_rng(5)
        inst = random_instance(rng, rates=(0.0, 0.0, 0.0))
        ref = _Evaluator(inst, SolverConfig())(joint_mass(inst, constant_policy(inst))).value
        assert deterministic_policy_sweep(inst).value == pytest.approx(ref, abs=1e-12)

    def test_matching_high_rates(self, matching):
        res = deterministic_policy_sweep(matching)
        assert res.value == 0.0 and res.exact

    def test_budget_refusal(self, matching):
        assert sweep_size(matching) > 10
        with pytest.raises(BudgetExceeded):
            deterministic_policy_sweep(matching, budget=10)


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 10**6))
def test_value_within_cost_range(seed):
    inst = random_instance(np.random.default_rng(seed))
    v = solve_gamma_star(inst, SolverConfig(restarts=1, local_steps=15)).value
    assert inst.cost_e.min() - 1e-12 <= v <= inst.cost_e.max() + 1e-12
