import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gwpersuasion.model import constant_policy, copy_policy, matching_instance, noisy_copy_policy
from gwpersuasion.simulator.typicality import (RestrictedTypeLaw, TypicalityConfig, default_config,
                                               delta_schedule, is_typical, joint_counts,
                                               log_failure, log_success, margin_rates,
                                               typical_rows)


def brute_force_law(fixed, rows, targets, delta):
    """Enumerate every word: (P(typical), E[count | typical], {count table: prob})."""
    n = len(fixed)
    c, m = rows.shape
    total = 0.0
    mean = np.zeros((c, m))
    tables = {}
    for word in itertools.product(range(m), repeat=n):
        p = math.prod(rows[x, y] for x, y in zip(fixed, word))
        if p == 0:
            continue
        counts = np.zeros((c, m))
        for x, y in zip(fixed, word):
            counts[x, y] += 1
        if np.any((counts > 0) & (targets <= 0)):
            continue
        if np.abs(counts / n - targets).sum() > delta + 1e-12:
            continue
        total += p
        mean += p * counts
        key = counts.astype(int).tobytes()
        tables[key] = tables.get(key, 0.0) + p
    return total, mean / total if total > 0 else mean, tables


def law_case(seed, n=7, c=3, m=3):
    rng = np.random.default_rng(seed)
    fixed = rng.integers(0, c, n)
    rows = rng.dirichlet(np.full(m, 0.7), c)
    rows[rows < 0.05] = 0.0
    rows /= rows.sum(axis=1, keepdims=True)
    sizes = np.bincount(fixed, minlength=c)
    # targets near (type of the fixed sequence) x rows, with some support cut
    targets = (sizes / n)[:, None] * (0.5 * rows + 0.5 * rng.dirichlet(np.ones(m), c))
    targets[targets < 0.02] = 0.0
    targets /= targets.sum()
    return fixed, sizes, rows, targets


class TestRestrictedTypeLaw:
    @pytest.mark.parametrize("seed", range(12))
    @pytest.mark.parametrize("delta", [0.3, 0.6, 2.0])
    def test_against_enumeration(self, seed, delta):
        fixed, sizes, rows, targets = law_case(seed)
        p, mean, _ = brute_force_law(fixed, rows, targets, delta)
        law = RestrictedTypeLaw(sizes, rows, targets, delta)
        if p == 0:
            assert law.log_p == -math.inf
            return
        assert math.exp(law.log_p) == pytest.approx(p, rel=1e-9, abs=1e-300)
        frac = np.divide(mean, sizes[:, None], out=np.zeros_like(mean), where=sizes[:, None] > 0)
        assert np.allclose(law.expected_fractions(), frac, atol=1e-9)

    def test_sampling_matches_enumeration(self):
        fixed, sizes, rows, targets = law_case(3)
        delta = 0.8
        p, _, tables = brute_force_law(fixed, rows, targets, delta)
        assert p > 0
        law = RestrictedTypeLaw(sizes, rows, targets, delta)
        rng = np.random.default_rng(0)
        draws = 20000
        freq = {}
        for _ in range(draws):
            key = law.sample(rng).astype(int).tobytes()
            freq[key] = freq.get(key, 0) + 1
        assert set(freq) <= set(tables)
        tv = 0.5 * sum(abs(freq.get(k, 0) / draws - v / p) for k, v in tables.items())
        assert tv < 0.03

    def test_empty_set(self):
        law = RestrictedTypeLaw([3], [[1.0, 0.0]], [[0.0, 1.0]], 0.5)
        assert law.log_p == -math.inf
        with pytest.raises(ValueError):
            law.sample(np.random.default_rng(0))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10**6), st.floats(0.05, 1.0), st.floats(0.0, 0.5))
    def test_monotone_in_delta(self, seed, delta, extra):
        _, sizes, rows, targets = law_case(seed, n=9)
        a = RestrictedTypeLaw(sizes, rows, targets, delta).log_p
        b = RestrictedTypeLaw(sizes, rows, targets, delta + extra).log_p
        assert a <= b + 1e-12 and b <= 1e-12


class TestSuccessProbability:
    @pytest.mark.parametrize("p,k", [(0.3, 1), (0.01, 64), (1e-6, 2**20), (0.5, 2**40), (1e-12, 3)])
    def test_formula(self, p, k):
        direct = 1 - (1 - p) ** k
        assert math.exp(log_success(math.log(p), math.log(k))) == pytest.approx(direct, rel=1e-6)
        assert math.exp(log_failure(math.log(p), math.log(k))) == pytest.approx(1 - direct, rel=1e-6, abs=1e-300)

    def test_edges(self):
        assert log_success(-math.inf, 5.0) == -math.inf
        assert log_failure(-math.inf, 5.0) == 0.0
        assert log_success(0.0, 1.0) == 0.0


class TestTypicality:
    def test_vacuous_delta(self):
        rng = np.random.default_rng(0)
        target = rng.dirichlet(np.ones(6)).reshape(2, 3)
        for _ in range(50):
            x, y = rng.integers(0, 2, 20), rng.integers(0, 3, 20)
            assert is_typical(joint_counts((x, y), (2, 3)), target, 2.0)

    def test_support_condition(self):
        target = np.array([[0.5, 0.0], [0.0, 0.5]])
        counts = np.array([[9, 1], [0, 10]])
        assert not is_typical(counts, target, 2.0)

    def test_rows_agree_with_scalar(self):
        rng = np.random.default_rng(1)
        target = rng.dirichlet(np.ones(4)).reshape(2, 2)
        stack = rng.integers(0, 5, (40, 2, 2)) + 1
        got = typical_rows(stack, target, 0.3)
        assert got.tolist() == [is_typical(c, target, 0.3) for c in stack]

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TypicalityConfig(0.0)

    def test_schedule(self):
        assert delta_schedule(50) == pytest.approx(0.4)
        assert delta_schedule(400) == pytest.approx(0.2)
        ns = [50, 100, 200, 400, 800]
        assert all(delta_schedule(a) > delta_schedule(b) for a, b in zip(ns, ns[1:]))
        assert all(delta_schedule(a) * math.sqrt(a) < delta_schedule(b) * math.sqrt(b)
                   for a, b in zip(ns, ns[1:]))

    def test_default_config(self):
        inst = matching_instance()
        assert default_config(inst, copy_policy(inst, "common")).delta == 0.05
        noisy = noisy_copy_policy(inst, 0.1)
        h = -(0.1 * math.log2(0.1) + 0.9 * math.log2(0.9))
        assert default_config(inst, noisy, eta=0.5).delta == pytest.approx(0.5 * h)
        assert default_config(inst, noisy, n=50).delta == pytest.approx(0.4)

    def test_margin_rates(self):
        inst = matching_instance()
        assert margin_rates(inst, constant_policy(inst), 0.1) == pytest.approx((0.1, 0.1, 0.1))
        assert margin_rates(inst, copy_policy(inst, "common"), 0.1) == pytest.approx((1.1, 0.1, 0.1))
