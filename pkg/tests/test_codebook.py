import hashlib

import numpy as np
import pytest

from gwpersuasion.equilibria import BudgetExceeded
from gwpersuasion.model import (constant_policy, copy_policy, matching_instance, noisy_copy_policy)
from gwpersuasion.simulator import (CodebookEnsemble, TypicalityConfig, default_config, encode,
                                    error_event_frequencies,
                                    exhaustive_traces, generate_codebook,
                                    is_typical, message_bits, simulate_traces)
from gwpersuasion.simulator.codebook import draw_source, trial_rng
from gwpersuasion.simulator.typicality import joint_counts

from conftest import random_policy

GOLDEN_SHA256 = "8282610898c78f1ab5bccf4a2ee20dd6bbeadb0dce88e4dee3f0e1dc95166789"


def digest(cb):
    h = hashlib.sha256()
    for words in (cb.w0_words, cb.w1_words, cb.w2_words):
        h.update(np.ascontiguousarray(words, dtype=np.int64).tobytes())
    return h.hexdigest()


def oracle_encode(cb, u, delta):
    """Plain-loop first-fit encoder over the stored words."""
    tg = cb.targets
    n = len(u)

    def typical(seqs, target):
        counts = {}
        for key in zip(*seqs):
            counts[key] = counts.get(key, 0) + 1
        dist = 0.0
        for idx in np.ndindex(*target.shape):
            c = counts.get(idx, 0)
            if c > 0 and target[idx] <= 0:
                return False
            dist += abs(c / n - target[idx])
        return dist <= delta + 1e-12

    k0, k1, k2 = cb.sizes
    m0 = next((m for m in range(k0) if typical((u, cb.w0_words[m]), tg.t0)), None)
    if m0 is None:
        return 0, 0, 0, (True, False, False)
    w0 = cb.w0_words[m0]
    m1 = next((m for m in range(k1) if typical((u, w0, cb.w1_words[m0, m]), tg.t1)), None)
    m2 = next((m for m in range(k2) if typical((u, w0, cb.w2_words[m0, m]), tg.t2)), None)
    if m1 is None or m2 is None:
        return 0, 0, 0, (False, m1 is None, m2 is None)
    return m0, m1, m2, (False, False, False)


@pytest.fixture
def inst():
    return matching_instance()


def test_message_bits():
    assert message_bits(10, 0.3) == 3
    assert message_bits(3, 1 / 3) == 1
    assert message_bits(7, 0.0) == 0


class TestGeneration:
    def test_single_word_tables(self, inst):
        cb = generate_codebook(inst, copy_policy(inst), TypicalityConfig(0.1), 1, 0, (0.5, 0.5, 0.5))
        assert cb.w0_words.shape == (1, 1) and cb.w1_words.shape == (1, 1, 1)

    def test_constant_policy_words(self, inst):
        cb = generate_codebook(inst, constant_policy(inst), TypicalityConfig(0.1), 6, 0, (0.5, 0.5, 0.5))
        for words in (cb.w0_words, cb.w1_words, cb.w2_words):
            assert not words.any()

    def test_forced_private_words(self, inst):
        cb = generate_codebook(inst, copy_policy(inst, "common"), TypicalityConfig(0.1), 6, 0, (1, 0.5, 0.5))
        assert not cb.w1_words.any() and not cb.w2_words.any()
        assert set(np.unique(cb.w0_words)) <= {0, 1}

    def test_golden(self, inst):
        pol = random_policy(np.random.default_rng(0), 2, (5, 2, 2))
        cb = generate_codebook(inst, pol, TypicalityConfig(0.3), 8, seed=2024, rates=(0.5, 0.25, 0.25))
        assert cb.sizes == (16, 4, 4)
        assert digest(cb) == GOLDEN_SHA256
        again = generate_codebook(inst, pol, TypicalityConfig(0.3), 8, seed=2024, rates=(0.5, 0.25, 0.25))
        assert digest(again) == digest(cb)
        other = generate_codebook(inst, pol, TypicalityConfig(0.3), 8, seed=2025, rates=(0.5, 0.25, 0.25))
        assert digest(other) != digest(cb)

    def test_budget(self, inst):
        with pytest.raises(BudgetExceeded):
            generate_codebook(inst, copy_policy(inst), TypicalityConfig(0.1), 100, 0, (0.5, 0.5, 0.5))
        with pytest.raises(BudgetExceeded):
            generate_codebook(inst, copy_policy(inst), TypicalityConfig(0.1), 20, 0, (1, 0.5, 0.5),
                              max_symbols=1000)


class TestEncode:
    def test_copy_policy_finds_stored_word(self, inst):
        cb = generate_codebook(inst, copy_policy(inst), TypicalityConfig(1e-6), 8, 3, (1, 0.25, 0.25))
        # exact typicality needs a balanced word
        j = next(i for i in range(10, 256) if cb.w0_words[i].sum() == 4)
        u = np.array(cb.w0_words[j])
        m0, m1, m2, flags = encode(cb, u, TypicalityConfig(1e-6))
        assert flags == (False, False, False)
        assert np.array_equal(cb.w0_words[m0], u)

    def test_vacuous_delta(self, inst):
        pol = random_policy(np.random.default_rng(1), 2, (5, 2, 2))
        cfg = TypicalityConfig(2.0)
        cb = generate_codebook(inst, pol, cfg, 12, 0, (0.25, 0.25, 0.25))
        rng = np.random.default_rng(0)
        for _ in range(50):
            assert encode(cb, rng.integers(0, 2, 12), cfg)[3] == (False, False, False)

    def test_against_loop_oracle(self, inst):
        pol = noisy_copy_policy(inst, 0.1)
        pol = random_policy(np.random.default_rng(2), 2, (5, 2, 2), alpha=0.5)
        cfg = default_config(inst, pol, n=100)
        cb = generate_codebook(inst, pol, cfg, 100, 7, (0.08, 0.05, 0.05))
        rng = np.random.default_rng(4)
        flags = np.zeros(3)
        for _ in range(60):
            u = rng.integers(0, 2, 100)
            got = encode(cb, u, cfg)
            assert got == oracle_encode(cb, u, cfg.delta)
            flags += got[3]
        assert 0 < flags.sum() < 60 * 3

    def test_wrong_length(self, inst):
        cb = generate_codebook(inst, copy_policy(inst), TypicalityConfig(0.1), 4, 0, (0.5, 0.5, 0.5))
        with pytest.raises(ValueError):
            encode(cb, [0, 1], TypicalityConfig(0.1))


class TestEnsemble:
    def test_seed_determinism(self, inst):
        ens = CodebookEnsemble(inst, noisy_copy_policy(inst, 0.1), TypicalityConfig(0.2), 60)
        a = simulate_traces(ens, ens.config, 20, 5)
        b = simulate_traces(ens, ens.config, 20, 5)
        for x, y in zip(a, b):
            assert x.messages == y.messages and x.flags == y.flags
            assert np.array_equal(x.w0, y.w0) and np.array_equal(x.w1, y.w1)

    def test_transmitted_words_respect_flags(self, inst):
        pol = random_policy(np.random.default_rng(5), 2, (5, 2, 2))
        cfg = TypicalityConfig(0.35)
        ens = CodebookEnsemble(inst, pol, cfg, 40, (0.3, 0.1, 0.1))
        tg = ens.targets
        seen = set()
        for t in simulate_traces(ens, cfg, 200, 1):
            ok0 = is_typical(joint_counts((t.u, t.w0), tg.sizes[:2]), tg.t0, cfg.delta)
            if t.flags[0]:
                assert not ok0
            if t.success:
                assert ok0
                sizes1 = (tg.sizes[0], tg.sizes[1], tg.sizes[2])
                sizes2 = (tg.sizes[0], tg.sizes[1], tg.sizes[3])
                assert is_typical(joint_counts((t.u, t.w0, t.w1), sizes1), tg.t1, cfg.delta)
                assert is_typical(joint_counts((t.u, t.w0, t.w2), sizes2), tg.t2, cfg.delta)
            seen.add(t.flags)
        assert len(seen) >= 2

    def test_matches_explicit_codebooks(self, inst):
        pol = noisy_copy_policy(inst, 0.1)
        cfg = TypicalityConfig(0.3)
        n, trials, rates = 10, 3000, (0.5, 0.1, 0.1)
        ens = CodebookEnsemble(inst, pol, cfg, n, rates)
        e = simulate_traces(ens, cfg, trials, 0)
        x = []
        for i in range(trials):
            cb = generate_codebook(inst, pol, cfg, n, 10_000 + i, rates)
            x.append(encode(cb, draw_source(trial_rng(99, i), inst.prior, n), cfg)[3])
        pe = np.mean([t.flags[0] for t in e])
        px = np.mean([f[0] for f in x])
        se = np.sqrt(pe * (1 - pe) / trials + px * (1 - px) / trials)
        assert 0.01 < pe < 0.99
        assert abs(pe - px) <= 4 * se

    def test_uninformative_fails_only_on_atypical_source(self, inst):
        cfg = TypicalityConfig(0.05)
        ens = CodebookEnsemble(inst, constant_policy(inst), cfg, 50)
        traces = simulate_traces(ens, cfg, 100, 0)
        est = error_event_frequencies(traces)
        atypical = [not is_typical(np.bincount(t.u, minlength=2), inst.prior, 0.05)
                    for t in traces]
        assert est.p_f0 == np.mean(atypical)
        assert est.p_f1_given_not_f0 == 0.0 and est.p_f2_given_not_f0 == 0.0


def test_exhaustive_weights(inst):
    cb = generate_codebook(inst, copy_policy(inst), TypicalityConfig(1.0), 3, 0, (1, 1, 1))
    traces = exhaustive_traces(cb, TypicalityConfig(1.0))
    assert len(traces) == 8
    assert sum(t.weight for t in traces) == pytest.approx(1.0, abs=1e-15)


def test_first_index_is_truncated_geometric(inst):
    ens = CodebookEnsemble(inst, noisy_copy_policy(inst, 0.1), TypicalityConfig(0.2), 10)
    p, bits, draws = 0.2, 3, 20000
    rng = np.random.default_rng(8)
    hist = np.bincount([ens._first_index(np.log(p), bits, rng) for _ in range(draws)], minlength=8)
    ref = p * (1 - p) ** np.arange(8)
    ref /= ref.sum()
    assert np.abs(hist / draws - ref).max() < 0.015
