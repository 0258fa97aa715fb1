import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gwpersuasion.probcore import (FiniteDistribution, JointDistribution, ProbabilityError,
                                   StochasticKernel, UnreachableObservation, bayes_posterior,
                                   conditional_mutual_information, entropy, kl_divergence,
                                   marginalize, mutual_information)


def h_bits(ps):
    return -math.fsum(p * math.log2(p) for p in ps if p > 0)


def joint(mass, names=None):
    mass = np.asarray(mass, dtype=float)
    return JointDistribution(tuple(range(k) for k in mass.shape), mass, names or ())


def simplex(size):
    return st.lists(st.floats(0.01, 1.0), min_size=size, max_size=size).map(
        lambda xs: np.array(xs) / sum(xs))


def tensor(shape):
    n = int(np.prod(shape))
    return st.lists(st.floats(0.0, 1.0), min_size=n, max_size=n).filter(
        lambda xs: sum(xs) > 1e-3).map(lambda xs: (np.array(xs) / sum(xs)).reshape(shape))


class TestEntropy:
    def test_uniform_binary(self):
        assert entropy(FiniteDistribution.uniform(2)) == pytest.approx(1.0, abs=1e-15)

    def test_point_mass(self):
        assert entropy(FiniteDistribution.point(("a", "b"), "b")) == 0.0

    def test_quarter(self):
        expected = -(0.25 * math.log2(0.25) + 0.75 * math.log2(0.75))
        assert entropy(FiniteDistribution((0, 1), [0.25, 0.75])) == pytest.approx(expected, abs=1e-15)

    @given(simplex(4))
    def test_bounded_by_log_alphabet(self, p):
        h = entropy(FiniteDistribution(4, p))
        assert -1e-12 <= h <= 2.0 + 1e-12


class TestKL:
    def test_identical(self):
        p = FiniteDistribution(2, [0.3, 0.7])
        assert kl_divergence(p, p) == 0.0

    def test_support_violation(self):
        assert kl_divergence(FiniteDistribution.uniform(2), FiniteDistribution(2, [1, 0])) == math.inf

    def test_formula(self):
        expected = 0.5 * math.log2(0.5 / 0.25) + 0.5 * math.log2(0.5 / 0.75)
        got = kl_divergence(FiniteDistribution.uniform(2), FiniteDistribution(2, [0.25, 0.75]))
        assert got == pytest.approx(expected, abs=1e-15)

    def test_alphabet_mismatch(self):
        with pytest.raises(ProbabilityError):
            kl_divergence(FiniteDistribution(("a", "b"), [0.5, 0.5]), FiniteDistribution.uniform(2))

    @given(simplex(3), simplex(3))
    def test_nonnegative(self, p, q):
        assert kl_divergence(FiniteDistribution(3, p), FiniteDistribution(3, q)) >= 0.0


class TestMutualInformation:
    def test_product_is_zero(self):
        m = np.outer([0.2, 0.8], [0.6, 0.4])
        assert mutual_information(joint(m)) == pytest.approx(0.0, abs=1e-15)

    def test_copy_channel(self):
        assert mutual_information(joint(np.diag([0.5, 0.5]))) == pytest.approx(1.0, abs=1e-15)

    def test_symmetric_flip(self):
        m = 0.5 * np.array([[0.9, 0.1], [0.1, 0.9]])
        assert mutual_information(joint(m)) == pytest.approx(1 - h_bits([0.1, 0.9]), abs=1e-14)

    def test_overlapping_groups_rejected(self):
        with pytest.raises(ProbabilityError):
            mutual_information(joint(np.diag([0.5, 0.5])), 0, 0)

    @given(tensor((2, 3)))
    def test_bounds(self, m):
        j = joint(m)
        i = mutual_information(j)
        hx = h_bits(m.sum(axis=1))
        hy = h_bits(m.sum(axis=0))
        assert -1e-12 <= i <= min(hx, hy) + 1e-9


class TestConditionalMutualInformation:
    def test_markov_chain(self):
        # X - Z - Y
        pz = np.array([0.3, 0.7])
        px_z = np.array([[0.9, 0.1], [0.2, 0.8]])
        py_z = np.array([[0.6, 0.4], [0.1, 0.9]])
        m = np.einsum("z,zx,zy->xyz", pz, px_z, py_z)
        assert conditional_mutual_information(joint(m)) == pytest.approx(0.0, abs=1e-14)

    def test_constant_conditioner(self):
        m2 = np.array([[0.1, 0.3], [0.4, 0.2]])
        m = m2[:, :, None]
        assert conditional_mutual_information(joint(m)) == pytest.approx(
            mutual_information(joint(m2)), abs=1e-14)

    def test_random_against_cellwise_sum(self):
        rng = np.random.default_rng(5)
        m = rng.dirichlet(np.ones(8)).reshape(2, 2, 2)
        total = 0.0
        for z in range(2):
            pz = m[:, :, z].sum()
            c = m[:, :, z] / pz
            px, py = c.sum(axis=1), c.sum(axis=0)
            total += pz * math.fsum(c[x, y] * math.log2(c[x, y] / (px[x] * py[y]))
                                    for x in range(2) for y in range(2))
        assert conditional_mutual_information(joint(m)) == pytest.approx(total, abs=1e-13)

    @settings(max_examples=50)
    @given(tensor((2, 2, 3)))
    def test_chain_rule(self, m):
        j = joint(m, ("X", "Y", "Z"))
        lhs = mutual_information(j, "X", ("Y", "Z"))
        rhs = mutual_information(j, "X", "Z") + conditional_mutual_information(j, "X", "Y", "Z")
        assert lhs == pytest.approx(rhs, abs=1e-9)


class TestBayes:
    def test_noiseless(self):
        prior = FiniteDistribution(("a", "b"), [0.3, 0.7])
        kernel = StochasticKernel((prior.alphabet,), ((0, 1),), np.eye(2))
        post = bayes_posterior(prior, kernel, 1)
        assert post.mass.tolist() == [0.0, 1.0]

    def test_uninformative(self):
        prior = FiniteDistribution(3, [0.2, 0.3, 0.5])
        kernel = StochasticKernel((3,), (2,), np.tile([0.4, 0.6], (3, 1)))
        assert np.allclose(bayes_posterior(prior, kernel, 0).mass, prior.mass, atol=1e-15)

    def test_flip(self):
        prior = FiniteDistribution.uniform(2)
        kernel = StochasticKernel((2,), (2,), [[0.9, 0.1], [0.1, 0.9]])
        post = bayes_posterior(prior, kernel, 0)
        assert post.mass == pytest.approx([0.9, 0.1], abs=1e-15)

    def test_unreachable(self):
        prior = FiniteDistribution(2, [1.0, 0.0])
        kernel = StochasticKernel((2,), (2,), np.eye(2))
        with pytest.raises(UnreachableObservation):
            bayes_posterior(prior, kernel, 1)


class TestMarginalize:
    def test_identity(self):
        m = np.random.default_rng(0).dirichlet(np.ones(6)).reshape(2, 3)
        j = joint(m)
        assert np.allclose(marginalize(j, (0, 1)).mass, j.mass, rtol=0, atol=1e-15)

    def test_product(self):
        p = np.array([0.25, 0.75])
        out = marginalize(joint(np.outer(p, [0.1, 0.2, 0.7])), 0)
        assert out.mass == pytest.approx(p, abs=1e-15)

    def test_random_three_axes(self):
        m = np.random.default_rng(1).dirichlet(np.ones(24)).reshape(2, 3, 4)
        out = marginalize(joint(m, ("A", "B", "C")), ("C", "A"))
        ref = np.zeros((4, 2))
        for a in range(2):
            for b in range(3):
                for c in range(4):
                    ref[c, a] += m[a, b, c]
        assert out.names == ("C", "A")
        assert np.allclose(out.mass, ref, atol=1e-15)


class TestValidation:
    def test_negative_mass(self):
        with pytest.raises(ProbabilityError):
            FiniteDistribution(2, [1.2, -0.2])

    def test_bad_sum(self):
        with pytest.raises(ProbabilityError):
            FiniteDistribution(2, [0.5, 0.4])

    def test_renormalizes_within_window(self):
        p = FiniteDistribution(2, [0.5, 0.5 + 1e-12])
        assert p.mass.sum() == pytest.approx(1.0, abs=1e-15)

    def test_kernel_rows(self):
        with pytest.raises(ProbabilityError):
            StochasticKernel((2,), (2,), [[0.5, 0.5], [0.3, 0.3]])
