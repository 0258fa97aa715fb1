"""Finite-alphabet probability and information primitives (all logs base 2)."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Sequence

import numpy as np

RENORM_WINDOW = 1e-9
TOL = 1e-12


class ProbabilityError(ValueError):
    """Invalid probability object or incompatible arguments."""


class UnreachableObservation(ProbabilityError):
    """Conditioning on an observation of probability zero."""


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


def _normalize(mass: np.ndarray, what: str, axis=None) -> np.ndarray:
    if not np.all(np.isfinite(mass)):
        raise ProbabilityError(f"{what}: non-finite mass")
    if np.any(mass < 0):
        raise ProbabilityError(f"{what}: negative mass")
    total = mass.sum(axis=axis, keepdims=axis is not None)
    if np.any(np.abs(total - 1.0) > RENORM_WINDOW):
        raise ProbabilityError(f"{what}: mass sums to {np.ravel(total)[0]!r}, not 1")
    return mass / total


def _labels(alphabet) -> tuple:
    if isinstance(alphabet, int):
        return tuple(range(alphabet))
    labels = tuple(alphabet)
    if len(labels) == 0:
        raise ProbabilityError("empty alphabet")
    if len(set(labels)) != len(labels):
        raise ProbabilityError("duplicate symbols in alphabet")
    return labels


@dataclass(frozen=True, eq=False)
class FiniteDistribution:
    """Probability vector on an ordered finite alphabet."""

    alphabet: tuple
    mass: np.ndarray

    def __post_init__(self):
        alphabet = _labels(self.alphabet)
        mass = np.array(self.mass, dtype=float).reshape(-1)
        if mass.shape[0] != len(alphabet):
            raise ProbabilityError(
                f"mass has {mass.shape[0]} entries for an alphabet of {len(alphabet)}")
        object.__setattr__(self, "alphabet", alphabet)
        object.__setattr__(self, "mass", _frozen(_normalize(mass, "distribution")))

    @classmethod
    def uniform(cls, alphabet) -> "FiniteDistribution":
        alphabet = _labels(alphabet)
        return cls(alphabet, np.full(len(alphabet), 1.0 / len(alphabet)))

    @classmethod
    def point(cls, alphabet, symbol) -> "FiniteDistribution":
        alphabet = _labels(alphabet)
        mass = np.zeros(len(alphabet))
        mass[alphabet.index(symbol)] = 1.0
        return cls(alphabet, mass)

    def __len__(self):
        return len(self.alphabet)

    def prob(self, symbol) -> float:
        return float(self.mass[self.alphabet.index(symbol)])

    @property
    def support(self) -> tuple:
        return tuple(a for a, p in zip(self.alphabet, self.mass) if p > 0)


@dataclass(frozen=True, eq=False)
class JointDistribution:
    """Mass tensor over a product of named finite alphabets."""

    alphabets: tuple
    mass: np.ndarray
    names: tuple = ()

    def __post_init__(self):
        alphabets = tuple(_labels(a) for a in self.alphabets)
        mass = np.array(self.mass, dtype=float)
        shape = tuple(len(a) for a in alphabets)
        if mass.shape != shape:
            raise ProbabilityError(f"mass shape {mass.shape} does not match alphabets {shape}")
        names = tuple(self.names) or tuple(f"X{i}" for i in range(len(alphabets)))
        if len(names) != len(alphabets) or len(set(names)) != len(names):
            raise ProbabilityError("axis names must be unique, one per alphabet")
        object.__setattr__(self, "alphabets", alphabets)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "mass", _frozen(_normalize(mass, "joint distribution")))

    @property
    def ndim(self) -> int:
        return len(self.alphabets)

    def axis(self, key) -> int:
        if isinstance(key, (int, np.integer)):
            if not 0 <= key < self.ndim:
                raise ProbabilityError(f"axis {key} out of range")
            return int(key)
        try:
            return self.names.index(key)
        except ValueError:
            raise ProbabilityError(f"unknown axis {key!r}") from None

    def axes(self, keys) -> tuple:
        if isinstance(keys, (int, str, np.integer)):
            keys = (keys,)
        return tuple(self.axis(k) for k in keys)


@dataclass(frozen=True, eq=False)
class StochasticKernel:
    """Conditional law: one distribution over the outputs per conditioning tuple.

    Both alphabet fields are tuples of alphabets (an int stands for
    ``range(k)``). ``table`` has shape ``(*input sizes, *output sizes)`` and
    every slice over the trailing output axes is a probability vector.
    """

    input_alphabets: tuple
    output_alphabets: tuple
    table: np.ndarray

    def __post_init__(self):
        ins = tuple(_labels(a) for a in self.input_alphabets)
        outs = tuple(_labels(a) for a in self.output_alphabets)
        if not outs:
            raise ProbabilityError("kernel needs at least one output alphabet")
        table = np.array(self.table, dtype=float)
        shape = tuple(len(a) for a in ins) + tuple(len(a) for a in outs)
        if table.shape != shape:
            raise ProbabilityError(f"kernel table shape {table.shape} does not match {shape}")
        out_axes = tuple(range(len(ins), len(shape)))
        object.__setattr__(self, "input_alphabets", ins)
        object.__setattr__(self, "output_alphabets", outs)
        object.__setattr__(self, "table", _frozen(_normalize(table, "kernel row", axis=out_axes)))

    @property
    def output_alphabet(self) -> tuple:
        if len(self.output_alphabets) == 1:
            return self.output_alphabets[0]
        return tuple(product(*self.output_alphabets))

    @property
    def row_count(self) -> int:
        return int(np.prod([len(a) for a in self.input_alphabets], dtype=np.int64))

    def row(self, index) -> FiniteDistribution:
        if not isinstance(index, tuple):
            index = (index,)
        return FiniteDistribution(self.output_alphabet, self.table[index].reshape(-1))

    def rows(self):
        for idx in product(*(range(len(a)) for a in self.input_alphabets)):
            yield idx, self.row(idx)


# ---------------------------------------------------------------------------
# array-level helpers (used on hot paths; inputs assumed already valid)

def entropy_of(mass) -> float:
    """Entropy in bits of a nonnegative array summing to one (any shape)."""
    p = np.asarray(mass, dtype=float).reshape(-1)
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p)))


def mutual_information_of(mass, x_axes, y_axes) -> float:
    """I(X;Y) for axis groups of a joint mass array; other axes are summed out."""
    mass = np.asarray(mass, dtype=float)
    x_axes, y_axes = tuple(x_axes), tuple(y_axes)
    keep = tuple(sorted(x_axes + y_axes))
    drop = tuple(a for a in range(mass.ndim) if a not in keep)
    pxy = mass.sum(axis=drop) if drop else mass
    pos = {a: i for i, a in enumerate(keep)}
    xs = tuple(pos[a] for a in x_axes)
    ys = tuple(pos[a] for a in y_axes)
    px = pxy.sum(axis=ys, keepdims=True)
    py = pxy.sum(axis=xs, keepdims=True)
    nz = pxy > 0
    # logs taken separately so subnormal marginals cannot underflow a product
    lx = np.log2(np.broadcast_to(px, pxy.shape)[nz])
    ly = np.log2(np.broadcast_to(py, pxy.shape)[nz])
    val = np.sum(pxy[nz] * (np.log2(pxy[nz]) - lx - ly))
    return max(float(val), 0.0)


def conditional_mutual_information_of(mass, x_axes, y_axes, z_axes) -> float:
    """I(X;Y|Z) = H(XZ) + H(YZ) - H(XYZ) - H(Z) for axis groups of a mass array."""
    mass = np.asarray(mass, dtype=float)
    x_axes, y_axes, z_axes = tuple(x_axes), tuple(y_axes), tuple(z_axes)

    def h(keep):
        drop = tuple(a for a in range(mass.ndim) if a not in keep)
        return entropy_of(mass.sum(axis=drop) if drop else mass)

    val = h(x_axes + z_axes) + h(y_axes + z_axes) - h(x_axes + y_axes + z_axes)
    if z_axes:
        val -= h(z_axes)
    return max(val, 0.0)


def kl_of(p, q) -> float:
    p = np.asarray(p, dtype=float).reshape(-1)
    q = np.asarray(q, dtype=float).reshape(-1)
    nz = p > 0
    if np.any(q[nz] <= 0):
        return float("inf")
    return max(float(np.sum(p[nz] * np.log2(p[nz] / q[nz]))), 0.0)


# ---------------------------------------------------------------------------
# public operations on validated objects

def entropy(p: FiniteDistribution) -> float:
    return entropy_of(p.mass)


def kl_divergence(p: FiniteDistribution, q: FiniteDistribution) -> float:
    """D(p||q) in bits; +inf when p puts mass where q does not."""
    if p.alphabet != q.alphabet:
        raise ProbabilityError("kl_divergence: alphabet mismatch")
    return kl_of(p.mass, q.mass)


def mutual_information(joint: JointDistribution, x=0, y=1) -> float:
    """I(X;Y) in bits; x and y are axis keys (or groups of them)."""
    xs, ys = joint.axes(x), joint.axes(y)
    if set(xs) & set(ys):
        raise ProbabilityError("mutual_information: overlapping axis groups")
    return mutual_information_of(joint.mass, xs, ys)


def conditional_mutual_information(joint: JointDistribution, x=0, y=1, z=2) -> float:
    """I(X;Y|Z) in bits."""
    xs, ys, zs = joint.axes(x), joint.axes(y), joint.axes(z)
    if set(xs) & set(ys) or set(xs) & set(zs) or set(ys) & set(zs):
        raise ProbabilityError("conditional_mutual_information: overlapping axis groups")
    return conditional_mutual_information_of(joint.mass, xs, ys, zs)


def bayes_posterior(prior: FiniteDistribution, kernel: StochasticKernel, y) -> FiniteDistribution:
    """Posterior over the kernel input after observing output symbol ``y``."""
    if len(kernel.input_alphabets) != 1 or kernel.input_alphabets[0] != prior.alphabet:
        raise ProbabilityError("bayes_posterior: kernel input does not match prior alphabet")
    out = kernel.output_alphabet
    if y not in out:
        raise ProbabilityError(f"bayes_posterior: {y!r} is not an output symbol")
    column = kernel.table.reshape(len(prior), -1)[:, out.index(y)]
    weights = prior.mass * column
    total = weights.sum()
    if total <= 0:
        raise UnreachableObservation(f"unreachable observation {y!r}")
    return FiniteDistribution(prior.alphabet, weights / total)


def marginalize(joint: JointDistribution, keep: Sequence) -> JointDistribution:
    """Sum out every axis not listed in ``keep`` (axis order of ``keep`` is kept)."""
    if isinstance(keep, (int, str)):
        keep = (keep,)
    axes = joint.axes(keep)
    if not axes:
        raise ProbabilityError("marginalize: keep set is empty")
    if len(set(axes)) != len(axes):
        raise ProbabilityError("marginalize: repeated axis")
    drop = tuple(a for a in range(joint.ndim) if a not in axes)
    mass = joint.mass.sum(axis=drop) if drop else np.array(joint.mass)
    remaining = [a for a in range(joint.ndim) if a in axes]
    mass = np.transpose(mass, [remaining.index(a) for a in axes])
    return JointDistribution(tuple(joint.alphabets[a] for a in axes), mass,
                             tuple(joint.names[a] for a in axes))
