"""Shared test helpers: stub RNGs, exact oracles, statistical bands."""

from __future__ import annotations

import itertools
import math

import numpy as np
import pytest


class StubRng:
    """Fake generator returning a scripted sequence of uniforms."""

    def __init__(self, values):
        self._values = list(values)
        self._pos = 0

    def random(self, size=None):
        if size is None:
            value = self._values[self._pos]
            self._pos += 1
            return value
        out = np.asarray(self._values[self._pos : self._pos + size], dtype=float)
        if out.size != size:
            raise AssertionError("stub rng ran out of scripted values")
        self._pos += size
        return out


def binomial_sigma(p: float, n: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 1e-12) / n)


def mod2_coupled_agreement_oracle(q: float, depth: int) -> float:
    """Exhaustive enumeration over the 2*depth innovation bits.

    Two parity chains share their depth-n value; each chain adds its own
    n i.i.d. Bernoulli(q) bits mod 2.  Enumerates every bit pattern with
    its exact probability; independent of the closed formula and of the
    samplers it is used to check.
    """
    agree = 0.0
    for bits in itertools.product((0, 1), repeat=2 * depth):
        prob = 1.0
        for bit in bits:
            prob *= q if bit else (1.0 - q)
        x_par = sum(bits[:depth]) % 2
        y_par = sum(bits[depth:]) % 2
        if x_par == y_par:
            agree += prob
    return agree


def point_mass_ks_oracle(x: float, target) -> float:
    """Exact sup-CDF distance between a point mass at x and a target law.

    For finite x against an atomless-on-the-line target: the empirical CDF
    jumps 0 -> 1 at x, so the finite-line sup is max(F(x), 1 - F(x)), and
    the infinity-atom comparison contributes atom_inf.  For x = infinity
    the empirical CDF is identically 0 on the line, giving 1 - atom_inf.
    """
    from rdelab import cdf_eval

    if math.isinf(x):
        return 1.0 - target.atom_inf
    f = cdf_eval(target, x)
    return max(f, 1.0 - f, target.atom_inf)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
