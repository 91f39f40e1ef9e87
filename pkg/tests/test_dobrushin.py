import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from transineq.dobrushin import dobrushin_continuum, dobrushin_discrete, dobrushin_empirical
from transineq.errors import DomainError
from transineq.measures import SpinGibbsSpec
from transineq.pointprocess import (
    Box,
    ContinuumGibbsSpec,
    HardCore,
    Step,
    TabulatedRadial,
    discretized_dobrushin_bound,
    uniform_grid,
)

LN2 = math.log(2)


def test_no_interaction():
    rep = dobrushin_discrete(SpinGibbsSpec(np.array([1.0, 2.0, 0.5]), np.zeros((3, 3)), 5))
    assert rep.D == 0 and np.all(rep.c == 0) and rep.satisfied


def test_ln2_pair():
    rep = dobrushin_discrete(SpinGibbsSpec.uniform(2, 1.0, LN2, 10))
    assert np.allclose(rep.c, [[0, 0.5], [0.5, 0]], atol=1e-15)
    assert rep.D == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("N,delta", [(2, 0.3), (4, 0.2), (5, 0.4)])
def test_hard_core_all_pairs(N, delta):
    rep = dobrushin_discrete(SpinGibbsSpec.uniform(N, delta, math.inf, 5))
    assert rep.D == pytest.approx((N - 1) * delta, abs=1e-15)


def test_column_sums_with_unequal_delta():
    spec = SpinGibbsSpec(np.array([1.0, 0.1]), np.array([[0, 1.0], [1.0, 0]]), 5)
    rep = dobrushin_discrete(spec)
    # c_01 = 1 (1 - e^-1) sits in column 1
    assert rep.column == 1
    assert rep.D == pytest.approx(1 - math.exp(-1))
    assert json.loads(rep.dumps())["binding_column"] == 1


def test_empirical_examples():
    spec = SpinGibbsSpec(np.array([0.8, 1.0]), np.array([[0, 0.7], [0.7, 0]]), 40)
    c = 0.8 * (1 - math.exp(-0.7))
    one = [(np.array([0, 1]), np.array([0, 0]))]
    five = [(np.array([0, 5]), np.array([0, 0]))]
    assert abs(dobrushin_empirical(spec, 0, 1, one) - c) < 1e-9
    assert abs(dobrushin_empirical(spec, 0, 1, five) - 0.8 * (1 - math.exp(-3.5)) / 5) < 1e-9
    assert dobrushin_empirical(spec, 0, 1, five) <= c
    flat = SpinGibbsSpec(np.array([0.8, 1.0]), np.zeros((2, 2)), 40)
    assert dobrushin_empirical(flat, 0, 1) == 0


def test_empirical_rejects_bad_probe():
    spec = SpinGibbsSpec.uniform(3, 0.5, 1.0, 10)
    with pytest.raises(DomainError):
        dobrushin_empirical(spec, 0, 1, [(np.array([0, 1, 1]), np.array([0, 0, 0]))])


@given(st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_empirical_below_closed_form(seed):
    rng = np.random.default_rng(seed)
    N = 3
    g = np.triu(rng.exponential(1.0, (N, N)), 1)
    spec = SpinGibbsSpec(rng.uniform(0.1, 2.0, N), g + g.T, 30)
    c = dobrushin_discrete(spec).c
    for i in range(N):
        for j in range(N):
            if i != j:
                probes = [(np.eye(N, dtype=int)[j] * k, np.zeros(N, dtype=int)) for k in range(1, 6)]
                assert dobrushin_empirical(spec, i, j, probes) <= c[i, j] + 1e-6


def test_continuum_examples():
    zero = ContinuumGibbsSpec(Box.cube(1.0, 1), 1.0)
    assert dobrushin_continuum(zero) == 0
    hc = ContinuumGibbsSpec(Box.cube(1.0, 1), 1.0, HardCore(0.25))
    assert dobrushin_continuum(hc) == pytest.approx(0.5, abs=1e-15)
    beta, r0 = 0.7, 0.3
    st2 = ContinuumGibbsSpec(Box.cube(1.0, 2), 1.0, Step(beta, r0))
    assert dobrushin_continuum(st2) == pytest.approx((1 - math.exp(-beta)) * math.pi * r0 ** 2, rel=1e-14)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_tabulated_quadrature(d):
    r = np.linspace(0, 1.0, 201)
    v = 2.0 * (1 - r) ** 2
    spec = ContinuumGibbsSpec(Box.cube(1.0, d), 1.3, TabulatedRadial(r, v))
    area = 2 * math.pi ** (d / 2) / math.gamma(d / 2)
    # 40-point Gauss-Legendre on each linear piece of the profile
    x, w = np.polynomial.legendre.leggauss(40)
    ref = 0.0
    for a, b in zip(r[:-1], r[1:]):
        s = 0.5 * (b - a) * x + 0.5 * (a + b)
        ref += 0.5 * (b - a) * np.sum(w * (1 - np.exp(-np.interp(s, r, v))) * s ** (d - 1))
    assert dobrushin_continuum(spec) == pytest.approx(1.3 * area * ref, rel=1e-8)


def test_tabulated_divergent_rejected():
    pot = TabulatedRadial(np.array([0.0, 1.0]), np.array([1.0, 0.5]))
    with pytest.raises(DomainError):
        dobrushin_continuum(ContinuumGibbsSpec(Box.cube(1.0, 1), 1.0, pot))


@pytest.mark.parametrize("d,cells", [(1, 40), (2, 24)])
def test_discretized_converges(d, cells):
    spec = ContinuumGibbsSpec(Box.cube(2.0, d), 0.4, Step(0.9, 0.5))
    D = dobrushin_continuum(spec)
    DN = discretized_dobrushin_bound(spec, uniform_grid(spec.box, cells))
    # interior cells see the whole interaction range
    assert abs(DN - D) < 0.02 * D
