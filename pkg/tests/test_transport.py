import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from transineq.errors import DomainError, LipschitzViolation
from transineq.measures import FiniteMeasure, grid_states, poisson
from transineq.netsimplex import transport_simplex
from transineq.pointprocess import Box, Configuration, push_forward, uniform_grid
from transineq.transport import (
    MetricSpec,
    cost_matrix,
    distance,
    dual_lipschitz_bound,
    grid_bounds,
    lipschitz_check_config,
    monotone_plan,
    poisson_shift_coupling,
    w1_grid,
    w1_grid_exact,
    w1_integer_line,
    w1_lp,
)

BOX = Box.cube(1.0, 1)


def lp_oracle(a, b, C):
    """Transport LP solved by HiGHS on the dense formulation."""
    m, n = C.shape
    A = np.zeros((m + n, m * n))
    for i in range(m):
        A[i, i * n:(i + 1) * n] = 1
    for j in range(n):
        A[m + j, j::n] = 1
    res = linprog(C.ravel(), A_eq=A, b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs")
    return res.fun


def random_measure(rng, states):
    w = rng.dirichlet(np.ones(len(states)))
    return FiniteMeasure(states, w)


# --- metrics -------------------------------------------------------------------------


def test_config_tv_examples():
    x, y = np.array([0.1]), np.array([0.5])
    w = Configuration(BOX, np.array([x, y]), np.array([1, 2]))
    w2 = Configuration(BOX, np.array([y]), np.array([1]))
    tv = MetricSpec.config_tv()
    assert distance(tv, w, w) == 0
    assert distance(tv, w, w2) == 2


def test_weighted_one_equals_tv():
    rng = np.random.default_rng(0)
    tv = MetricSpec.config_tv()
    one = MetricSpec.config_weighted(lambda p: np.ones(len(p)), bound=1.0)
    pts = rng.uniform(-1, 1, (6, 1))
    for _ in range(50):
        m1, m2 = rng.integers(0, 3, 6), rng.integers(0, 3, 6)
        c1 = Configuration.from_occurrences(BOX, np.repeat(pts, m1, axis=0))
        c2 = Configuration.from_occurrences(BOX, np.repeat(pts, m2, axis=0))
        assert distance(one, c1, c2) == distance(tv, c1, c2) == np.abs(m1 - m2).sum()


def test_weighted_rejects_zero_or_unbounded():
    zero = MetricSpec.config_weighted(lambda p: np.zeros(len(p)))
    big = MetricSpec.config_weighted(lambda p: 3 * np.ones(len(p)), bound=2.0)
    c1 = Configuration.from_occurrences(BOX, np.array([[0.2]]))
    c2 = Configuration.empty(BOX)
    for m in (zero, big):
        with pytest.raises(DomainError):
            distance(m, c1, c2)


def test_mismatched_spaces():
    with pytest.raises(DomainError):
        distance(MetricSpec.hamming(), [1, 2], [1, 2, 3])
    with pytest.raises(DomainError):
        distance(MetricSpec.config_tv(), Configuration.empty(BOX), [0])


@given(st.lists(st.integers(0, 5), min_size=9, max_size=9))
def test_triangle_and_symmetry_hamming(v):
    x, y, z = np.array(v[:3]), np.array(v[3:6]), np.array(v[6:])
    m = MetricSpec.hamming()
    assert distance(m, x, y) == distance(m, y, x)
    assert distance(m, x, z) <= distance(m, x, y) + distance(m, y, z)


@given(st.lists(st.integers(0, 3), min_size=12, max_size=12))
def test_triangle_config(v):
    pts = np.array([[-0.5], [0.1], [0.7], [0.9]])
    cs = [Configuration.from_occurrences(BOX, np.repeat(pts, v[4 * k:4 * k + 4], axis=0)) for k in range(3)]
    m = MetricSpec.config_weighted(lambda p: 1.5 + np.sin(p[:, 0]), bound=2.5)
    d = lambda a, b: distance(m, a, b)
    assert abs(d(cs[0], cs[1]) - d(cs[1], cs[0])) < 1e-12
    assert d(cs[0], cs[2]) <= d(cs[0], cs[1]) + d(cs[1], cs[2]) + 1e-12


def test_isometry_push_forward():
    rng = np.random.default_rng(3)
    grid = uniform_grid(Box.cube(1.0, 2), 3)
    tv = MetricSpec.config_tv()
    for _ in range(100):
        n, m = rng.integers(0, 4, 9), rng.integers(0, 4, 9)
        assert distance(tv, push_forward(grid, n), push_forward(grid, m)) == np.abs(n - m).sum()


# --- W1 on the line ---------------------------------------------------------------


def test_w1_line_examples():
    assert w1_integer_line(FiniteMeasure.point_mass(0), FiniteMeasure.point_mass(5)) == 5
    half = FiniteMeasure(np.array([0, 1]), np.array([0.5, 0.5]))
    assert w1_integer_line(half, FiniteMeasure.point_mass(0)) == 0.5
    nu, mu = poisson(2.0, 60, "renormalize"), poisson(1.0, 60, "renormalize")
    assert abs(w1_integer_line(nu, mu) - 1) < 1e-9


def test_w1_lp_matches_line_formula():
    rng = np.random.default_rng(1)
    for _ in range(100):
        s1 = np.sort(rng.choice(15, size=rng.integers(1, 10), replace=False))
        s2 = np.sort(rng.choice(15, size=rng.integers(1, 10), replace=False))
        nu, mu = random_measure(rng, s1), random_measure(rng, s2)
        assert abs(w1_lp(nu, mu, MetricSpec.euclidean()).cost - w1_integer_line(nu, mu)) < 1e-8


def test_w1_lp_identity_plan():
    mu = poisson(1.5, 20)
    res = w1_lp(mu, mu, MetricSpec.euclidean())
    assert res.cost == pytest.approx(0, abs=1e-15)
    assert np.allclose(res.plan.pi, np.diag(mu.weights), atol=1e-15)


@pytest.mark.parametrize("seed", range(10))
def test_w1_lp_primal_dual_certificate(seed):
    rng = np.random.default_rng(seed)
    states = grid_states((4, 3))
    nu, mu = random_measure(rng, states[rng.permutation(12)[:8]]), random_measure(rng, states)
    m = MetricSpec.hamming()
    res = w1_lp(nu, mu, m)
    assert res.plan.check(mu.weights, nu.weights)
    C = cost_matrix(m, nu.states, mu.states)
    F, G = res.duals.F, res.duals.G
    assert np.all(F[:, None] - G[None, :] <= C + 1e-9)
    assert abs(res.dual_value(nu.weights, mu.weights) - res.cost) < 1e-8
    assert abs(res.cost - lp_oracle(mu.weights, nu.weights, C.T)) < 1e-8


def test_w1_lp_cap():
    mu = FiniteMeasure(np.arange(300), np.full(300, 1 / 300))
    with pytest.raises(DomainError):
        w1_lp(mu, mu, MetricSpec.euclidean())


def test_w1_lp_plan_csv():
    nu, mu = poisson(2.0, 20), poisson(1.0, 20)
    res = w1_lp(nu, mu, MetricSpec.euclidean())
    lines = res.plan.to_csv().strip().splitlines()
    assert lines[0] == "i,j,mass"
    assert abs(sum(float(l.split(",")[2]) for l in lines[1:]) - 1) < 1e-12
    assert res.duals.to_csv().startswith("side,state,value")


@given(st.integers(0, 10_000))
@settings(max_examples=30, deadline=None)
def test_w1_triangle_and_mean_bound(seed):
    rng = np.random.default_rng(seed)
    s = np.arange(12)
    a, b, c = (random_measure(rng, s) for _ in range(3))
    m = MetricSpec.euclidean()
    W = lambda x, y: w1_lp(x, y, m).cost
    assert W(a, c) <= W(a, b) + W(b, c) + 1e-8
    assert W(a, b) >= abs(a.mean() - b.mean()) - 1e-10


def test_netsimplex_against_highs():
    rng = np.random.default_rng(7)
    for _ in range(20):
        m, n = rng.integers(2, 25, 2)
        a, b = rng.dirichlet(np.ones(m)), rng.dirichlet(np.ones(n))
        C = rng.integers(0, 10, (m, n)).astype(float)  # integer costs invite degeneracy
        res = transport_simplex(a, b, C)
        assert abs(res.cost - lp_oracle(a, b, C)) < 1e-10
        assert np.all(res.u[:, None] + res.v[None, :] <= C + 1e-10)


# --- Poisson couplings -------------------------------------------------------------------


@pytest.mark.parametrize("lam,lam2", [(0.5, 1.0), (1.0, 2.0), (0.2, 4.5)])
def test_shift_coupling_optimal(lam, lam2):
    K = 50
    cost, pi = poisson_shift_coupling(lam, lam2, K)
    nu, mu = poisson(lam2, K, "renormalize", math.inf), poisson(lam, K, "renormalize", math.inf)
    assert abs(cost - (lam2 - lam)) < 1e-9
    assert abs(cost - w1_lp(nu, mu, MetricSpec.euclidean()).cost) < 1e-8
    mcost, _ = monotone_plan(nu, mu)
    assert abs(mcost - w1_lp(nu, mu, MetricSpec.euclidean()).cost) < 1e-8


# --- lattice route -------------------------------------------------------------------


@pytest.mark.parametrize("shape", [(5,), (3, 4), (3, 3, 2)])
def test_grid_bounds_sandwich_and_exact(shape):
    rng = np.random.default_rng(len(shape))
    states = grid_states(shape)
    m = MetricSpec.hamming()
    for _ in range(10):
        q, p = rng.dirichlet(np.ones(len(states))), rng.dirichlet(np.ones(len(states)))
        ref = w1_lp(FiniteMeasure(states, q), FiniteMeasure(states, p), m).cost
        lo, hi = grid_bounds(q.reshape(shape), p.reshape(shape))
        ex = w1_grid_exact(q.reshape(shape), p.reshape(shape))
        assert lo - 1e-12 <= ref <= hi + 1e-12
        assert abs(ex.cost - ref) < 1e-8
        assert abs(w1_grid(q.reshape(shape), p.reshape(shape)) - ref) < 1e-8
        pot = ex.potential
        assert abs(np.sum(pot * (q - p).reshape(shape)) - ex.cost) < 1e-8
        for ax in range(len(shape)):
            assert np.all(np.abs(np.diff(pot, axis=ax)) <= 1 + 1e-9)


def test_grid_marginal_bound_not_tight():
    q = np.array([[0.5, 0.0], [0.0, 0.5]])
    p = np.array([[0.0, 0.5], [0.5, 0.0]])
    lo, hi = grid_bounds(q, p)
    assert lo == 0 and w1_grid(q, p) == pytest.approx(1.0)


# --- duality checks ---------------------------------------------------------------


def test_dual_bound_examples():
    nu, mu = poisson(2.0, 60, "renormalize"), poisson(1.0, 60, "renormalize")
    m = MetricSpec.euclidean()
    assert dual_lipschitz_bound(nu, mu, m, lambda x: 3.0) == pytest.approx(0, abs=1e-15)
    assert abs(dual_lipschitz_bound(nu, mu, m, lambda x: float(x)) - w1_integer_line(nu, mu)) < 1e-9
    with pytest.raises(LipschitzViolation):
        dual_lipschitz_bound(nu, mu, m, lambda x: 2.0 * x)


@given(st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_dual_bound_below_w1(seed):
    rng = np.random.default_rng(seed)
    s = np.arange(10)
    nu, mu = random_measure(rng, s), random_measure(rng, s)
    f = np.concatenate([[0], np.cumsum(rng.uniform(-1, 1, 9))])
    assert dual_lipschitz_bound(nu, mu, MetricSpec.euclidean(), f) <= w1_integer_line(nu, mu) + 1e-8


def _probes(rng, n=40):
    pts = rng.uniform(-1, 1, (n, 4, 1))
    out = []
    for k in range(n):
        omega = Configuration.from_occurrences(BOX, pts[k, : rng.integers(0, 4)])
        out.append((omega, rng.uniform(-1, 1, 1)))
    return out


def test_lipschitz_check_config_examples():
    rng = np.random.default_rng(0)
    probes = _probes(rng)
    pairs = [(a, b) for (a, _), (b, _) in zip(probes[:-1], probes[1:])]
    one = lambda p: np.ones(len(np.atleast_2d(p)))
    phi = lambda p: 1.0 + 0.5 * np.abs(np.atleast_2d(p)[:, 0])
    f = lambda p: np.cos(3 * np.atleast_2d(p)[:, 0])  # |f| <= 1 <= phi
    good = lipschitz_check_config(lambda w: w.integrate(f), phi, probes, pairs)
    assert good.passed
    bad = lipschitz_check_config(lambda w: 2.0 * w.count, one, probes, pairs)
    assert not bad.passed and abs(bad.violations[0][3]) == 2
    capped = lipschitz_check_config(lambda w: min(w.count, 10), one, probes, pairs)
    assert capped.passed
