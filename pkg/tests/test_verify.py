import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from transineq import deviation as dev
from transineq.measures import (
    FiniteMeasure,
    MixedPoissonSpec,
    SpinGibbsSpec,
    gibbs_exact,
    grid_states,
    poisson,
)
from transineq.pointprocess import Box, ContinuumGibbsSpec, Step, ZeroPotential, uniform_grid
from transineq.transport import MetricSpec, cost_matrix, w1_lp
from transineq.verify import (
    FAIL,
    INAPPLICABLE,
    INCONCLUSIVE,
    PASS,
    InequalityReport,
    RandomMeasures,
    W1Route,
    check_concentration_exact,
    check_concentration_mc,
    check_laplace_bound,
    check_mixture_bound,
    check_poincare,
    check_theorem34,
    check_theorem41,
    check_w1h,
    clopper_pearson_upper,
    poissonian_bound,
    random_admissible,
    random_lipschitz,
    theorem34_constant,
    trial_rng,
    write_trace_csv,
)

LN2 = math.log(2)


# --- building blocks ------------------------------------------------------------


@given(seed=st.integers(0, 2 ** 31))
@settings(max_examples=30, deadline=None)
def test_random_lipschitz_is_lipschitz(seed):
    rng = np.random.default_rng(seed)
    x = grid_states((4, 3))
    C = cost_matrix(MetricSpec.hamming(), x, x)
    f = random_lipschitz(C, rng)
    assert np.all(np.abs(f[:, None] - f[None, :]) <= C + 1e-12)


@given(seed=st.integers(0, 2 ** 31))
@settings(max_examples=30, deadline=None)
def test_random_admissible_increments(seed):
    phi = np.array([0.3, 1.2])
    F = random_admissible(phi, 6, np.random.default_rng(seed))
    for i in range(2):
        assert np.all(np.abs(np.diff(F, axis=i)) <= phi[i] + 1e-12)


@pytest.mark.parametrize("family", RandomMeasures.families)
def test_random_measures_are_probabilities(family):
    mu = poisson(1.5, 30)
    gen = RandomMeasures(mu.weights, mu.states, lambda rng: mu.states.astype(float))
    _, w = gen.draw(np.random.default_rng(0), family)
    assert np.all(w >= 0) and abs(w.sum() - 1) < 1e-12


def test_trial_streams_independent_of_order():
    a = [trial_rng(7, k).random() for k in range(5)]
    b = [trial_rng(7, k).random() for k in reversed(range(5))][::-1]
    assert a == b and len(set(a)) == 5


def test_grid_route_agrees_with_lp():
    spec = SpinGibbsSpec.uniform(2, 0.5, LN2, 5)
    mu = gibbs_exact(spec).measure
    route = W1Route(mu, MetricSpec.hamming())
    assert route.kind == "grid"
    rng = np.random.default_rng(3)
    for _ in range(10):
        w = rng.dirichlet(np.ones(mu.weights.size))
        ref = w1_lp(FiniteMeasure(mu.states, w), mu, MetricSpec.hamming()).cost
        assert abs(route.exact(w) - ref) < 1e-9
        # a deciding call never reports a W below the exact value
        v, W, exact = route.decide(w, lambda r: 0.0, 1.0)
        assert W >= ref - 1e-9


def test_clopper_pearson_upper_matches_beta_quantile():
    n = 1000
    assert clopper_pearson_upper(0, n) == pytest.approx(1 - 0.005 ** (1 / n), rel=1e-9)
    k = 37
    assert clopper_pearson_upper(k, n) == pytest.approx(stats.beta.ppf(0.995, k + 1, n - k), rel=1e-9)


# --- reports ----------------------------------------------------------------------


def test_report_merge_is_associative():
    def rep(v, name="x"):
        r = InequalityReport(name, "exact", instances=2, max_violation=v, min_slack=-v, mean_slack=1.0)
        r.verdict = FAIL if v > 1e-8 else PASS
        return r

    a, b, c = rep(-0.5), rep(0.1), rep(-0.2)
    l, r = a.merge(b).merge(c), a.merge(b.merge(c))
    assert (l.instances, l.max_violation, l.min_slack, l.verdict) == (r.instances, r.max_violation, r.min_slack, r.verdict)
    assert l.verdict == FAIL and l.instances == 6


def test_report_serialization():
    r = InequalityReport("x", "exact")
    obj = json.loads(r.dumps(timestamp=False))
    assert "timestamp" not in obj and obj["min_slack"] == "inf"
    assert "verdict" in r.table()


# --- W1H ------------------------------------------------------------------------


def test_w1h_poisson_pair_is_sharp():
    mu = poisson(1.0, 60, "renormalize")
    nu = poisson(2.0, 60, "renormalize")
    rep = check_w1h(mu, dev.PoissonH(1.0), MetricSpec.euclidean(), trials=200, seed=1, extra=[nu.weights])
    assert rep.verdict == PASS
    # the extra measure attains equality, so the sweep maximum sits at 0
    assert abs(rep.max_violation) < 1e-8
    assert rep.worst["family"] == "given"


def test_w1h_identity():
    mu = poisson(1.0, 40, "renormalize")
    rep = check_w1h(mu, dev.PoissonH(1.0), MetricSpec.euclidean(), trials=0, seed=0, extra=[mu.weights])
    assert rep.max_violation == 0 and rep.verdict == PASS


def test_w1h_detects_false_bound():
    mu = poisson(1.0, 40, "renormalize")
    rep = check_w1h(mu, dev.PoissonH(0.5), MetricSpec.euclidean(), trials=200, seed=0,
                    extra=[poisson(2.0, 40, "renormalize").weights])
    assert rep.verdict == FAIL and rep.details["violations"] >= 1


def test_w1h_gibbs_pair():
    spec = SpinGibbsSpec(np.array([1.0, 1.0]), np.array([[0, LN2], [LN2, 0]]), 15)
    assert theorem34_constant(spec) == 2.5
    mu = gibbs_exact(spec).measure
    h = dev.PoissonH(2.5)
    rep = check_w1h(mu, lambda W: float(h(0.5 * W)), MetricSpec.hamming(), trials=10_000, seed=2)
    assert rep.verdict == PASS and rep.instances == 10_000


def test_w1h_thread_count_does_not_matter():
    mu = poisson(2.0, 30, "renormalize")
    a = check_w1h(mu, dev.PoissonH(2.0), MetricSpec.euclidean(), 300, 5, threads=1)
    b = check_w1h(mu, dev.PoissonH(2.0), MetricSpec.euclidean(), 300, 5, threads=3)
    assert a.dumps(timestamp=False) == b.dumps(timestamp=False)


# --- Laplace --------------------------------------------------------------------


def test_laplace_count_functional_is_tight():
    lam0 = 1.7
    rep = check_laplace_bound([lam0], [1.0], [0.0, 0.5, 1.0, 2.0], n_random=5, seed=0)
    assert rep.verdict == PASS
    assert rep.details["witness_equality_error"] < 1e-8


def test_laplace_two_cells_witness():
    rep = check_laplace_bound([0.4, 0.9], [0.5, 1.3], np.linspace(0.1, 2.0, 20), n_random=20, seed=4)
    assert rep.verdict == PASS
    assert rep.details["witness_equality_error"] < 1e-8


def test_laplace_zero_lambda():
    rep = check_laplace_bound([0.5], [1.0], [0.0], n_random=3, seed=0)
    assert abs(rep.max_violation) < 1e-15


# --- concentration ----------------------------------------------------------------


def test_concentration_exact_poisson_tail():
    law = poisson(10.0, policy="renormalize", eps_trunc=1e-16)
    rep = check_concentration_exact(law, dev.PoissonH(10.0), np.arange(0, 11), center=10.0)
    assert rep.verdict == PASS
    tr = rep.details["trace"]
    assert tr[0]["bound"] == 1.0
    # oracle: survival function of Poisson(10)
    for row in tr[1:]:
        assert row["tail"] == pytest.approx(stats.poisson.sf(10 + row["r"] - 1, 10.0), rel=1e-10)


def test_concentration_exact_detects_violation():
    law = poisson(10.0, policy="renormalize", eps_trunc=1e-16)
    rep = check_concentration_exact(law, dev.PoissonH(1.0), np.arange(1, 11), center=10.0)
    assert rep.verdict == FAIL


def test_concentration_mc_inconclusive_when_unresolved():
    x = np.random.default_rng(0).normal(size=1000)
    rep = check_concentration_mc(x, lambda r: 50.0 * r, [1.0, 2.0])
    assert rep.verdict == INCONCLUSIVE
    assert rep.details["inconclusive_points"] == 2


def test_concentration_mc_pass_and_fail():
    x = np.random.default_rng(0).normal(size=200_000)
    good = check_concentration_mc(x, lambda r: r * r / 2, np.linspace(0.1, 3, 30), center=0.0)
    assert good.verdict == PASS
    bad = check_concentration_mc(x, lambda r: 2 * r * r, np.linspace(0.5, 2, 10), center=0.0)
    assert bad.verdict == FAIL
    buf = io.StringIO()
    write_trace_csv(good, buf)
    assert buf.getvalue().splitlines()[0] == "r,tail,upper,bound"


def test_poissonian_bound_constants():
    alpha = poissonian_bound(1, 1, 1.0, 0.5, 1.0)
    r = 1.3
    assert alpha(r) == pytest.approx(2 * 0.5 * r / 2 * math.log(1 + 0.5 * r), rel=1e-15)
    assert alpha(0.0) == 0


# --- mixture --------------------------------------------------------------------


def test_mixture_degenerate_sigma():
    a = 1.5
    spec = MixedPoissonSpec(a, FiniteMeasure(np.array([a]), np.array([1.0])))
    rep = check_mixture_bound(spec, trials=1000, seed=0)
    assert rep.verdict == PASS
    assert rep.details["weaker_than_h_a_max_gap"] <= 0


def test_mixture_uniform_sigma():
    sig = FiniteMeasure(np.array([0, 0.5, 1, 1.5, 2.0]), np.full(5, 0.2))
    spec = MixedPoissonSpec(2.0, sig)
    mu_w = check_mixture_bound(spec, trials=10_000, seed=3)
    assert mu_w.verdict == PASS and mu_w.instances == 10_000
    assert mu_w.details["poisson_w1_lipschitz_error"] < 1e-8


def test_mixture_identity():
    sig = FiniteMeasure(np.array([0.0, 1.0]), np.array([0.3, 0.7]))
    spec = MixedPoissonSpec(1.0, sig)
    from transineq.measures import mixed_poisson

    mu = mixed_poisson(spec, policy="renormalize")
    rep = check_mixture_bound(spec, trials=0, seed=0, extra=[mu.weights])
    assert rep.max_violation == 0


# --- Poincare -------------------------------------------------------------------


def test_poincare_constant_function():
    spec = SpinGibbsSpec.uniform(2, 1.0, LN2, 8)
    rep = check_poincare(spec, 0, 0, extra=[np.full((10, 10), 3.0)])
    # the mean of a constant is exact only up to rounding
    assert abs(rep.max_violation) < 1e-25


def test_poincare_single_site():
    spec = SpinGibbsSpec(np.array([1.7]), np.zeros((1, 1)), 30)
    rep = check_poincare(spec, 300, seed=1)
    assert rep.verdict == PASS


def test_poincare_pair():
    rep = check_poincare(SpinGibbsSpec.uniform(2, 1.0, LN2, 12), 1000, seed=2)
    assert rep.verdict == PASS and rep.instances == 1000


def test_poincare_inapplicable():
    rep = check_poincare(SpinGibbsSpec.uniform(3, 1.0, 5.0, 4), 10, seed=0)
    assert rep.verdict == INAPPLICABLE


# --- Gibbs transportation inequality --------------------------------------------


def test_gibbs_inequality_identity():
    spec = SpinGibbsSpec.uniform(2, 0.5, 1.0, 8)
    P = gibbs_exact(spec).measure
    rep = check_theorem34(spec, 0, 0, extra=[P.weights])
    assert rep.max_violation == 0


def test_gibbs_inequality_product_case():
    spec = SpinGibbsSpec(np.array([0.4, 0.8]), np.zeros((2, 2)), 12)
    rep = check_theorem34(spec, 2000, seed=5)
    assert rep.verdict == PASS and rep.details["D"] == 0


def test_gibbs_inequality_three_sites():
    spec = SpinGibbsSpec.uniform(3, 0.3, LN2, 8)
    rep = check_theorem34(spec, 10_000, seed=6)
    # column sum: two neighbours of 0.3 (1 - 1/2) each
    assert rep.details["D"] == pytest.approx(0.3)
    assert rep.verdict == PASS
    assert math.isfinite(rep.min_slack)


def test_gibbs_inequality_inapplicable():
    rep = check_theorem34(SpinGibbsSpec.uniform(3, 1.0, 5.0, 4), 10, seed=0)
    assert rep.verdict == INAPPLICABLE


# --- continuum inequality on discretized models ------------------------------------


def test_continuum_free_single_cell_is_sharp():
    box = Box.cube(0.5, 1)
    spec = ContinuumGibbsSpec(box, 1.0, ZeroPotential())
    grid = uniform_grid(box, 1)
    q = poisson(2.0, 60, "renormalize").weights
    rep = check_theorem41(spec, grid, 100, seed=0, K=60, extra=[q])
    assert rep.verdict == PASS
    assert abs(rep.max_violation) < 1e-8


def test_continuum_two_cells():
    box = Box.cube(0.5, 1)
    spec = ContinuumGibbsSpec(box, 1.0, Step(0.5, 0.4))
    rep = check_theorem41(spec, uniform_grid(box, 2), 10_000, seed=8)
    assert rep.details["D"] == pytest.approx((1 - math.exp(-0.5)) * 0.8)
    assert rep.details["isometry_error"] == 0
    assert rep.verdict == PASS


def test_continuum_identity():
    box = Box.cube(0.5, 1)
    spec = ContinuumGibbsSpec(box, 1.0, Step(0.5, 0.4))
    grid = uniform_grid(box, 2)
    from transineq.pointprocess import discretize

    P = gibbs_exact(discretize(spec, grid)).measure
    rep = check_theorem41(spec, grid, 0, seed=0, extra=[P.weights])
    assert rep.max_violation == 0


def test_continuum_inapplicable():
    box = Box.cube(0.5, 1)
    spec = ContinuumGibbsSpec(box, 5.0, Step(3.0, 0.5))
    assert check_theorem41(spec, uniform_grid(box, 2), 10, seed=0).verdict == INAPPLICABLE
