"""Verification harness for transportation, Laplace, concentration and
Poincare inequalities.

Exact checks evaluate both sides of an inequality on finite models and report
the signed violation lhs - rhs (positive means violated). Monte Carlo checks
compare an empirical tail frequency, through its Clopper-Pearson upper limit,
with the claimed bound.
"""
from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import deviation as dev
from .dobrushin import dobrushin_continuum, dobrushin_discrete
from .errors import DomainError, LipschitzViolation
from .measures import (
    FiniteMeasure,
    MixedPoissonSpec,
    SpinGibbsSpec,
    gibbs_exact,
    grid_states,
    kl_weights,
    mixed_poisson,
    poisson,
    required_cutoff,
)
from .pointprocess import ContinuumGibbsSpec, DiscretizationGrid, discretize, push_forward
from .transport import (
    HAMMING_SUM,
    EUCLIDEAN_1D,
    MetricSpec,
    cost_matrix,
    distance,
    grid_bounds,
    w1_grid_exact,
    w1_integer_line,
    w1_lp,
)

PASS, FAIL, INCONCLUSIVE, INAPPLICABLE = "PASS", "FAIL", "INCONCLUSIVE", "INAPPLICABLE"
EXACT_TOL = 1e-8


@dataclass
class InequalityReport:
    name: str
    method: str
    instances: int = 0
    max_violation: float = -math.inf
    min_slack: float = math.inf
    mean_slack: float = math.nan
    tolerance: float = EXACT_TOL
    verdict: str = PASS
    worst: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    timestamp: float = field(default_factory=time.time)

    def to_json(self):
        def clean(x):
            if isinstance(x, float) and not math.isfinite(x):
                return str(x)
            if isinstance(x, dict):
                return {k: clean(v) for k, v in x.items()}
            if isinstance(x, (list, tuple)):
                return [clean(v) for v in x]
            if isinstance(x, np.generic):
                return clean(x.item())
            return x

        return clean({
            "name": self.name,
            "method": self.method,
            "instances": self.instances,
            "max_violation": self.max_violation,
            "min_slack": self.min_slack,
            "mean_slack": self.mean_slack,
            "tolerance": self.tolerance,
            "verdict": self.verdict,
            "worst": self.worst,
            "details": self.details,
            "timestamp": self.timestamp,
        })

    def dumps(self, timestamp=True):
        obj = self.to_json()
        if not timestamp:
            obj.pop("timestamp")
        return json.dumps(obj, indent=2, sort_keys=True)

    def table(self):
        rows = [
            ("check", self.name),
            ("method", self.method),
            ("instances", str(self.instances)),
            ("max violation", f"{self.max_violation:.3e}"),
            ("min slack", f"{self.min_slack:.3e}"),
            ("mean slack", f"{self.mean_slack:.3e}"),
            ("tolerance", f"{self.tolerance:.1e}"),
            ("verdict", self.verdict),
        ]
        w = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{w}}  {v}" for k, v in rows)

    @property
    def passed(self):
        return self.verdict in (PASS, INCONCLUSIVE)

    def merge(self, other: "InequalityReport"):
        """Combine two sweeps of the same check (associative)."""
        n = self.instances + other.instances
        mean = (
            (np.nan_to_num(self.mean_slack) * self.instances
             + np.nan_to_num(other.mean_slack) * other.instances) / n
            if n else math.nan
        )
        worst = self.worst if self.max_violation >= other.max_violation else other.worst
        order = [PASS, INCONCLUSIVE, INAPPLICABLE, FAIL]
        verdict = max(self.verdict, other.verdict, key=order.index)
        return InequalityReport(
            self.name, self.method, n,
            max(self.max_violation, other.max_violation),
            min(self.min_slack, other.min_slack), float(mean), self.tolerance,
            verdict, worst, {**self.details, **other.details},
        )


def _finish(report: InequalityReport, viol, info=None):
    viol = np.asarray(viol, dtype=float)
    report.instances = int(viol.size)
    if viol.size:
        k = int(np.argmax(viol))
        report.max_violation = float(viol[k])
        report.min_slack = float(-viol.max())
        report.mean_slack = float(np.mean(-viol))
        report.worst = {"index": k, **(info[k] if info else {})}
    report.verdict = PASS if report.max_violation <= report.tolerance else FAIL
    report.details["violations"] = int(np.sum(viol > report.tolerance))
    return report


def inapplicable(name, reason):
    return InequalityReport(name, "exact", verdict=INAPPLICABLE, details={"reason": reason})


# --- random measures -------------------------------------------------------------


def trial_rng(seed, k):
    """Independent Philox stream for trial k; results do not depend on scheduling."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(k)])))


def random_lipschitz(C, rng, n_anchors=None):
    """A random function f on the states with |f(x) - f(y)| <= C[x, y].

    f(x) = +/- min_k (c_k + C[x, a_k]) for random anchors a_k; an infimum of
    1-Lipschitz functions is 1-Lipschitz.
    """
    n = C.shape[0]
    k = n_anchors or int(rng.integers(1, 6))
    anchors = rng.integers(0, n, size=k)
    scale = float(C.max()) or 1.0
    offs = rng.uniform(0, scale, size=k)
    f = np.min(C[:, anchors] + offs, axis=1)
    return f if rng.random() < 0.5 else -f


def random_separable_lipschitz(states, rng):
    """f(x) = sum_i g_i(x_i), each g_i 1-Lipschitz on the integers."""
    states = np.atleast_2d(states.T).T if states.ndim == 1 else states
    f = np.zeros(states.shape[0])
    for i in range(states.shape[1]):
        top = int(states[:, i].max())
        g = np.concatenate([[0.0], np.cumsum(rng.uniform(-1, 1, size=top))])
        f += g[states[:, i]]
    return f


class RandomMeasures:
    """Random probability vectors on a fixed support, around a reference mu.

    Families (chosen per trial):
      dirichlet -- symmetric Dirichlet(1) over the support;
      sparse    -- Dirichlet(1) on a random subset of the support;
      tilt      -- nu proportional to exp(lam f) mu with f random Lipschitz;
      blend     -- (1 - t) mu + t * Dirichlet draw, t log-uniform.
    """

    families = ("dirichlet", "sparse", "tilt", "blend")

    def __init__(self, mu_weights, states, lipschitz_fn):
        self.mu = np.asarray(mu_weights, dtype=float)
        self.states = states
        self.lipschitz_fn = lipschitz_fn

    def draw(self, rng, family=None):
        n = self.mu.size
        family = family or self.families[int(rng.integers(len(self.families)))]
        if family == "dirichlet":
            w = rng.dirichlet(np.ones(n))
        elif family == "sparse":
            m = int(rng.integers(1, min(n, 8) + 1))
            w = np.zeros(n)
            w[rng.choice(n, size=m, replace=False)] = rng.dirichlet(np.ones(m))
        elif family == "tilt":
            f = self.lipschitz_fn(rng)
            lam = 10 ** rng.uniform(-3, 0.7)
            e = lam * (f - f.max())
            w = self.mu * np.exp(e)
        else:
            t = 10 ** rng.uniform(-4, 0)
            w = (1 - t) * self.mu + t * rng.dirichlet(np.ones(n))
        return family, w / w.sum()


# --- W1 routes --------------------------------------------------------------------


class W1Route:
    """Exact W1 from a fixed reference measure, picking the cheapest exact method.

    line -- states on the integers with the Euclidean metric: CDF formula;
    grid -- states form a full lattice box under the Hamming metric: bounds
            first, lattice min-cost flow LP when they do not decide;
    lp   -- anything else: network simplex on the precomputed cost matrix.
    """

    def __init__(self, mu: FiniteMeasure, metric: MetricSpec, cost=None):
        self.mu = mu
        self.metric = metric
        s = mu.states
        self.shape = None
        if metric.kind == EUCLIDEAN_1D and s.ndim == 1 and np.issubdtype(s.dtype, np.integer):
            self.kind = "line"
            self.order = np.argsort(s)
            self.gaps = np.diff(s[self.order]).astype(float)
        elif metric.kind == HAMMING_SUM and s.ndim == 2 and self._is_grid(s):
            self.kind = "grid"
        else:
            self.kind = "lp"
        self._cost = cost
        self.lp_solves = 0

    def _is_grid(self, s):
        shape = tuple(int(v) + 1 for v in s.max(axis=0))
        if s.min() != 0 or int(np.prod(shape)) != s.shape[0]:
            return False
        if not np.array_equal(s, grid_states(shape)):
            return False
        self.shape = shape
        return True

    @property
    def cost(self):
        if self._cost is None:
            self._cost = cost_matrix(self.metric, self.mu.states, self.mu.states)
        return self._cost

    def exact(self, nu_w):
        if self.kind == "line":
            cdf = np.cumsum((nu_w - self.mu.weights)[self.order])[:-1]
            return float(np.dot(np.abs(cdf), self.gaps))
        if self.kind == "grid":
            self.lp_solves += 1
            return w1_grid_exact(nu_w.reshape(self.shape), self.mu.weights.reshape(self.shape)).cost
        self.lp_solves += 1
        nu = FiniteMeasure(self.mu.states, nu_w, tol=1e-9)
        return w1_lp(nu, self.mu, self.metric, cost=self.cost).cost

    def decide(self, nu_w, lhs, rhs):
        """Return (lhs(W) - rhs, W, exact) with W exact unless an upper bound
        on W already shows lhs(W) <= rhs (then the violation is an upper bound)."""
        if self.kind != "grid":
            W = self.exact(nu_w)
            return lhs(W) - rhs, W, True
        lo, hi = grid_bounds(nu_w.reshape(self.shape), self.mu.weights.reshape(self.shape))
        if hi - lo <= 1e-13 * max(1.0, hi):
            return lhs(hi) - rhs, hi, True
        if lhs(hi) <= rhs:
            return lhs(hi) - rhs, hi, False
        W = self.exact(nu_w)
        return lhs(W) - rhs, W, True


def _lipschitz_fn(route: W1Route):
    if route.kind in ("line", "grid"):
        states = route.mu.states
        C = None if route.kind == "grid" and states.shape[0] > 600 else route.cost

        def fn(rng):
            if C is None or rng.random() < 0.5:
                return random_separable_lipschitz(states, rng)
            return random_lipschitz(C, rng)
        return fn
    return lambda rng: random_lipschitz(route.cost, rng)


def _run_trials(fn, trials, seed, threads=1):
    if threads <= 1:
        return [fn(k, trial_rng(seed, k)) for k in range(trials)]
    with ThreadPoolExecutor(threads) as ex:
        return list(ex.map(lambda k: fn(k, trial_rng(seed, k)), range(trials)))


def _as_callable(alpha):
    if isinstance(alpha, dev.DeviationFunction):
        return lambda r: float(alpha(r))
    return alpha


def sweep_w1h(name, mu: FiniteMeasure, alpha, metric: MetricSpec, trials, seed,
              extra=(), threads=1, tol=EXACT_TOL, cost=None):
    """alpha(W1(nu, mu)) <= H(nu|mu) over random nu and the listed extra nu."""
    route = W1Route(mu, metric, cost)
    gen = RandomMeasures(mu.weights, mu.states, _lipschitz_fn(route))
    lhs = _as_callable(alpha)

    def one(nu_w, family):
        H = kl_weights(nu_w, mu.weights)
        v, W, exact = route.decide(nu_w, lhs, H)
        return v, {"family": family, "W1": W, "H": H, "W1_exact": exact}

    fixed = [one(np.asarray(w, dtype=float), "given") for w in extra]
    rand = _run_trials(lambda k, rng: one(*gen.draw(rng)[::-1]), trials, seed, threads)
    res = fixed + rand
    rep = InequalityReport(name, "exact", tolerance=tol)
    _finish(rep, [v for v, _ in res], [i for _, i in res])
    rep.details.update({
        "w1_route": route.kind,
        "lp_solves": route.lp_solves,
        "bound_decided": int(sum(not i["W1_exact"] for _, i in res)),
    })
    return rep


def check_w1h(mu: FiniteMeasure, alpha, metric: MetricSpec, trials, seed, extra=(), threads=1):
    """alpha(W1(mu, nu)) <= H(nu|mu) on a random-nu sweep over supp(mu)."""
    return sweep_w1h("w1h", mu, alpha, metric, trials, seed, extra, threads)


# --- Laplace bound ----------------------------------------------------------------


def _cell_poisson_table(masses, K):
    """Product of renormalized Poisson(m_i) laws on {0..K}^n as an n-d table."""
    k = np.arange(K + 1)
    table = np.ones(())
    for m in masses:
        w = stats.poisson.pmf(k, m)
        table = np.multiply.outer(table, w / w.sum())
    return table


def log_mgf(table, F, lam):
    """log E exp(lam (F - E F)) under a probability table."""
    mean = float(np.sum(table * F))
    x = lam * (F - mean)
    top = x.max()
    return float(top + np.log(np.sum(table * np.exp(x - top))))


def random_admissible(phi, K, rng):
    """Random F on {0..K}^n with |F(x + e_i) - F(x)| <= phi_i.

    F = +/- min_k (c_k + sum_i phi_i |x_i - a_ki|), an infimum of functions
    that are Lipschitz for the phi-weighted distance.
    """
    phi = np.asarray(phi, dtype=float)
    x = grid_states((K + 1,) * phi.size)
    k = int(rng.integers(1, 5))
    a = rng.integers(0, K + 1, size=(k, phi.size))
    c = rng.uniform(0, 3, size=k)
    vals = np.min(c + (np.abs(x[:, None, :] - a[None]) * phi).sum(axis=2), axis=1)
    return (vals if rng.random() < 0.5 else -vals).reshape((K + 1,) * phi.size)


def increments_within(F, phi, tol=1e-12):
    """|D_i F| <= phi_i on every lattice edge of the table."""
    return all(np.all(np.abs(np.diff(F, axis=i)) <= phi[i] + tol) for i in range(F.ndim))


def check_laplace_bound(masses, phi, lambdas, n_random=100, seed=0, K=None, tol=EXACT_TOL):
    """log E e^{lam(F - EF)} <= sum_i m_i (e^{lam phi_i} - lam phi_i - 1) for |D F| <= phi.

    The Poisson space is discretized into independent cells with intensities
    m_i and weights phi_i; expectations are exact sums over {0..K}^cells.
    F = omega(phi) attains equality. A second family checks the dual Laplace
    form log E_mu e^{lam(f - mu f)} <= h_m^*(lam) for 1-Lipschitz f on N and
    mu = Poisson(m(E)).
    """
    masses = np.asarray(masses, dtype=float)
    phi = np.asarray(phi, dtype=float)
    lambdas = np.asarray(lambdas, dtype=float)
    if np.any(phi <= 0) or np.any(masses <= 0):
        raise DomainError("cell intensities and weights must be > 0")
    if K is None:
        # the exponential tilt by lam * phi moves mass to high counts
        tilted = float(np.max(masses * np.exp(lambdas.max() * phi)))
        K = required_cutoff(tilted, 1e-16)
    table = _cell_poisson_table(masses, K)
    x = grid_states(table.shape)
    # poisson_h_conjugate(t) = e^t - t - 1
    bound = np.array([float(np.sum(masses * dev.poisson_h_conjugate(l * phi))) for l in lambdas])
    viol, info = [], []
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 1]))

    witness = (x * phi).sum(axis=1).reshape(table.shape)
    eq_err = 0.0
    for l, b in zip(lambdas, bound):
        v = log_mgf(table, witness, l)
        eq_err = max(eq_err, abs(v - b))
        viol.append(v - b)
        info.append({"F": "omega(phi)", "lambda": float(l)})

    for t in range(n_random):
        r = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), 2, t])))
        if r.random() < 0.5:
            f = r.uniform(-1, 1, size=phi.size) * phi
            F = (x * f).sum(axis=1).reshape(table.shape)
            kind = "linear"
        else:
            F = random_admissible(phi, K, r)
            kind = "inf-of-cones"
        if not increments_within(F, phi):
            raise LipschitzViolation("random F violates |D_x F| <= phi", pair=None)
        for l, b in zip(lambdas, bound):
            viol.append(log_mgf(table, F, l) - b)
            info.append({"F": kind, "trial": t, "lambda": float(l)})

    mE = float(masses.sum())
    count = poisson(mE, policy="renormalize", eps_trunc=1e-16)
    h = dev.PoissonH(mE)
    C = np.abs(count.states[:, None] - count.states[None, :]).astype(float)
    p = count.weights
    for t in range(n_random):
        r = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), 3, t])))
        f = count.states.astype(float) if t == 0 else random_lipschitz(C, r)
        for l in lambdas:
            v = log_mgf(p, f, l)
            viol.append(v - float(h.conjugate(l)))
            info.append({"F": "dual-form", "trial": t, "lambda": float(l)})

    rep = InequalityReport("laplace", "exact", tolerance=tol)
    _finish(rep, viol, info)
    rep.details.update({"cells": int(masses.size), "K": int(K), "witness_equality_error": eq_err})
    return rep


# --- concentration ----------------------------------------------------------------


def _bound_fn(alpha):
    f = _as_callable(alpha)
    return lambda r: math.exp(-f(r))


def check_concentration_exact(law: FiniteMeasure, alpha, r_grid, center=None, tol=1e-12):
    """P(F >= center + r) <= exp(-alpha(r)) for the exact law of F (a measure on R)."""
    vals = np.asarray(law.states, dtype=float)
    w = law.weights
    c = law.mean() if center is None else center
    bound = _bound_fn(alpha)
    order = np.argsort(vals)
    tail = np.cumsum(w[order][::-1])[::-1]
    viol, info = [], []
    for r in r_grid:
        k = np.searchsorted(vals[order], c + r, side="left")
        t = float(tail[k]) if k < tail.size else 0.0
        b = bound(r)
        viol.append(t - b)
        info.append({"r": float(r), "tail": t, "bound": b})
    rep = InequalityReport("concentration", "exact", tolerance=tol)
    _finish(rep, viol, info)
    rep.details["trace"] = info
    return rep


def clopper_pearson_upper(k, n, confidence=0.99):
    return float(stats.binomtest(int(k), int(n)).proportion_ci(confidence, method="exact").high)


def check_concentration_mc(samples, alpha, r_grid, center=None, confidence=0.99, strict=False):
    """Empirical tail P(F > center + r) against exp(-alpha(r)).

    A point fails when the Clopper-Pearson upper limit of the tail exceeds the
    bound. Points whose bound is below 10/n are not resolved by the sample and
    are marked inconclusive rather than passed or failed.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    c = float(np.mean(x)) if center is None else center
    bound = _bound_fn(alpha)
    viol, info = [], []
    n_inc = 0
    for r in r_grid:
        k = n - np.searchsorted(x, c + r, side="left" if not strict else "right")
        b = bound(r)
        up = clopper_pearson_upper(k, n, confidence)
        resolved = b >= 10.0 / n
        n_inc += not resolved
        info.append({"r": float(r), "tail": k / n, "upper": up, "bound": b, "resolved": resolved})
        if resolved:
            viol.append(up - b)
    rep = InequalityReport("concentration", f"monte-carlo({confidence:.0%})", tolerance=0.0)
    _finish(rep, viol, [i for i in info if i["resolved"]])
    rep.instances = len(info)
    rep.details.update({"n_samples": int(n), "center": c, "inconclusive_points": n_inc, "trace": info})
    if not viol:
        rep.verdict = INCONCLUSIVE
    return rep


def poissonian_bound(N, d, M, D, z):
    """r -> exp(-((2N)^d (1-D) r / (2M)) log(1 + (1-D) r / (z M)))."""
    def alpha(r):
        return (2 * N) ** d * (1 - D) * r / (2 * M) * math.log1p((1 - D) * r / (z * M))
    return alpha


def write_trace_csv(report: InequalityReport, fh):
    """Per-r trace (r, tail, bound[, upper]) of a concentration report as CSV."""
    trace = report.details.get("trace", [])
    if not trace:
        return
    keys = [k for k in ("r", "tail", "upper", "bound") if k in trace[0]]
    fh.write(",".join(keys) + "\n")
    for row in trace:
        fh.write(",".join(repr(float(row[k])) for k in keys) + "\n")


# --- mixture bound ----------------------------------------------------------------


def check_mixture_bound(spec: MixedPoissonSpec, trials, seed, extra=(), threads=1, r_max=20.0):
    """h_{a + a^2/4}(W1(nu, mu)) <= H(nu|mu) for the mixed Poisson mu.

    Also checks the two facts the bound rests on: W1(P(l), P(l')) = |l - l'|
    on the mixing grid, and h_{a + a^2/4} <= h_a pointwise on a grid (so the
    degenerate mixture is a weaker case of the pure Poisson bound).
    """
    a = spec.a
    mu = mixed_poisson(spec, policy="renormalize")
    K = int(mu.states.max())
    alpha = dev.PoissonH(a + a * a / 4)
    lam = np.asarray(spec.sigma.states, dtype=float)
    lip_err = 0.0
    for l1 in lam:
        for l2 in lam:
            w = w1_integer_line(poisson(float(l1), K, "renormalize", math.inf),
                                poisson(float(l2), K, "renormalize", math.inf))
            lip_err = max(lip_err, abs(w - abs(l1 - l2)))
    rg = np.linspace(0, r_max, 2001)
    dom = float(np.max(alpha(rg) - dev.PoissonH(a)(rg)))
    rep = sweep_w1h("mixture", mu, alpha, MetricSpec.euclidean(), trials, seed, extra, threads)
    rep.details.update({
        "poisson_w1_lipschitz_error": lip_err,
        "weaker_than_h_a_max_gap": dom,
        "K": K,
    })
    if lip_err > 1e-8 or dom > 1e-12:
        rep.verdict = FAIL
    return rep


# --- Poincare ---------------------------------------------------------------------


def random_tables(shape, rng, n_states_hint=None):
    """Random test functions on a lattice box; several shapes of function."""
    kind = int(rng.integers(4))
    x = grid_states(shape)
    if kind == 0:
        F = rng.normal(size=x.shape[0])
    elif kind == 1:
        F = random_separable_lipschitz(x, rng)
    elif kind == 2:
        c = rng.normal(size=(3, x.shape[1]))
        F = (x @ c[0]) + 0.1 * (x @ c[1]) ** 2 + np.sin(x @ c[2])
    else:
        F = (rng.random(x.shape[0]) < rng.uniform(0.05, 0.5)).astype(float)
    return F.reshape(shape)


def check_poincare(spec: SpinGibbsSpec, n_functions, seed, extra=(), threads=1, tol=EXACT_TOL):
    """Var_P(F) <= (max_i delta_i / (1 - D)) sum_i E_P (D_i F)^2.

    F is a table on {0..K+1}^N so that the unit increment D_i F is defined on
    the whole box {0..K}^N where the Gibbs law lives.
    """
    rep_d = dobrushin_discrete(spec)
    if not rep_d.satisfied:
        return inapplicable("poincare", f"D = {rep_d.D} >= 1")
    P = gibbs_exact(spec).table
    const = float(spec.delta.max()) / (1 - rep_d.D)
    K, N = spec.K, spec.N
    big = (K + 2,) * N
    inner = tuple(slice(0, K + 1) for _ in range(N))

    def one(F):
        Fb = F[inner]
        mean = float(np.sum(P * Fb))
        var = float(np.sum(P * (Fb - mean) ** 2))
        energy = 0.0
        for i in range(N):
            sl = list(inner)
            sl[i] = slice(1, K + 2)
            energy += float(np.sum(P * (F[tuple(sl)] - Fb) ** 2))
        return var - const * energy, {"var": var, "dirichlet": energy}

    res = [one(np.asarray(F, dtype=float)) for F in extra]
    res += _run_trials(lambda k, rng: one(random_tables(big, rng)), n_functions, seed, threads)
    rep = InequalityReport("poincare", "exact", tolerance=tol)
    _finish(rep, [v for v, _ in res], [i for _, i in res])
    rep.details.update({"D": rep_d.D, "constant": const, "defect": gibbs_exact(spec).defect})
    return rep


# --- Gibbs transportation inequalities ----------------------------------------------


def theorem34_constant(spec: SpinGibbsSpec):
    return float(np.sum(spec.delta + spec.delta ** 2 / 4))


def check_theorem34(spec: SpinGibbsSpec, trials, seed, extra=(), threads=1):
    """h_c((1 - D) W1(Q, P)) <= H(Q|P) under the Hamming metric,
    c = sum_i (delta_i + delta_i^2 / 4), P the exact Gibbs law on {0..K}^N."""
    rep_d = dobrushin_discrete(spec)
    if not rep_d.satisfied:
        return inapplicable("theorem34", f"D = {rep_d.D} >= 1")
    ex = gibbs_exact(spec)
    c = theorem34_constant(spec)
    h = dev.PoissonH(c)
    D = rep_d.D
    rep = sweep_w1h(
        "theorem34", ex.measure, lambda W: float(h((1 - D) * W)), MetricSpec.hamming(),
        trials, seed, extra, threads,
    )
    rep.details.update({"c": c, "D": D, "defect": ex.defect, "states": ex.measure.weights.size})
    return rep


def check_theorem41(spec: ContinuumGibbsSpec, grid: DiscretizationGrid, trials, seed,
                    K=None, extra=(), threads=1, isometry_pairs=50):
    """h_{z|E|}((1 - D) W1(Q, P^N)) <= H(Q|P^N) with the continuum constant D.

    P^N is the pushforward of the exact discretized Gibbs law; W1 under the
    total-variation metric on configurations is computed through the isometry
    with the Hamming metric on count vectors, which is checked on random pairs.
    """
    try:
        D = dobrushin_continuum(spec)
    except DomainError as exc:
        return inapplicable("theorem41", str(exc))
    if D >= 1:
        return inapplicable("theorem41", f"D = {D} >= 1")
    spin = discretize(spec, grid, K)
    ex = gibbs_exact(spin)
    states = ex.measure.states
    rng = trial_rng(seed, -1 % (2 ** 32))
    iso = 0.0
    tv = MetricSpec.config_tv()
    for _ in range(isometry_pairs):
        i, j = rng.integers(0, states.shape[0], size=2)
        d1 = distance(tv, push_forward(grid, states[i]), push_forward(grid, states[j]))
        iso = max(iso, abs(d1 - float(np.abs(states[i] - states[j]).sum())))
    h = dev.PoissonH(spec.mean_count)
    rep = sweep_w1h(
        "theorem41", ex.measure, lambda W: float(h((1 - D) * W)), MetricSpec.hamming(),
        trials, seed, extra, threads,
    )
    rep.details.update({
        "D": D, "z|E|": spec.mean_count, "cells": grid.n_cells, "K": spin.K,
        "defect": ex.defect, "isometry_error": iso,
        "discrete_D": dobrushin_discrete(spin).D,
    })
    if iso > 0:
        rep.verdict = FAIL
    return rep
