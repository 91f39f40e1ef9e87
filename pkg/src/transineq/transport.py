"""Ground metrics and exact L1-Wasserstein distances.

Three exact routes are provided:

* ``w1_integer_line`` -- CDF formula for measures on the integers;
* ``w1_lp``           -- network simplex on the bipartite transport problem,
                         with primal plan and dual potentials;
* ``w1_grid``         -- min-cost flow on the lattice graph of a box
                         {0..K_1} x ... x {0..K_N}, for the sum-of-coordinates
                         (Hamming) metric, whose shortest paths are lattice paths.
"""
from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .errors import DomainError, LipschitzViolation
from .measures import FiniteMeasure, align
from .netsimplex import transport_simplex
from .pointprocess import Configuration, difference_operator

EUCLIDEAN_1D = "euclidean1d"
HAMMING_SUM = "hamming_sum"
CONFIG_TV = "config_tv"
CONFIG_WEIGHTED = "config_weighted"


@dataclass(frozen=True)
class MetricSpec:
    kind: str
    phi: object = None
    bound: float = math.inf

    def __post_init__(self):
        if self.kind not in (EUCLIDEAN_1D, HAMMING_SUM, CONFIG_TV, CONFIG_WEIGHTED):
            raise DomainError(f"unknown metric {self.kind!r}")
        if self.kind == CONFIG_WEIGHTED and self.phi is None:
            raise DomainError("weighted configuration metric needs a weight function")

    @classmethod
    def euclidean(cls):
        return cls(EUCLIDEAN_1D)

    @classmethod
    def hamming(cls):
        return cls(HAMMING_SUM)

    @classmethod
    def config_tv(cls):
        return cls(CONFIG_TV)

    @classmethod
    def config_weighted(cls, phi, bound=math.inf):
        return cls(CONFIG_WEIGHTED, phi, bound)

    def weight(self, pts):
        w = np.asarray(self.phi(np.atleast_2d(pts)), dtype=float).reshape(-1)
        if np.any(~(w > 0)):
            raise DomainError("weight function must be > 0 (zero gives a pseudo-metric)")
        if np.any(w > self.bound):
            raise DomainError(f"weight function exceeds its bound M = {self.bound}")
        return w


def _config_distance(m: MetricSpec, x: Configuration, y: Configuration):
    if x.box.d != y.box.d:
        raise DomainError("configurations in different dimensions")
    cx, cy = x.counts(), y.counts()
    keys = sorted(set(cx) | set(cy))
    if not keys:
        return 0.0
    diff = np.array([abs(cx.get(k, 0) - cy.get(k, 0)) for k in keys], dtype=float)
    if m.kind == CONFIG_TV:
        return float(diff.sum())
    return float(np.dot(m.weight(np.asarray(keys)), diff))


def distance(m: MetricSpec, x, y) -> float:
    """Ground distance between two states of the same space."""
    if m.kind in (CONFIG_TV, CONFIG_WEIGHTED):
        if not (isinstance(x, Configuration) and isinstance(y, Configuration)):
            raise DomainError("configuration metric needs Configuration states")
        return _config_distance(m, x, y)
    if isinstance(x, Configuration) or isinstance(y, Configuration):
        raise DomainError("numeric metric applied to configurations")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if m.kind == EUCLIDEAN_1D:
        if x.size != 1 or y.size != 1:
            raise DomainError("Euclidean1D distance takes scalars")
        return float(abs(x.item() - y.item()))
    if x.shape != y.shape:
        raise DomainError("Hamming distance between vectors of different length")
    return float(np.abs(x - y).sum())


def cost_matrix(m: MetricSpec, xs, ys):
    """Pairwise distances between two lists of states (rows of arrays)."""
    if m.kind == EUCLIDEAN_1D:
        a = np.asarray(xs, dtype=float).reshape(-1)
        b = np.asarray(ys, dtype=float).reshape(-1)
        return np.abs(a[:, None] - b[None, :])
    if m.kind == HAMMING_SUM:
        a = np.asarray(xs, dtype=float)
        b = np.asarray(ys, dtype=float)
        a = a.reshape(a.shape[0], -1)
        b = b.reshape(b.shape[0], -1)
        if a.shape[1] != b.shape[1]:
            raise DomainError("states of different dimension")
        return np.abs(a[:, None, :] - b[None, :, :]).sum(axis=2)
    return np.array([[distance(m, x, y) for y in ys] for x in xs], dtype=float)


# --- one-dimensional formula ---------------------------------------------------------


def w1_integer_line(nu: FiniteMeasure, mu: FiniteMeasure) -> float:
    """sum_k |F_nu(k) - F_mu(k)| for measures on the integers."""
    for meas in (nu, mu):
        if meas.states.ndim != 1 or not np.issubdtype(meas.states.dtype, np.integer):
            raise DomainError("w1_integer_line needs measures on the integers")
    lo = int(min(nu.states.min(), mu.states.min()))
    hi = int(max(nu.states.max(), mu.states.max()))
    diff = np.zeros(hi - lo + 1)
    np.add.at(diff, nu.states - lo, nu.weights)
    np.add.at(diff, mu.states - lo, -mu.weights)
    return float(np.abs(np.cumsum(diff)[:-1]).sum())


def w1_line_weights(p, q):
    """W1 between two weight vectors on {0, 1, ..., n-1}."""
    return float(np.abs(np.cumsum(np.asarray(p) - np.asarray(q))[:-1]).sum())


# --- bipartite LP ---------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CouplingPlan:
    """Plan pi over support(mu) x support(nu): rows sum to mu, columns to nu."""

    pi: np.ndarray
    cost: float
    row_states: np.ndarray
    col_states: np.ndarray

    def check(self, mu_weights, nu_weights, atol=1e-10):
        return bool(
            np.all(self.pi >= -atol)
            and np.allclose(self.pi.sum(axis=1), mu_weights, atol=atol)
            and np.allclose(self.pi.sum(axis=0), nu_weights, atol=atol)
        )

    def to_csv(self):
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["i", "j", "mass"])
        for i, j in zip(*np.nonzero(self.pi > 0)):
            wr.writerow([int(i), int(j), repr(float(self.pi[i, j]))])
        return buf.getvalue()


@dataclass(frozen=True, eq=False)
class DualPotentials:
    """F on support(nu), G on support(mu) with F(x) - G(y) <= d(x, y)."""

    F: np.ndarray
    G: np.ndarray
    nu_states: np.ndarray
    mu_states: np.ndarray

    def to_csv(self):
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["side", "state", "value"])
        for side, states, vals in (("F", self.nu_states, self.F), ("G", self.mu_states, self.G)):
            for s, v in zip(states, vals):
                state = " ".join(map(str, np.atleast_1d(s).tolist()))
                wr.writerow([side, state, repr(float(v))])
        return buf.getvalue()


@dataclass(frozen=True, eq=False)
class W1Result:
    cost: float
    plan: CouplingPlan
    duals: DualPotentials

    def dual_value(self, nu_weights, mu_weights):
        return float(np.dot(self.duals.F, nu_weights) - np.dot(self.duals.G, mu_weights))


def w1_lp(nu: FiniteMeasure, mu: FiniteMeasure, m: MetricSpec, cap=(256, 256), cost=None) -> W1Result:
    """Exact W1 by network simplex, with optimal plan and dual certificate.

    ``cost`` may supply a precomputed |supp mu| x |supp nu| cost matrix (needed
    for measures indexing configurations).
    """
    if len(mu) > cap[0] or len(nu) > cap[1]:
        raise DomainError(f"support sizes {len(mu)} x {len(nu)} exceed the cap {cap}")
    C = cost_matrix(m, mu.states, nu.states) if cost is None else np.asarray(cost, dtype=float)
    a, b = mu.weights, nu.weights
    # zero-weight atoms are dropped from the solve and priced afterwards
    rows = np.flatnonzero(a > 0)
    cols = np.flatnonzero(b > 0)
    res = transport_simplex(a[rows], b[cols], C[np.ix_(rows, cols)])
    pi = np.zeros(C.shape)
    pi[np.ix_(rows, cols)] = res.plan
    u = np.full(a.size, np.nan)
    v = np.full(b.size, np.nan)
    u[rows] = res.u
    v[cols] = res.v
    for j in np.flatnonzero(b == 0):
        v[j] = np.min(C[rows, j] - u[rows])
    for i in np.flatnonzero(a == 0):
        u[i] = np.min(C[i, :] - v)
    plan = CouplingPlan(pi, res.cost, mu.states, nu.states)
    duals = DualPotentials(v, -u, nu.states, mu.states)
    return W1Result(res.cost, plan, duals)


def monotone_plan(nu: FiniteMeasure, mu: FiniteMeasure):
    """Quantile (monotone) coupling of two measures on the line, as (cost, pi)."""
    a_states = np.asarray(mu.states, dtype=float)
    b_states = np.asarray(nu.states, dtype=float)
    ia = np.argsort(a_states)
    ib = np.argsort(b_states)
    ra = mu.weights[ia].astype(float).copy()
    rb = nu.weights[ib].astype(float).copy()
    pi = np.zeros((ra.size, rb.size))
    i = j = 0
    while i < ra.size and j < rb.size:
        t = min(ra[i], rb[j])
        pi[ia[i], ib[j]] += t
        ra[i] -= t
        rb[j] -= t
        if ra[i] <= rb[j]:
            i += 1
        else:
            j += 1
    cost = float(np.sum(pi * np.abs(a_states[:, None] - b_states[None, :])))
    return cost, pi


def poisson_shift_coupling(lam, lam_prime, K):
    """Law of (X, X + Y), X ~ P(lam), Y ~ P(lam' - lam) independent, cut at K.

    Returns (cost, pi) with pi[x, x'] = P(X = x) P(Y = x' - x) on {0..K}^2.
    """
    from scipy import stats

    if lam_prime < lam:
        raise DomainError("need lam' >= lam")
    k = np.arange(K + 1)
    px = stats.poisson.pmf(k, lam)
    py = stats.poisson.pmf(k, lam_prime - lam)
    pi = np.zeros((K + 1, K + 1))
    for x in range(K + 1):
        pi[x, x:] = px[x] * py[: K + 1 - x]
    cost = float(np.sum(pi * np.abs(k[:, None] - k[None, :])))
    return cost, pi


# --- lattice (Hamming) route ------------------------------------------------------------


def marginal_lower_bound(diff):
    """sum over axes of the 1-d W1 of the axis marginals: a lower bound."""
    total = 0.0
    for ax in range(diff.ndim):
        other = tuple(k for k in range(diff.ndim) if k != ax)
        marg = diff.sum(axis=other) if other else diff
        total += float(np.abs(np.cumsum(marg)[:-1]).sum())
    return total


def _comb_cost(diff, order):
    """Min-cost flow on a comb spanning tree of the lattice (an upper bound).

    Axes are collapsed in ``order``: along the current axis every line is
    joined at a common index c (chosen optimally), then summed onto it.
    """
    a = diff
    total = 0.0
    for ax in order:
        n = a.shape[ax]
        if n > 1:
            pre = np.cumsum(a, axis=ax)
            # edge k <-> k+1 carries prefix(k) if the joint is right of it,
            # suffix(k+1) = total - prefix(k) if left of it
            tot = np.take(pre, [n - 1], axis=ax)
            left = np.abs(np.take(pre, range(n - 1), axis=ax))
            right = np.abs(tot - np.take(pre, range(n - 1), axis=ax))
            sum_axes = tuple(k for k in range(a.ndim) if k != ax)
            e_left = left.sum(axis=sum_axes) if sum_axes else left
            e_right = right.sum(axis=sum_axes) if sum_axes else right
            # joint at c: edges k < c use prefix, edges k >= c use suffix
            cost_c = np.concatenate([[0.0], np.cumsum(e_left)]) + np.concatenate(
                [np.cumsum(e_right[::-1])[::-1], [0.0]]
            )
            total += float(cost_c.min())
        a = a.sum(axis=ax, keepdims=True)
    return total


def comb_upper_bound(diff):
    """Best comb-tree flow over all axis orders."""
    return min(_comb_cost(diff, order) for order in itertools.permutations(range(diff.ndim)))


def grid_bounds(q, p):
    """(lower, upper) bounds on W1 under the Hamming metric between two tables."""
    diff = np.asarray(q, dtype=float) - np.asarray(p, dtype=float)
    return marginal_lower_bound(diff), comb_upper_bound(diff)


_INCIDENCE_CACHE = {}


def _lattice_incidence(shape):
    key = tuple(shape)
    if key in _INCIDENCE_CACHE:
        return _INCIDENCE_CACHE[key]
    idx = np.arange(int(np.prod(shape))).reshape(shape)
    tails, heads = [], []
    for ax in range(len(shape)):
        if shape[ax] < 2:
            continue
        t = np.take(idx, range(shape[ax] - 1), axis=ax).ravel()
        h = np.take(idx, range(1, shape[ax]), axis=ax).ravel()
        tails.append(t)
        heads.append(h)
    tails = np.concatenate(tails) if tails else np.zeros(0, dtype=int)
    heads = np.concatenate(heads) if heads else np.zeros(0, dtype=int)
    n_nodes = idx.size
    n_edges = tails.size
    # forward arc t->h and backward arc h->t for every lattice edge
    rows = np.concatenate([tails, heads, heads, tails])
    cols = np.concatenate([np.arange(n_edges), np.arange(n_edges),
                           n_edges + np.arange(n_edges), n_edges + np.arange(n_edges)])
    vals = np.concatenate([np.ones(n_edges), -np.ones(n_edges), np.ones(n_edges), -np.ones(n_edges)])
    A = sparse.csr_matrix((vals, (rows, cols)), shape=(n_nodes, 2 * n_edges))
    _INCIDENCE_CACHE[key] = (A, tails, heads)
    return _INCIDENCE_CACHE[key]


@dataclass(frozen=True, eq=False)
class GridW1:
    cost: float
    potential: np.ndarray
    flow: np.ndarray


def w1_grid_exact(q, p) -> GridW1:
    """Exact W1 under the Hamming metric between two tables on a lattice box.

    Solves the min-cost flow on the lattice graph (unit edge costs) with the
    HiGHS dual simplex. The node duals give a 1-Lipschitz potential f with
    sum f (q - p) equal to the cost.
    """
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    if q.shape != p.shape:
        raise DomainError("tables must have the same shape")
    diff = (q - p).ravel()
    if q.size == 1:
        return GridW1(0.0, np.zeros(q.shape), np.zeros(0))
    A, _, _ = _lattice_incidence(q.shape)
    diff = diff - diff.mean()
    res = linprog(
        np.ones(A.shape[1]), A_eq=A, b_eq=diff, bounds=(0, None), method="highs-ds",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if res.status != 0:
        raise RuntimeError(f"lattice flow LP failed: {res.message}")
    pot = np.asarray(res.eqlin.marginals).reshape(q.shape)
    return GridW1(float(res.fun), pot - pot.flat[0], res.x)


def w1_grid(q, p, decide=None) -> float:
    """W1 under the Hamming metric between two tables on {0..K_1} x ... x {0..K_N}.

    The marginal lower bound and comb upper bound are computed first; when
    they coincide (always in dimension one) no LP is solved.
    """
    lo, hi = grid_bounds(q, p)
    if hi - lo <= 1e-13 * max(1.0, hi):
        return hi
    return w1_grid_exact(q, p).cost


# --- duality checks ------------------------------------------------------------------


def _lipschitz_scan(m, states, f_vals, tol=1e-12):
    C = cost_matrix(m, states, states)
    gap = np.abs(f_vals[:, None] - f_vals[None, :]) - C
    k = int(np.argmax(gap))
    i, j = divmod(k, len(f_vals))
    if gap[i, j] > tol * max(1.0, float(C[i, j])):
        return i, j
    return None


def dual_lipschitz_bound(nu: FiniteMeasure, mu: FiniteMeasure, m: MetricSpec, f) -> float:
    """sum f dnu - sum f dmu for a 1-Lipschitz f (a lower bound on W1).

    ``f`` is a callable on single states or an array aligned with the union
    support of nu and mu.
    """
    a, b, states = align(nu, mu)
    if callable(f):
        vals = np.array([float(f(s)) for s in states])
    else:
        vals = np.asarray(f, dtype=float)
    bad = _lipschitz_scan(m, states, vals)
    if bad is not None:
        i, j = bad
        raise LipschitzViolation(
            f"|f(x) - f(y)| > d(x, y) at x={states[i]}, y={states[j]}", pair=(states[i], states[j])
        )
    return float(np.dot(vals, a) - np.dot(vals, b))


@dataclass(frozen=True)
class LipschitzVerdict:
    passed: bool
    violations: list
    n_checked: int


def lipschitz_check_config(F, phi, probes, pairs=(), tol=1e-12) -> LipschitzVerdict:
    """Check |D_x F(omega)| <= phi(x) on probes and |F(w) - F(w')| <= d_phi(w, w') on pairs."""
    violations = []
    metric = MetricSpec.config_weighted(phi)
    for omega, x in probes:
        dx = difference_operator(F, x, omega)
        bound = float(np.asarray(phi(np.atleast_2d(x))).reshape(-1)[0])
        if abs(dx) > bound + tol:
            violations.append(("increment", omega, x, dx, bound))
    for w1, w2 in pairs:
        gap = abs(F(w1) - F(w2))
        d = distance(metric, w1, w2)
        if gap > d + tol:
            violations.append(("pair", w1, w2, gap, d))
    return LipschitzVerdict(not violations, violations, len(probes) + len(pairs))
