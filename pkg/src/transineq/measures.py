"""Finite-support probability measures, truncated Poisson laws, the Poisson
spin Gibbs measure on {0..K}^N, mixed Poisson laws and relative entropy.

Interaction entries may be ``math.inf``; the conventions e^{-inf} = 0 and
0 * inf = 0 are applied explicitly wherever products with an interaction occur.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

from .errors import DomainError, StateBudgetError, TruncationError

DEFAULT_EPS_TRUNC = 1e-12
DEFAULT_STATE_BUDGET = 2 ** 24


@dataclass(frozen=True, eq=False)
class FiniteMeasure:
    """A probability vector on an ordered list of distinct states.

    ``states`` is a numeric array of shape (n,) (states on N or R) or (n, d)
    (integer vectors, one row per state).
    """

    states: np.ndarray
    weights: np.ndarray
    tol: float = field(default=1e-12, repr=False)

    def __post_init__(self):
        s = np.asarray(self.states)
        w = np.asarray(self.weights, dtype=float)
        if s.ndim not in (1, 2) or s.shape[0] != w.shape[0] or w.ndim != 1:
            raise DomainError("states and weights must have matching leading dimension")
        if w.size == 0:
            raise DomainError("empty measure")
        if np.any(~np.isfinite(w)) or np.any(w < 0):
            raise DomainError("weights must be finite and non-negative")
        if abs(math.fsum(w) - 1.0) > self.tol:
            raise DomainError(f"weights sum to {math.fsum(w)!r}, not 1")
        n_unique = np.unique(s, axis=0).shape[0]
        if n_unique != s.shape[0]:
            raise DomainError("support entries must be distinct")
        s.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "states", s)
        object.__setattr__(self, "weights", w)

    @classmethod
    def point_mass(cls, state):
        s = np.asarray(state)
        return cls(s.reshape(1, -1) if s.ndim else s.reshape(1), np.ones(1))

    @classmethod
    def from_dict(cls, mapping):
        keys = list(mapping)
        return cls(np.asarray(keys), np.asarray([mapping[k] for k in keys], dtype=float))

    def __len__(self):
        return self.weights.size

    @property
    def dim(self):
        return 1 if self.states.ndim == 1 else self.states.shape[1]

    def keys(self):
        if self.states.ndim == 1:
            return [s.item() for s in self.states]
        return [tuple(row.tolist()) for row in self.states]

    def as_dict(self):
        return dict(zip(self.keys(), self.weights.tolist()))

    def mean(self):
        return np.tensordot(self.weights, self.states.astype(float), axes=(0, 0))

    def expect(self, values):
        return float(np.dot(self.weights, np.asarray(values, dtype=float)))

    def weight_of(self, state):
        return self.as_dict().get(_key(state), 0.0)

    def close_to(self, other, atol=1e-12):
        a, b, _ = align(self, other)
        return bool(np.all(np.abs(a - b) <= atol))

    # --- serialization -------------------------------------------------
    def to_json(self):
        return {"states": self.states.tolist(), "weights": self.weights.tolist()}

    @classmethod
    def from_json(cls, obj):
        if isinstance(obj, str):
            obj = json.loads(obj)
        return cls(np.asarray(obj["states"]), np.asarray(obj["weights"], dtype=float))

    def to_csv(self):
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["state", "weight"])
        for k, w in zip(self.keys(), self.weights):
            state = " ".join(map(str, k)) if isinstance(k, tuple) else str(k)
            wr.writerow([state, repr(float(w))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text):
        rows = list(csv.reader(io.StringIO(text)))
        if rows and rows[0] and rows[0][0] == "state":
            rows = rows[1:]
        states, weights = [], []
        for state, w in rows:
            parts = [_num(p) for p in state.split()]
            states.append(parts[0] if len(parts) == 1 else parts)
            weights.append(float(w))
        return cls(np.asarray(states), np.asarray(weights))


def _num(text):
    try:
        return int(text)
    except ValueError:
        return float(text)


def _key(state):
    s = np.asarray(state)
    return s.item() if s.ndim == 0 else tuple(s.tolist())


def align(nu: FiniteMeasure, mu: FiniteMeasure):
    """Weights of nu and mu on the union of their supports.

    Returns (nu_weights, mu_weights, union_states).
    """
    if nu.states.ndim != mu.states.ndim or nu.dim != mu.dim:
        raise DomainError("measures live on different spaces")
    if nu.states.shape == mu.states.shape and np.array_equal(nu.states, mu.states):
        return nu.weights, mu.weights, nu.states
    union = np.unique(np.concatenate([nu.states, mu.states]), axis=0)
    index = {k: i for i, k in enumerate(_keys_of(union))}
    a = np.zeros(len(index))
    b = np.zeros(len(index))
    a[[index[k] for k in nu.keys()]] = nu.weights
    b[[index[k] for k in mu.keys()]] = mu.weights
    return a, b, union


def _keys_of(states):
    if states.ndim == 1:
        return [s.item() for s in states]
    return [tuple(r.tolist()) for r in states]


def kl_weights(q, p):
    """H(q|p) for aligned weight arrays; +inf if q charges a p-null state."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    # kl_div terms are individually >= 0, so the sum never rounds below zero
    return float(np.sum(special.kl_div(q, p)))


def relative_entropy(nu: FiniteMeasure, mu: FiniteMeasure) -> float:
    """H(nu|mu) = sum nu log(nu/mu); +inf unless nu << mu."""
    a, b, _ = align(nu, mu)
    return kl_weights(a, b)


# --- Poisson ---------------------------------------------------------------

def poisson_tail(lam, K):
    """P(X > K) for X ~ Poisson(lam)."""
    if lam == 0:
        return 0.0
    return float(stats.poisson.sf(K, lam))


def required_cutoff(lam, eps=DEFAULT_EPS_TRUNC):
    """Smallest K with P(X > K) < eps for X ~ Poisson(lam).

    A Chernoff bound P(X >= k) <= exp(-lam h((k - lam)/lam)) gives a safe
    starting point, which is then lowered by direct tail evaluation.
    """
    if lam < 0:
        raise DomainError("Poisson parameter must be >= 0")
    if lam == 0:
        return 0
    k = max(int(math.ceil(lam)) + 1, 1)
    while lam * float(_h((k - lam) / lam)) < -math.log(eps):
        k = int(k * 1.25) + 1
    # here P(X >= k) < eps, so K = k - 1 is admissible
    K = k - 1
    while K > 0 and poisson_tail(lam, K - 1) < eps:
        K -= 1
    return K


def _h(r):
    return (1.0 + r) * math.log1p(r) - r


@dataclass(frozen=True)
class TruncatedPoisson:
    """Poisson(lam) cut at K; the tail is lumped at K or renormalized away."""

    lam: float
    K: int | None = None
    policy: str = "lump"
    eps_trunc: float = DEFAULT_EPS_TRUNC

    def __post_init__(self):
        if not self.lam >= 0:
            raise DomainError(f"Poisson parameter must be >= 0, got {self.lam}")
        if self.policy not in ("lump", "renormalize"):
            raise DomainError(f"unknown truncation policy {self.policy!r}")
        if self.K is not None and self.K < 0:
            raise DomainError("K must be >= 0")

    @property
    def cutoff(self):
        return required_cutoff(self.lam, self.eps_trunc) if self.K is None else self.K

    def weights(self):
        K = self.cutoff
        tail = poisson_tail(self.lam, K)
        if tail >= self.eps_trunc:
            raise TruncationError(
                f"P(X > {K}) = {tail:.3g} for lambda={self.lam}; "
                f"need K >= {required_cutoff(self.lam, self.eps_trunc)}",
                required_K=required_cutoff(self.lam, self.eps_trunc),
            )
        return truncated_poisson_weights(self.lam, K, self.policy)


def truncated_poisson_weights(lam, K, policy="lump"):
    k = np.arange(K + 1)
    if lam == 0:
        w = np.zeros(K + 1)
        w[0] = 1.0
        return w
    w = stats.poisson.pmf(k, lam)
    if policy == "lump":
        w[K] = 0.0
        w[K] = max(0.0, 1.0 - math.fsum(w))
        return w
    return w / math.fsum(w)


def poisson_pmf(spec: TruncatedPoisson) -> FiniteMeasure:
    w = spec.weights()
    return FiniteMeasure(np.arange(w.size), w)


def poisson(lam, K=None, policy="lump", eps_trunc=DEFAULT_EPS_TRUNC) -> FiniteMeasure:
    """Shorthand for ``poisson_pmf(TruncatedPoisson(...))``."""
    return poisson_pmf(TruncatedPoisson(lam, K, policy, eps_trunc))


# --- spin Gibbs measure --------------------------------------------------

def _parse_inf(x):
    if isinstance(x, str):
        if x.strip().lower() in ("inf", "+inf", "infinity"):
            return math.inf
        raise DomainError(f"cannot parse {x!r} as a number")
    if x is None:
        return math.inf
    return float(x)


def _dump_inf(x):
    return "inf" if math.isinf(x) else float(x)


def interaction_energy_terms(gamma, n_i, n_j):
    """gamma * n_i * n_j with 0 * inf = 0."""
    prod = np.multiply(n_i, n_j)
    with np.errstate(invalid="ignore"):
        return np.where(prod == 0, 0.0, gamma * prod)


@dataclass(frozen=True, eq=False)
class SpinGibbsSpec:
    """Poisson spins on N sites with pair interaction gamma, cut at K per site."""

    delta: np.ndarray
    gamma: np.ndarray
    K: int

    def __post_init__(self):
        d = np.asarray(self.delta, dtype=float)
        g = np.asarray(self.gamma, dtype=float)
        N = d.size
        if d.ndim != 1 or N < 1:
            raise DomainError("delta must be a non-empty vector")
        if np.any(~(d > 0)) or np.any(~np.isfinite(d)):
            raise DomainError("delta_i must be finite and > 0")
        if g.shape != (N, N):
            raise DomainError(f"gamma must be {N}x{N}")
        if np.any(np.isnan(g)) or np.any(g < 0):
            raise DomainError("gamma must be non-negative (inf allowed)")
        if not np.array_equal(g, g.T):
            raise DomainError("gamma must be symmetric")
        if np.any(np.diag(g) != 0):
            raise DomainError("gamma must have zero diagonal")
        if int(self.K) < 0:
            raise DomainError("K must be >= 0")
        object.__setattr__(self, "delta", d)
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "K", int(self.K))

    @property
    def N(self):
        return self.delta.size

    @property
    def shape(self):
        return (self.K + 1,) * self.N

    @property
    def n_states(self):
        return (self.K + 1) ** self.N

    @classmethod
    def uniform(cls, N, delta, gamma, K):
        g = np.full((N, N), float(gamma))
        np.fill_diagonal(g, 0.0)
        return cls(np.full(N, float(delta)), g, K)

    def to_json(self):
        return {
            "N": self.N,
            "delta": self.delta.tolist(),
            "gamma": [[_dump_inf(x) for x in row] for row in self.gamma],
            "K": self.K,
        }

    @classmethod
    def from_json(cls, obj):
        if isinstance(obj, str):
            obj = json.loads(obj)
        try:
            delta = np.asarray(obj["delta"], dtype=float)
            gamma = np.asarray([[_parse_inf(x) for x in row] for row in obj["gamma"]])
            K = int(obj["K"])
        except (KeyError, TypeError) as exc:
            raise DomainError(f"bad spin Gibbs spec: {exc}") from exc
        if "N" in obj and int(obj["N"]) != delta.size:
            raise DomainError("N does not match len(delta)")
        return cls(delta, gamma, K)


def grid_states(shape):
    """All states of {0..K_1} x ... x {0..K_N} in row-major order, one per row."""
    return np.indices(shape).reshape(len(shape), -1).T


@dataclass(frozen=True, eq=False)
class ExactGibbs:
    """Exact Gibbs law on the box, as a flat measure and as an N-d table."""

    measure: FiniteMeasure
    table: np.ndarray
    defect: float


def gibbs_log_weights(spec: SpinGibbsSpec):
    """Unnormalized log-weights on {0..K}^N, Poisson factors normalized over N."""
    K, N = spec.K, spec.N
    x = np.arange(K + 1)
    logw = np.zeros(spec.shape)
    for i in range(N):
        shape = [1] * N
        shape[i] = K + 1
        logw = logw + stats.poisson.logpmf(x, spec.delta[i]).reshape(shape)
    for i in range(N):
        for j in range(i + 1, N):
            if spec.gamma[i, j] == 0:
                continue
            si = [1] * N
            sj = [1] * N
            si[i] = K + 1
            sj[j] = K + 1
            logw = logw - interaction_energy_terms(
                spec.gamma[i, j], x.reshape(si), x.reshape(sj)
            )
    return logw


def gibbs_exact(spec: SpinGibbsSpec, state_budget=DEFAULT_STATE_BUDGET) -> ExactGibbs:
    """Normalized Gibbs weights over {0..K}^N (row-major), with truncation defect.

    The defect bounds (unnormalized mass outside the box) / (mass inside):
    interactions are non-negative so the outside mass is at most
    sum_i P(delta_i)(X > K).
    """
    if spec.n_states > state_budget:
        raise StateBudgetError(
            f"{spec.n_states} states exceed the budget of {state_budget}; "
            "use the MCMC sampler instead"
        )
    logw = gibbs_log_weights(spec)
    logZ = special.logsumexp(logw)
    table = np.exp(logw - logZ)
    outside = sum(poisson_tail(d, spec.K) for d in spec.delta)
    defect = outside / math.exp(logZ)
    flat = table.ravel()
    measure = FiniteMeasure(grid_states(spec.shape), flat / flat.sum(), tol=1e-10)
    return ExactGibbs(measure, table, defect)


def conditional_parameter(spec: SpinGibbsSpec, i, x):
    """delta_i exp(-sum_{j != i} gamma_ij x_j), with e^{-inf} = 0."""
    x = np.asarray(x)
    g = np.delete(spec.gamma[i], i)
    xs = np.delete(x, i)
    energy = float(np.sum(interaction_energy_terms(g, xs, 1)))
    return spec.delta[i] * math.exp(-energy) if math.isfinite(energy) else 0.0


def conditional_at_site(spec: SpinGibbsSpec, i, x) -> TruncatedPoisson:
    """Law of x_i given the other sites, for the Gibbs measure restricted to the box.

    Restricting to {0..K}^N conditions each single-site Poisson on {0..K}, so
    the returned law uses the renormalize policy and no tail guard.
    """
    x = np.asarray(x)
    if x.shape != (spec.N,) or np.any(x < 0) or np.any(x > spec.K):
        raise DomainError("x must lie in {0..K}^N")
    lam = conditional_parameter(spec, i, x)
    return TruncatedPoisson(lam, spec.K, "renormalize", eps_trunc=math.inf)


# --- mixed Poisson ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MixedPoissonSpec:
    """Mixture of Poisson(lam) over lam ~ sigma, sigma supported in [0, a]."""

    a: float
    sigma: FiniteMeasure

    def __post_init__(self):
        if not self.a > 0:
            raise DomainError("a must be > 0")
        lam = np.asarray(self.sigma.states, dtype=float)
        if lam.ndim != 1:
            raise DomainError("sigma must live on the real line")
        if np.any(lam < 0) or np.any(lam > self.a):
            raise DomainError(f"sigma has grid points outside [0, {self.a}]")

    def to_json(self):
        return {"a": self.a, "sigma": self.sigma.to_json()}

    @classmethod
    def from_json(cls, obj):
        if isinstance(obj, str):
            obj = json.loads(obj)
        sig = obj["sigma"]
        return cls(
            float(obj["a"]),
            FiniteMeasure(np.asarray(sig["states"], dtype=float), np.asarray(sig["weights"])),
        )


def mixed_poisson(spec: MixedPoissonSpec, K=None, policy="lump", eps_trunc=DEFAULT_EPS_TRUNC):
    """sum_lam sigma(lam) Poisson(lam), all components cut at a common K."""
    lam = np.asarray(spec.sigma.states, dtype=float)
    if K is None:
        K = required_cutoff(float(lam.max()), eps_trunc)
    w = np.zeros(K + 1)
    for l, s in zip(lam, spec.sigma.weights):
        if s == 0:
            continue
        w += s * TruncatedPoisson(float(l), K, policy, eps_trunc).weights()
    return FiniteMeasure(np.arange(K + 1), w / math.fsum(w))


def product_measure(*factors: FiniteMeasure) -> FiniteMeasure:
    """Product of measures on N, as a measure on N^len(factors) in row-major order."""
    table = np.ones(())
    for f in factors:
        table = np.multiply.outer(table, f.weights)
    states = np.stack(
        np.meshgrid(*[f.states for f in factors], indexing="ij"), axis=-1
    ).reshape(-1, len(factors))
    return FiniteMeasure(states, table.ravel(), tol=1e-10)
