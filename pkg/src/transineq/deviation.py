"""Deviation functions, their semi-Legendre conjugates and the mixture combination.

A deviation function is convex, non-decreasing on [0, inf) and vanishes at 0.
Three concrete kinds are provided:

* ``PoissonH(c)``   h_c(r) = c h(r/c),  h(r) = (1+r) log(1+r) - r
* ``Quadratic(a)``  r -> 2 r^2 / a^2
* ``Tabulated``     piecewise-linear interpolation of (r, alpha(r)) pairs

All evaluation methods accept scalars or numpy arrays.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConjugateRangeError, DomainError

__all__ = [
    "DeviationFunction",
    "PoissonH",
    "Quadratic",
    "Tabulated",
    "poisson_h",
    "poisson_h_conjugate",
    "combine_mixture",
    "log_grid",
    "from_json",
]


def poisson_h(r):
    """h(r) = (1+r) log(1+r) - r, evaluated elementwise."""
    r = np.asarray(r, dtype=float)
    return (1.0 + r) * np.log1p(r) - r


def poisson_h_conjugate(lam):
    """h*(lam) = e^lam - lam - 1."""
    lam = np.asarray(lam, dtype=float)
    return np.expm1(lam) - lam


def _check_nonneg(x, name):
    x = np.asarray(x, dtype=float)
    if np.any(np.isnan(x)) or np.any(x < 0):
        raise DomainError(f"{name} must be >= 0, got {x}")
    return x


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


class DeviationFunction:
    """Base class. Subclasses implement ``_eval`` and ``_conj``."""

    kind = "abstract"

    def eval(self, r):
        r = _check_nonneg(r, "r")
        return _out(self._eval(r))

    __call__ = eval

    def conjugate(self, lam):
        """alpha*(lam) = sup_{r >= 0} (lam r - alpha(r))."""
        lam = _check_nonneg(lam, "lambda")
        return _out(self._conj(lam))

    def params(self) -> dict:
        raise NotImplementedError

    def to_json(self) -> dict:
        return {"kind": self.kind, "params": self.params()}

    def dumps(self) -> str:
        return json.dumps(self.to_json())


@dataclass(frozen=True)
class PoissonH(DeviationFunction):
    c: float
    kind = "poisson_h"

    def __post_init__(self):
        if not self.c > 0:
            raise DomainError(f"PoissonH needs c > 0, got {self.c}")

    def _eval(self, r):
        return self.c * poisson_h(r / self.c)

    def _conj(self, lam):
        return self.c * poisson_h_conjugate(lam)

    def params(self):
        return {"c": self.c}


@dataclass(frozen=True)
class Quadratic(DeviationFunction):
    """beta(r) = 2 r^2 / a^2, the deviation function of measures on [0, a]."""

    a: float
    kind = "quadratic"

    def __post_init__(self):
        if not self.a > 0:
            raise DomainError(f"Quadratic needs a > 0, got {self.a}")

    def _eval(self, r):
        return 2.0 * r * r / (self.a * self.a)

    def _conj(self, lam):
        return self.a * self.a * lam * lam / 8.0

    def params(self):
        return {"a": self.a}


@dataclass(frozen=True, eq=False)
class Tabulated(DeviationFunction):
    """Piecewise-linear deviation function through (r_k, alpha_k).

    Beyond the last node the last segment is extended linearly; for a convex
    function this under-estimates the true value, which is the conservative
    side for inequalities of the form alpha(W) <= H.
    """

    r: np.ndarray
    values: np.ndarray
    tol: float = 1e-9
    kind = "tabulated"
    _slopes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if r.ndim != 1 or r.shape != v.shape or r.size < 2:
            raise DomainError("Tabulated needs matching 1-d grids of length >= 2")
        if r[0] != 0.0:
            raise DomainError("Tabulated grid must start at r = 0")
        if abs(v[0]) > self.tol:
            raise DomainError(f"alpha(0) must be 0, got {v[0]}")
        if np.any(np.diff(r) <= 0):
            raise DomainError("Tabulated grid must be strictly increasing")
        slopes = np.diff(v) / np.diff(r)
        scale = max(1.0, float(np.max(np.abs(slopes))))
        if np.any(slopes < -self.tol * scale):
            raise DomainError("Tabulated alpha is not non-decreasing")
        if np.any(np.diff(slopes) < -self.tol * scale):
            raise DomainError("Tabulated alpha is not convex on its grid")
        v = v.copy()
        v[0] = 0.0
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "_slopes", slopes)

    @property
    def r_max(self):
        return float(self.r[-1])

    def _eval(self, r):
        inside = np.interp(r, self.r, self.values)
        beyond = self.values[-1] + self._slopes[-1] * (r - self.r[-1])
        return np.where(r <= self.r[-1], inside, beyond)

    def _conj_unchecked(self, lam):
        # objective is piecewise linear in r: the sup sits on a vertex
        lam = np.asarray(lam, dtype=float)
        vals = lam[..., None] * self.r - self.values
        out = vals.max(axis=-1)
        return np.where(lam > self._slopes[-1] * (1 + self.tol) + self.tol, np.inf, out)

    def _conj(self, lam):
        out = self._conj_unchecked(lam)
        if np.any(np.isinf(out)):
            raise ConjugateRangeError(
                f"conjugate exceeds grid: lambda above final slope {self._slopes[-1]:.6g}"
            )
        return out

    def params(self):
        return {}

    def to_json(self):
        return {
            "kind": self.kind,
            "params": {},
            "grid": [[float(a), float(b)] for a, b in zip(self.r, self.values)],
        }


def log_grid(r_max, n=1024, r_min_ratio=1e-8):
    """0 followed by n-1 log-spaced points ending at r_max."""
    if not r_max > 0:
        raise DomainError("r_max must be positive")
    return np.concatenate([[0.0], np.geomspace(r_max * r_min_ratio, r_max, n - 1)])


def _conj_or_inf(f: DeviationFunction, lam):
    if isinstance(f, Tabulated):
        return f._conj_unchecked(lam)
    return f._conj(lam)


def _mixture_objective(alpha, beta, M, r, b):
    with np.errstate(over="ignore", invalid="ignore"):
        val = b * r - _conj_or_inf(alpha, b) - _conj_or_inf(beta, b * M)
    return np.where(np.isnan(val), -np.inf, val)


def mixture_sup(alpha, beta, M, r, rtol=1e-10, max_iter=400):
    """sup_{b>=0} { b r - alpha*(b) - beta*(b M) } for each r (vectorized).

    The map b -> b r - alpha*(b) - beta*(bM) is concave, so a ternary search
    on a bracket [0, b_max] finds the maximum; b_max doubles until a forward
    difference turns negative.
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    lo = np.zeros_like(r)
    hi = np.ones_like(r)
    for _ in range(200):
        step = 1e-6 * hi
        up = _mixture_objective(alpha, beta, M, r, hi + step) - _mixture_objective(
            alpha, beta, M, r, hi
        )
        growing = up > 0
        if not growing.any():
            break
        hi = np.where(growing, 2.0 * hi, hi)
    for _ in range(max_iter):
        width = hi - lo
        if np.all(width <= rtol * np.maximum(hi, 1e-300)):
            break
        m1 = lo + width / 3.0
        m2 = hi - width / 3.0
        g1 = _mixture_objective(alpha, beta, M, r, m1)
        g2 = _mixture_objective(alpha, beta, M, r, m2)
        keep_left = g1 >= g2
        hi = np.where(keep_left, m2, hi)
        lo = np.where(keep_left, lo, m1)
    b = 0.5 * (lo + hi)
    best = np.maximum(_mixture_objective(alpha, beta, M, r, b), 0.0)
    return best, b


def combine_mixture(alpha, beta, M, r_max=10.0, n_grid=1024, grid=None, rtol=1e-10):
    """Deviation function of a mixture of alpha-measures mixed by a beta-law.

    Returns the tabulated function r -> sup_b { b r - alpha*(b) - beta*(b M) }.
    ``M`` is the Lipschitz constant of the mixing map lambda -> mu_lambda.
    """
    if not M > 0:
        raise DomainError(f"M must be positive, got {M}")
    r = log_grid(r_max, n_grid) if grid is None else np.asarray(grid, dtype=float)
    vals, _ = mixture_sup(alpha, beta, M, r, rtol=rtol)
    vals[0] = 0.0
    # enforce monotonicity lost to last-bit rounding
    vals = np.maximum.accumulate(vals)
    return Tabulated(r, vals, tol=1e-7)


def from_json(obj) -> DeviationFunction:
    """Build a deviation function from ``{kind, params, grid?}`` (dict or str)."""
    if isinstance(obj, str):
        obj = json.loads(obj)
    if not isinstance(obj, dict) or "kind" not in obj:
        raise DomainError("deviation JSON needs a 'kind' field")
    kind = obj["kind"]
    params = obj.get("params", {})
    if kind == "poisson_h":
        return PoissonH(float(params["c"]))
    if kind == "quadratic":
        return Quadratic(float(params["a"]))
    if kind == "tabulated":
        grid = np.asarray(obj["grid"], dtype=float)
        return Tabulated(grid[:, 0], grid[:, 1])
    raise DomainError(f"unknown deviation kind {kind!r}")
