"""Point configurations on a box, Poisson and continuum Gibbs sampling, the
difference operator and the cell discretization of the continuum model.

Sampling kernels are compiled with numba and consume blocks of uniforms drawn
from a numpy ``Generator``, so a chain is reproducible from its seed alone.
"""
from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import integrate, special

from .errors import DomainError
from .measures import SpinGibbsSpec, required_cutoff, DEFAULT_EPS_TRUNC

# --- geometry ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Box:
    """Axis-aligned box prod_k [lower_k, upper_k]."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DomainError("box bounds must be matching vectors")
        if np.any(~(hi > lo)):
            raise DomainError("box must be non-empty")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def cube(cls, half_width, d):
        return cls(np.full(d, -float(half_width)), np.full(d, float(half_width)))

    @property
    def d(self):
        return self.lower.size

    @property
    def volume(self):
        return float(np.prod(self.upper - self.lower))

    @property
    def diameter(self):
        return float(np.linalg.norm(self.upper - self.lower))

    def contains(self, pts):
        pts = np.atleast_2d(pts)
        return np.all((pts >= self.lower) & (pts <= self.upper), axis=1)

    def to_json(self):
        return [[float(a), float(b)] for a, b in zip(self.lower, self.upper)]

    @classmethod
    def from_json(cls, obj):
        """[[lo, hi], ...] per axis, or {"lower": [...], "upper": [...]}."""
        if isinstance(obj, dict):
            return cls(obj["lower"], obj["upper"])
        arr = np.asarray(obj, dtype=float).reshape(-1, 2)
        return cls(arr[:, 0], arr[:, 1])


@dataclass(frozen=True, eq=False)
class Configuration:
    """Finite point measure sum_k m_k delta_{p_k} on a box."""

    box: Box
    points: np.ndarray
    mults: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, self.box.d)
        m = np.asarray(self.mults, dtype=np.int64).reshape(-1)
        if pts.shape[0] != m.size:
            raise DomainError("points and multiplicities differ in length")
        if np.any(m < 1):
            raise DomainError("multiplicities must be positive integers")
        if pts.shape[0] and not np.all(self.box.contains(pts)):
            raise DomainError("configuration has points outside the box")
        if pts.shape[0] > 1:
            uniq, inv = np.unique(pts, axis=0, return_inverse=True)
            if uniq.shape[0] < pts.shape[0]:
                m = np.bincount(inv.reshape(-1), weights=m, minlength=uniq.shape[0]).astype(np.int64)
                pts = uniq
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "mults", m)

    @classmethod
    def empty(cls, box):
        return cls(box, np.zeros((0, box.d)), np.zeros(0, dtype=np.int64))

    @classmethod
    def from_occurrences(cls, box, occ):
        """Build from a list of point occurrences (repeats become multiplicity)."""
        occ = np.asarray(occ, dtype=float).reshape(-1, box.d)
        return cls(box, occ, np.ones(occ.shape[0], dtype=np.int64))

    @property
    def count(self):
        return int(self.mults.sum())

    def __len__(self):
        return self.count

    def counts(self):
        return {tuple(p.tolist()): int(m) for p, m in zip(self.points, self.mults)}

    def occurrences(self):
        return np.repeat(self.points, self.mults, axis=0)

    def add(self, x):
        """omega + delta_x."""
        x = np.asarray(x, dtype=float).reshape(1, self.box.d)
        return Configuration(
            self.box, np.vstack([self.points, x]), np.append(self.mults, 1)
        )

    def integrate(self, f):
        """omega(f) = sum_k m_k f(p_k) for a vectorized f."""
        if self.points.shape[0] == 0:
            return 0.0
        return float(np.dot(self.mults, np.asarray(f(self.points), dtype=float)))

    def to_atoms(self):
        return [list(map(float, p)) + [int(m)] for p, m in zip(self.points, self.mults)]

    @classmethod
    def from_atoms(cls, box, atoms):
        if not atoms:
            return cls.empty(box)
        arr = np.asarray(atoms, dtype=float)
        return cls(box, arr[:, :-1], arr[:, -1].astype(np.int64))


def difference_operator(F, x, omega: Configuration):
    """D_x F(omega) = F(omega + delta_x) - F(omega)."""
    return F(omega.add(x)) - F(omega)


# --- pair potentials -----------------------------------------------------------

_ZERO, _HARDCORE, _STEP, _TABULATED = 0, 1, 2, 3


def _ball_volume(r, d):
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1) * r ** d


def _sphere_area(d):
    return 2 * math.pi ** (d / 2) / math.gamma(d / 2)


class Potential:
    """Non-negative even radial pair potential phi(y) = profile(|y|)."""

    code = _ZERO

    def radial(self, r):
        raise NotImplementedError

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        r = np.linalg.norm(np.atleast_1d(y), axis=-1) if y.ndim else abs(float(y))
        out = self.radial(np.asarray(r))
        return float(out) if np.ndim(out) == 0 else out

    def packed(self):
        """(code, p0, p1, table_r, table_v) consumed by the numba kernels."""
        return self.code, 0.0, 0.0, np.zeros(1), np.zeros(1)

    def one_minus_exp_integral(self, d):
        """int_{R^d} (1 - exp(-phi(y))) dy."""
        raise NotImplementedError


@dataclass(frozen=True)
class ZeroPotential(Potential):
    code = _ZERO

    def radial(self, r):
        return np.zeros_like(np.asarray(r, dtype=float))

    def one_minus_exp_integral(self, d):
        return 0.0

    def to_json(self):
        return {"kind": "zero"}


@dataclass(frozen=True)
class HardCore(Potential):
    """phi = +inf on |y| <= radius, 0 outside."""

    radius: float
    code = _HARDCORE

    def __post_init__(self):
        if not self.radius > 0:
            raise DomainError("hard-core radius must be > 0")

    def radial(self, r):
        return np.where(np.asarray(r) <= self.radius, np.inf, 0.0)

    def packed(self):
        return self.code, float(self.radius), 0.0, np.zeros(1), np.zeros(1)

    def one_minus_exp_integral(self, d):
        return _ball_volume(self.radius, d)

    def to_json(self):
        return {"kind": "hardcore", "radius": self.radius}


@dataclass(frozen=True)
class Step(Potential):
    """phi = height on |y| <= radius, 0 outside."""

    height: float
    radius: float
    code = _STEP

    def __post_init__(self):
        if not (self.radius > 0 and self.height >= 0):
            raise DomainError("step potential needs radius > 0 and height >= 0")

    def radial(self, r):
        return np.where(np.asarray(r) <= self.radius, self.height, 0.0)

    def packed(self):
        return self.code, float(self.radius), float(self.height), np.zeros(1), np.zeros(1)

    def one_minus_exp_integral(self, d):
        return -math.expm1(-self.height) * _ball_volume(self.radius, d)

    def to_json(self):
        return {"kind": "step", "height": self.height, "radius": self.radius}


@dataclass(frozen=True, eq=False)
class TabulatedRadial(Potential):
    """Linear interpolation of (r_k, phi_k); constant at phi_last beyond the table."""

    r: np.ndarray
    values: np.ndarray
    code = _TABULATED

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if r.ndim != 1 or r.shape != v.shape or r.size < 2 or r[0] != 0:
            raise DomainError("tabulated profile needs a grid starting at r = 0")
        if np.any(np.diff(r) <= 0) or np.any(v < 0) or np.any(np.isnan(v)):
            raise DomainError("tabulated profile must be increasing in r with phi >= 0")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "values", v)

    def radial(self, r):
        return np.interp(r, self.r, self.values)

    def packed(self):
        return self.code, 0.0, 0.0, self.r, self.values

    def one_minus_exp_integral(self, d):
        if self.values[-1] > 0:
            raise DomainError("1 - exp(-phi) is not integrable: profile does not vanish")
        area = _sphere_area(d)

        def integrand(s):
            return area * s ** (d - 1) * -math.expm1(-float(np.interp(s, self.r, self.values)))

        total = 0.0
        for a, b in zip(self.r[:-1], self.r[1:]):
            val, _ = integrate.quad(integrand, a, b, epsrel=1e-10, epsabs=0.0, limit=200)
            total += val
        return total

    def to_json(self):
        return {"kind": "tabulated", "r": self.r.tolist(), "values": self.values.tolist()}


def potential_from_json(obj) -> Potential:
    kind = obj.get("kind")
    if kind == "zero":
        return ZeroPotential()
    if kind == "hardcore":
        return HardCore(float(obj["radius"]))
    if kind == "step":
        return Step(float(obj["height"]), float(obj["radius"]))
    if kind == "tabulated":
        return TabulatedRadial(np.asarray(obj["r"]), np.asarray(obj["values"]))
    raise DomainError(f"unknown potential kind {kind!r}")


# --- continuum Gibbs model ------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ContinuumGibbsSpec:
    """Activity z, pair potential and finite boundary condition on a box."""

    box: Box
    z: float
    potential: Potential = field(default_factory=ZeroPotential)
    boundary: np.ndarray = None
    probe_points: int = 5

    def __post_init__(self):
        if not self.z > 0:
            raise DomainError("activity z must be > 0")
        d = self.box.d
        bnd = np.zeros((0, d)) if self.boundary is None else np.asarray(self.boundary, dtype=float)
        bnd = bnd.reshape(-1, d)
        if bnd.shape[0] and np.any(self.box.contains(bnd)):
            raise DomainError("boundary points must lie outside the box")
        object.__setattr__(self, "boundary", bnd)
        if bnd.shape[0]:
            axes = [np.linspace(lo, hi, self.probe_points) for lo, hi in zip(self.box.lower, self.box.upper)]
            probe = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, d)
            field_ = boundary_field(self, probe)
            if np.any(~np.isfinite(field_)):
                warnings.warn("boundary energy is infinite at some probe points of E")

    @property
    def mean_count(self):
        return self.z * self.box.volume

    def to_json(self):
        return {
            "box": self.box.to_json(),
            "z": self.z,
            "potential": self.potential.to_json(),
            "boundary": self.boundary.tolist(),
        }

    @classmethod
    def from_json(cls, obj):
        if isinstance(obj, str):
            obj = json.loads(obj)
        try:
            box = Box.from_json(obj["box"])
            pot = potential_from_json(obj.get("potential", {"kind": "zero"}))
            bnd = obj.get("boundary") or None
            return cls(box, float(obj["z"]), pot, None if bnd is None else np.asarray(bnd, dtype=float))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, DomainError):
                raise
            raise DomainError(f"bad continuum spec: {exc}") from exc


def boundary_field(spec: ContinuumGibbsSpec, pts):
    """sum_k phi(x - y_k) for each row x of pts."""
    pts = np.atleast_2d(pts)
    if spec.boundary.shape[0] == 0:
        return np.zeros(pts.shape[0])
    diff = pts[:, None, :] - spec.boundary[None, :, :]
    return spec.potential(diff).sum(axis=1)


def energy(spec: ContinuumGibbsSpec, omega: Configuration) -> float:
    """Pair energy over distinct occurrences plus boundary energy.

    A point of multiplicity m contributes m(m-1)/2 pairs at distance 0.
    """
    occ = omega.occurrences()
    n = occ.shape[0]
    if n == 0:
        return 0.0
    total = float(boundary_field(spec, occ).sum())
    if n > 1:
        iu, ju = np.triu_indices(n, k=1)
        total += float(np.sum(spec.potential(occ[iu] - occ[ju])))
    return total


def sample_ppp(box: Box, z, rng) -> Configuration:
    """Poisson point process with intensity z dx on the box."""
    if not z > 0:
        raise DomainError("intensity must be > 0")
    n = rng.poisson(z * box.volume)
    pts = box.lower + (box.upper - box.lower) * rng.random((n, box.d))
    return Configuration.from_occurrences(box, pts)


def ppp_counts(box: Box, z, n_draws, rng, split_axis=None):
    """Vectorized PPP count draws; optionally the counts in the two half-boxes.

    Splitting a PPP by a binomial thinning of its count is exact, so the
    half-box counts are drawn without materializing points.
    """
    total = rng.poisson(z * box.volume, size=n_draws)
    if split_axis is None:
        return total
    left = rng.binomial(total, 0.5)
    return total, left, total - left


# --- numba kernels --------------------------------------------------------------


@numba.njit(cache=True)
def _phi_radial(code, p0, p1, tab_r, tab_v, r):
    if code == 0:
        return 0.0
    if code == 1:
        return np.inf if r <= p0 else 0.0
    if code == 2:
        return p1 if r <= p0 else 0.0
    if r >= tab_r[-1]:
        return tab_v[-1]
    return np.interp(r, tab_r, tab_v)


@numba.njit(cache=True)
def birth_acceptance(zvol, n, dH):
    """Metropolis acceptance of adding a point to n points (energy change dH)."""
    if dH == np.inf:
        return 0.0
    a = zvol * math.exp(-dH) / (n + 1)
    return 1.0 if a >= 1.0 else a


@numba.njit(cache=True)
def death_acceptance(zvol, n, dH):
    """Metropolis acceptance of removing one of n points (energy change dH)."""
    a = n * math.exp(-dH) / zvol
    return 1.0 if a >= 1.0 else a


@numba.njit(cache=True)
def _point_energy(pts, n, x, skip, code, p0, p1, tab_r, tab_v, bnd):
    e = 0.0
    d = pts.shape[1]
    for j in range(n):
        if j == skip:
            continue
        s = 0.0
        for k in range(d):
            t = x[k] - pts[j, k]
            s += t * t
        e += _phi_radial(code, p0, p1, tab_r, tab_v, math.sqrt(s))
        if e == np.inf:
            return e
    for j in range(bnd.shape[0]):
        s = 0.0
        for k in range(d):
            t = x[k] - bnd[j, k]
            s += t * t
        e += _phi_radial(code, p0, p1, tab_r, tab_v, math.sqrt(s))
    return e


@numba.njit(cache=True)
def _bd_continuum(pts, n, lower, width, zvol, code, p0, p1, tab_r, tab_v, bnd,
                  U, step0, burn, thin, rec_n, rec_pts, rec_i, rec_ptr):
    """Run birth-death steps over the uniforms in U.

    Returns (steps_done, n, rec_i, rec_ptr); stops early when a buffer fills.
    """
    d = pts.shape[1]
    x = np.empty(d)
    for s in range(U.shape[0]):
        u = U[s]
        if u[0] < 0.5:
            if n == pts.shape[0]:
                return s, n, rec_i, rec_ptr
            for k in range(d):
                x[k] = lower[k] + width[k] * u[3 + k]
            dH = _point_energy(pts, n, x, -1, code, p0, p1, tab_r, tab_v, bnd)
            if u[2] < birth_acceptance(zvol, n, dH):
                for k in range(d):
                    pts[n, k] = x[k]
                n += 1
        elif n > 0:
            i = min(int(u[1] * n), n - 1)
            for k in range(d):
                x[k] = pts[i, k]
            dH = -_point_energy(pts, n, x, i, code, p0, p1, tab_r, tab_v, bnd)
            if u[2] < death_acceptance(zvol, n, dH):
                for k in range(d):
                    pts[i, k] = pts[n - 1, k]
                n -= 1
        g = step0 + s + 1
        if g > burn and (g - burn) % thin == 0:
            if rec_i == rec_n.shape[0] or rec_ptr + n > rec_pts.shape[0]:
                return s + 1, n, -rec_i - 1, rec_ptr
            rec_n[rec_i] = n
            for j in range(n):
                for k in range(d):
                    rec_pts[rec_ptr + j, k] = pts[j, k]
            rec_ptr += n
            rec_i += 1
    return U.shape[0], n, rec_i, rec_ptr


@numba.njit(cache=True)
def _bd_lattice(counts, ref, field_, gamma, U, step0, burn, thin, rec):
    """Birth-death chain on N^Lambda with reference weights ref_i and site field.

    Births pick site i with probability ref_i / sum(ref); the target is
    exp(-sum_{i<j} gamma_ij n_i n_j - sum_i field_i n_i) prod ref_i^{n_i} / n_i!.
    """
    N = counts.size
    zvol = ref.sum()
    cum = np.cumsum(ref) / zvol
    n = counts.sum()
    r = 0
    for s in range(U.shape[0]):
        u = U[s]
        if u[0] < 0.5:
            i = 0
            while i < N - 1 and u[1] >= cum[i]:
                i += 1
            dH = field_[i]
            for j in range(N):
                if j != i and counts[j] > 0:
                    dH += gamma[i, j] * counts[j]
            if u[2] < birth_acceptance(zvol, n, dH):
                counts[i] += 1
                n += 1
        elif n > 0:
            target = min(int(u[1] * n), n - 1)
            i = 0
            acc = counts[0]
            while acc <= target:
                i += 1
                acc += counts[i]
            e = field_[i]
            for j in range(N):
                if j != i and counts[j] > 0:
                    e += gamma[i, j] * counts[j]
            if u[2] < death_acceptance(zvol, n, -e):
                counts[i] -= 1
                n -= 1
        g = step0 + s + 1
        if g > burn and (g - burn) % thin == 0:
            if r < rec.shape[0]:
                for k in range(N):
                    rec[r, k] = counts[k]
                r += 1
    return r


@numba.njit(cache=True)
def _heat_bath(x, delta, gamma, K, U, sweep0, burn, rec):
    """Systematic-scan Glauber dynamics with exact box conditionals."""
    N = x.size
    pmf = np.empty(K + 1)
    r = 0
    for s in range(U.shape[0]):
        for i in range(N):
            e = 0.0
            for j in range(N):
                if j != i and x[j] > 0:
                    e += gamma[i, j] * x[j]
            lam = 0.0 if e == np.inf else delta[i] * math.exp(-e)
            pmf[0] = 1.0
            tot = 1.0
            for k in range(1, K + 1):
                pmf[k] = pmf[k - 1] * lam / k
                tot += pmf[k]
            t = U[s, i] * tot
            k = 0
            acc = pmf[0]
            while acc <= t and k < K:
                k += 1
                acc += pmf[k]
            x[i] = k
        if sweep0 + s + 1 > burn and r < rec.shape[0]:
            for k in range(N):
                rec[r, k] = x[k]
            r += 1
    return r


# --- samplers -------------------------------------------------------------------


def sweep_length(spec: ContinuumGibbsSpec):
    """Proposals per sweep: one per expected particle, at least one."""
    return max(1, int(math.ceil(spec.mean_count)))


@dataclass(frozen=True, eq=False)
class ChainOutput:
    """Kept samples of a continuum chain in flat form."""

    box: Box
    counts: np.ndarray
    points: np.ndarray
    steps: np.ndarray

    def __len__(self):
        return self.counts.size

    @property
    def offsets(self):
        return np.concatenate([[0], np.cumsum(self.counts)])

    def configuration(self, k):
        off = self.offsets
        return Configuration.from_occurrences(self.box, self.points[off[k]:off[k + 1]])

    def __iter__(self):
        off = self.offsets
        for k in range(self.counts.size):
            yield Configuration.from_occurrences(self.box, self.points[off[k]:off[k + 1]])

    def integrate(self, f):
        """omega_k(f) for every kept sample."""
        vals = np.asarray(f(self.points), dtype=float) if self.points.shape[0] else np.zeros(0)
        out = np.zeros(self.counts.size)
        nz = self.counts > 0
        starts = self.offsets[:-1][nz]
        if starts.size:
            out[nz] = np.add.reduceat(vals, starts)
        return out

    def cell_counts(self, grid: "DiscretizationGrid"):
        idx = grid.locate(self.points)
        sample = np.repeat(np.arange(self.counts.size), self.counts)
        out = np.zeros((self.counts.size, grid.n_cells), dtype=np.int64)
        np.add.at(out, (sample, idx), 1)
        return out


def run_birth_death(spec: ContinuumGibbsSpec, n_samples, rng, burn_sweeps=10_000,
                    thin_sweeps=10, init=None, block=1 << 18) -> ChainOutput:
    """Grand-canonical birth-death Metropolis chain targeting P^phi.

    Each proposal is a birth at a uniform point of E or the death of a
    uniformly chosen occurrence, with probability 1/2 each.
    """
    box = spec.box
    d = box.d
    L = sweep_length(spec)
    burn, thin = burn_sweeps * L, thin_sweeps * L
    code, p0, p1, tab_r, tab_v = spec.potential.packed()
    zvol = spec.mean_count
    cap = max(64, int(4 * zvol + 50))
    pts = np.zeros((cap, d))
    n = 0
    if init is not None:
        occ = init.occurrences()
        n = occ.shape[0]
        pts = np.zeros((max(cap, 2 * n), d))
        pts[:n] = occ
    rec_n = np.zeros(n_samples, dtype=np.int64)
    rec_pts = np.zeros((max(1024, int(n_samples * (zvol + 1))), d))
    rec_i = rec_ptr = 0
    step = 0
    width = box.upper - box.lower
    U = None
    pos = 0
    while rec_i < n_samples:
        if U is None or pos == U.shape[0]:
            U = rng.random((block, 3 + d))
            pos = 0
        done, n, ri, rec_ptr = _bd_continuum(
            pts, n, box.lower, width, zvol, code, p0, p1, tab_r, tab_v,
            spec.boundary, U[pos:], step, burn, thin, rec_n, rec_pts, rec_i, rec_ptr,
        )
        step += done
        pos += done
        if ri < 0:
            rec_i = -ri - 1
            if rec_i == n_samples:
                break
            grow = max(rec_pts.shape[0], n + 1)
            rec_pts = np.vstack([rec_pts, np.zeros((grow, d))])
            # the step that triggered the overflow is recorded again below
            rec_n[rec_i] = n
            rec_pts[rec_ptr:rec_ptr + n] = pts[:n]
            rec_ptr += n
            rec_i += 1
            continue
        rec_i = ri
        if n == pts.shape[0]:
            pts = np.vstack([pts, np.zeros_like(pts)])
    steps = burn + thin * np.arange(1, n_samples + 1)
    return ChainOutput(box, rec_n[:n_samples], rec_pts[:rec_ptr].copy(), steps)


def sample_gibbs_continuum(spec: ContinuumGibbsSpec, n_sweeps, rng, burn_sweeps=10_000,
                           thin_sweeps=10, warn=True):
    """Stream of configurations from the birth-death chain for P^phi.

    ``n_sweeps`` is the number of post-burn-in sweeps; one configuration is
    yielded every ``thin_sweeps`` sweeps.
    """
    if warn:
        from .dobrushin import dobrushin_continuum
        try:
            D = dobrushin_continuum(spec)
        except DomainError:
            D = math.inf
        if D >= 1:
            warnings.warn(f"Dobrushin constant D = {D:.4g} >= 1; mixing may be slow")
    n_samples = max(1, n_sweeps // thin_sweeps)
    out = run_birth_death(spec, n_samples, rng, burn_sweeps, thin_sweeps)
    yield from out


def run_lattice_birth_death(spin: SpinGibbsSpec, n_samples, rng, burn_steps=10_000,
                            thin_steps=None, site_field=None, block=1 << 18):
    """Birth-death Metropolis on N^Lambda targeting the spin Gibbs measure.

    Returns an (n_samples, N) array of count vectors. The kernel is the
    continuum kernel with births restricted to the sites (weights delta_i), so
    it samples the discretized model exactly. Counts above K are allowed; the
    spin model on the full lattice is the target.
    """
    N = spin.N
    ref = spin.delta.copy()
    fld = np.zeros(N) if site_field is None else np.asarray(site_field, dtype=float)
    if thin_steps is None:
        thin_steps = 10 * max(1, int(math.ceil(ref.sum())))
    counts = np.zeros(N, dtype=np.int64)
    rec = np.zeros((n_samples, N), dtype=np.int64)
    step = 0
    got = 0
    gamma = spin.gamma.copy()
    while got < n_samples:
        U = rng.random((block, 3))
        r = _bd_lattice(counts, ref, fld, gamma, U, step, burn_steps, thin_steps, rec[got:])
        got += r
        step += block
    return rec


def sample_gibbs_spin(spin: SpinGibbsSpec, n_samples, rng, burn_sweeps=1000, block=1 << 16):
    """Heat-bath Glauber samples from the spin Gibbs measure on {0..K}^N."""
    x = np.zeros(spin.N, dtype=np.int64)
    rec = np.zeros((n_samples, spin.N), dtype=np.int64)
    got = 0
    sweep = 0
    while got < n_samples:
        U = rng.random((block, spin.N))
        got += _heat_bath(x, spin.delta, spin.gamma, spin.K, U, sweep, burn_sweeps, rec[got:])
        sweep += block
    return rec


def transition_probability(spin: SpinGibbsSpec, n, m):
    """One-step probability of the lattice birth-death kernel from n to m != n."""
    n = np.asarray(n, dtype=np.int64)
    m = np.asarray(m, dtype=np.int64)
    diff = m - n
    tot = int(n.sum())
    zvol = float(spin.delta.sum())
    if np.abs(diff).sum() != 1:
        return 0.0
    i = int(np.flatnonzero(diff)[0])
    from .measures import interaction_energy_terms
    e = float(np.sum(interaction_energy_terms(np.delete(spin.gamma[i], i), np.delete(n, i), 1)))
    if diff[i] == 1:
        return 0.5 * spin.delta[i] / zvol * birth_acceptance(zvol, tot, e)
    return 0.5 * n[i] / tot * death_acceptance(zvol, tot, -float(
        np.sum(interaction_energy_terms(np.delete(spin.gamma[i], i), np.delete(m, i), 1))))


# --- discretization ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DiscretizationGrid:
    """Partition of a box into axis-aligned cells with one representative each."""

    box: Box
    lower: np.ndarray
    upper: np.ndarray
    reps: np.ndarray
    axes: tuple = None

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        reps = np.asarray(self.reps, dtype=float)
        if not (lo.shape == hi.shape == reps.shape) or lo.shape[1] != self.box.d:
            raise DomainError("cell bounds and representatives must be (N, d)")
        if np.any(hi <= lo):
            raise DomainError("cells must be non-empty")
        if np.any(lo < self.box.lower - 1e-12) or np.any(hi > self.box.upper + 1e-12):
            raise DomainError("cells must lie inside the box")
        if np.any(reps < lo) or np.any(reps > hi):
            raise DomainError("representatives must lie in their cells")
        vol = np.prod(hi - lo, axis=1)
        if abs(vol.sum() - self.box.volume) > 1e-10 * self.box.volume:
            raise DomainError("cells do not cover the box")
        for i, j in itertools.combinations(range(lo.shape[0]), 2):
            overlap = np.minimum(hi[i], hi[j]) - np.maximum(lo[i], lo[j])
            if np.all(overlap > 1e-12):
                raise DomainError(f"cells {i} and {j} overlap")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "reps", reps)

    @property
    def n_cells(self):
        return self.reps.shape[0]

    @property
    def volumes(self):
        return np.prod(self.upper - self.lower, axis=1)

    @property
    def max_volume(self):
        return float(self.volumes.max())

    @property
    def max_diameter(self):
        return float(np.linalg.norm(self.upper - self.lower, axis=1).max())

    def locate(self, pts):
        """Cell index of each point (cells are half-open except at the box edge)."""
        pts = np.atleast_2d(pts)
        if self.axes is not None:
            idx = []
            for k, edges in enumerate(self.axes):
                j = np.searchsorted(edges, pts[:, k], side="right") - 1
                idx.append(np.clip(j, 0, len(edges) - 2))
            return np.ravel_multi_index(idx, [len(e) - 1 for e in self.axes])
        inside = np.all((pts[:, None, :] >= self.lower) & (pts[:, None, :] <= self.upper), axis=2)
        return np.argmax(inside, axis=1)


def uniform_grid(box: Box, cells_per_axis) -> DiscretizationGrid:
    """Product grid with the given number of cells per axis; centers as representatives."""
    cpa = np.broadcast_to(np.asarray(cells_per_axis, dtype=int), (box.d,))
    axes = tuple(np.linspace(lo, hi, c + 1) for lo, hi, c in zip(box.lower, box.upper, cpa))
    lows = np.stack(np.meshgrid(*[a[:-1] for a in axes], indexing="ij"), -1).reshape(-1, box.d)
    highs = np.stack(np.meshgrid(*[a[1:] for a in axes], indexing="ij"), -1).reshape(-1, box.d)
    return DiscretizationGrid(box, lows, highs, 0.5 * (lows + highs), axes)


def discretize(spec: ContinuumGibbsSpec, grid: DiscretizationGrid, K=None,
               eps_trunc=DEFAULT_EPS_TRUNC) -> SpinGibbsSpec:
    """Spin model on the cells: delta_i = z|E_i| exp(-boundary field at x_i),
    gamma_ij = phi(x_i - x_j)."""
    if grid.box is not spec.box and not (
        np.allclose(grid.box.lower, spec.box.lower) and np.allclose(grid.box.upper, spec.box.upper)
    ):
        raise DomainError("grid and spec use different boxes")
    fld = boundary_field(spec, grid.reps)
    with np.errstate(over="ignore"):
        delta = spec.z * grid.volumes * np.exp(-fld)
    if np.any(delta <= 0):
        raise DomainError("boundary condition forbids some cell entirely")
    reps = grid.reps
    gamma = spec.potential(reps[:, None, :] - reps[None, :, :])
    gamma = np.asarray(gamma, dtype=float).reshape(grid.n_cells, grid.n_cells)
    np.fill_diagonal(gamma, 0.0)
    if K is None:
        K = required_cutoff(float(delta.max()), eps_trunc)
    return SpinGibbsSpec(delta, gamma, K)


def push_forward(grid: DiscretizationGrid, n) -> Configuration:
    """Phi(n) = sum_i n_i delta_{x_i}."""
    n = np.asarray(n, dtype=np.int64).reshape(-1)
    if n.size != grid.n_cells or np.any(n < 0):
        raise DomainError("count vector must be in N^cells")
    keep = n > 0
    return Configuration(grid.box, grid.reps[keep], n[keep])


def discretized_dobrushin_bound(spec: ContinuumGibbsSpec, grid: DiscretizationGrid):
    """sup_j sum_{i != j} z|E_i| (1 - exp(-phi(x_i - x_j)))."""
    reps = grid.reps
    phi = np.asarray(spec.potential(reps[:, None, :] - reps[None, :, :])).reshape(grid.n_cells, -1)
    c = spec.z * grid.volumes[:, None] * -np.expm1(-phi)
    np.fill_diagonal(c, 0.0)
    return float(c.sum(axis=0).max())


# --- streams ----------------------------------------------------------------------


def write_ldjson(stream, fh, steps=None):
    """Write configurations as one JSON object per line: {step, count, atoms}."""
    for k, omega in enumerate(stream):
        step = int(steps[k]) if steps is not None else k
        fh.write(json.dumps({"step": step, "count": omega.count, "atoms": omega.to_atoms()}))
        fh.write("\n")


def read_ldjson(fh, box):
    for line in fh:
        if line.strip():
            rec = json.loads(line)
            yield rec["step"], Configuration.from_atoms(box, rec["atoms"])
