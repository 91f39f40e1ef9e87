"""Command-line front end.

Exit codes: 0 pass (or inconclusive Monte Carlo), 1 inequality violated,
2 bad input or inapplicable precondition. Relative output paths are resolved
against $TRANSINEQ_OUT_DIR when it is set.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import deviation as dev
from .dobrushin import dobrushin_continuum, dobrushin_discrete
from .errors import DomainError
from .measures import (
    FiniteMeasure,
    MixedPoissonSpec,
    SpinGibbsSpec,
    gibbs_exact,
    poisson,
    relative_entropy,
    required_cutoff,
)
from .pointprocess import (
    Box,
    ContinuumGibbsSpec,
    run_birth_death,
    sample_ppp,
    uniform_grid,
    write_ldjson,
)
from .transport import MetricSpec, w1_integer_line, w1_lp
from . import verify as V

OUT_DIR_ENV = "TRANSINEQ_OUT_DIR"


class InputError(Exception):
    pass


def out_path(path):
    if path is None or path == "-" or os.path.isabs(path):
        return path
    base = os.environ.get(OUT_DIR_ENV)
    if base:
        os.makedirs(base, exist_ok=True)
        return os.path.join(base, path)
    return path


def write_text(path, text):
    path = out_path(path)
    if path is None or path == "-":
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
        return
    with open(path, "w") as fh:
        fh.write(text)


def load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: malformed JSON ({exc})") from exc
    except OSError as exc:
        raise InputError(str(exc)) from exc


def load_measure(path):
    if path.endswith(".csv"):
        with open(path) as fh:
            return FiniteMeasure.from_csv(fh.read())
    return FiniteMeasure.from_json(load_json(path))


def rng_for(seed):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


# --- deviation --------------------------------------------------------------------


def _deviation_from_args(args):
    if args.spec:
        return dev.from_json(load_json(args.spec))
    if args.poisson_h is not None:
        return dev.PoissonH(args.poisson_h)
    if args.quadratic is not None:
        return dev.Quadratic(args.quadratic)
    raise InputError("give --poisson-h, --quadratic or --spec")


def cmd_deviation(args):
    alpha = _deviation_from_args(args)
    if args.mix_with:
        beta = dev.from_json(load_json(args.mix_with))
        alpha = dev.combine_mixture(alpha, beta, args.M, r_max=args.r_max, n_grid=args.n_grid)
    for r in args.eval or []:
        print(repr(float(alpha(r))))
    for lam in args.conj or []:
        print(repr(float(alpha.conjugate(lam))))
    if args.table:
        grid = dev.log_grid(args.r_max, args.n_grid)
        lines = ["r,alpha"] + [f"{r!r},{float(alpha(r))!r}" for r in grid]
        write_text(args.table, "\n".join(lines) + "\n")
    if args.json:
        write_text(args.json, alpha.dumps())
    return 0


# --- w1 / entropy -----------------------------------------------------------------


def _pair(args):
    if args.poisson:
        if len(args.poisson) != 2:
            raise InputError("--poisson takes exactly two parameters (nu then mu)")
        K = args.K if args.K is not None else required_cutoff(max(args.poisson))
        return tuple(poisson(l, K, "renormalize", math.inf) for l in args.poisson)
    if args.nu and args.mu:
        return load_measure(args.nu), load_measure(args.mu)
    raise InputError("give --poisson L1 --poisson L2 or --nu FILE --mu FILE")


def cmd_w1(args):
    nu, mu = _pair(args)
    metric = MetricSpec.hamming() if args.metric == "hamming" else MetricSpec.euclidean()
    if metric.kind == "euclidean1d" and not (args.plan or args.duals) and nu.states.ndim == 1:
        print(repr(w1_integer_line(nu, mu)))
        return 0
    res = w1_lp(nu, mu, metric)
    print(repr(res.cost))
    if args.plan:
        write_text(args.plan, res.plan.to_csv())
    if args.duals:
        write_text(args.duals, res.duals.to_csv())
    return 0


def cmd_entropy(args):
    nu, mu = _pair(args)
    print(repr(relative_entropy(nu, mu)))
    return 0


# --- dobrushin --------------------------------------------------------------------


def cmd_dobrushin(args):
    if args.continuum:
        spec = ContinuumGibbsSpec.from_json(load_json(args.continuum))
        D = dobrushin_continuum(spec)
        write_text(args.out, json.dumps({"D": D, "satisfied": D < 1}, indent=2))
        return 0
    if args.spin:
        rep = dobrushin_discrete(SpinGibbsSpec.from_json(load_json(args.spin)))
        write_text(args.out, rep.dumps())
        print(f"D = {rep.D!r} (binding column {rep.column})", file=sys.stderr)
        return 0
    raise InputError("give --spin FILE or --continuum FILE")


# --- samplers ---------------------------------------------------------------------


def _continuum_spec(args):
    if args.spec:
        return ContinuumGibbsSpec.from_json(load_json(args.spec))
    return ContinuumGibbsSpec(Box.cube(args.half_width, args.dim), args.z)


def cmd_sample_ppp(args):
    spec = _continuum_spec(args)
    rng = rng_for(args.seed)
    confs = [sample_ppp(spec.box, spec.z, rng) for _ in range(args.n)]
    path = out_path(args.out)
    if path in (None, "-"):
        write_ldjson(confs, sys.stdout)
    else:
        with open(path, "w") as fh:
            write_ldjson(confs, fh)
    return 0


def cmd_sample_gibbs(args):
    spec = _continuum_spec(args)
    out = run_birth_death(spec, args.samples, rng_for(args.seed), args.burn, args.thin)
    path = out_path(args.out)
    if path in (None, "-"):
        write_ldjson(out, sys.stdout, out.steps)
    else:
        with open(path, "w") as fh:
            write_ldjson(out, fh, out.steps)
    return 0


# --- verify -----------------------------------------------------------------------


def _emit(report, args):
    text = report.dumps(timestamp=not args.no_timestamp)
    write_text(args.out, text)
    if args.trace:
        with open(out_path(args.trace), "w") as fh:
            V.write_trace_csv(report, fh)
    print(report.table(), file=sys.stderr)
    if report.verdict == V.FAIL:
        return 1
    if report.verdict == V.INAPPLICABLE:
        return 2
    return 0


def _verify(args):
    kind = args.check
    if kind == "w1h":
        if args.spec:
            spin = SpinGibbsSpec.from_json(load_json(args.spec))
            mu = gibbs_exact(spin).measure
            metric = MetricSpec.hamming()
        else:
            if args.poisson is None:
                raise InputError("verify w1h needs --poisson L or --spec FILE")
            mu = poisson(args.poisson, policy="renormalize")
            metric = MetricSpec.euclidean()
        if args.alpha:
            alpha = dev.from_json(load_json(args.alpha))
        elif args.spec:
            raise InputError("verify w1h --spec needs --alpha FILE")
        else:
            alpha = dev.PoissonH(args.poisson)
        scale = args.scale

        def lhs(W):
            return float(alpha(scale * W))
        return V.sweep_w1h("w1h", mu, lhs, metric, args.trials, args.seed, threads=args.threads)
    if kind == "laplace":
        return V.check_laplace_bound(args.masses, args.phi, args.lambdas, args.trials, args.seed)
    if kind == "concentration":
        r_grid = args.r
        if args.spec:
            spec = ContinuumGibbsSpec.from_json(load_json(args.spec))
            up = spec.box.upper
            if not (np.allclose(up, -spec.box.lower) and np.allclose(up, up[0])):
                raise InputError("Monte Carlo concentration needs a box [-N, N]^d")
            N = float(spec.box.upper[0])
            d = spec.box.d
            D = dobrushin_continuum(spec)
            out = run_birth_death(spec, args.samples, rng_for(args.seed), args.burn, args.thin)
            F = out.integrate(lambda p: np.prod(np.cos(2 * np.pi * p), axis=1)) / (2 * N) ** d
            return V.check_concentration_mc(F, V.poissonian_bound(N, d, 1.0, D, spec.z), r_grid)
        if args.poisson is None:
            raise InputError("verify concentration needs --poisson M or --spec FILE")
        law = poisson(args.poisson, policy="renormalize", eps_trunc=1e-18)
        return V.check_concentration_exact(law, dev.PoissonH(args.poisson), r_grid, center=args.poisson)
    if kind == "mixture":
        spec = MixedPoissonSpec.from_json(load_json(args.spec))
        return V.check_mixture_bound(spec, args.trials, args.seed, threads=args.threads)
    if kind == "poincare":
        spin = SpinGibbsSpec.from_json(load_json(args.spec))
        return V.check_poincare(spin, args.trials, args.seed, threads=args.threads)
    if kind == "theorem34":
        spin = SpinGibbsSpec.from_json(load_json(args.spec))
        return V.check_theorem34(spin, args.trials, args.seed, threads=args.threads)
    if kind == "theorem41":
        spec = ContinuumGibbsSpec.from_json(load_json(args.spec))
        grid = uniform_grid(spec.box, args.cells)
        return V.check_theorem41(spec, grid, args.trials, args.seed, K=args.K, threads=args.threads)
    raise InputError(f"unknown check {kind}")


def cmd_verify(args):
    if args.spec is None and args.check in ("mixture", "poincare", "theorem34", "theorem41"):
        raise InputError(f"verify {args.check} needs --spec FILE")
    return _emit(_verify(args), args)


# --- parser -----------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="transineq", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("deviation", help="evaluate deviation functions and conjugates")
    d.add_argument("--poisson-h", type=float, metavar="C")
    d.add_argument("--quadratic", type=float, metavar="A")
    d.add_argument("--spec", help="deviation function JSON")
    d.add_argument("--mix-with", metavar="FILE", help="beta JSON; output the mixture combination")
    d.add_argument("--M", type=float, default=1.0)
    d.add_argument("--eval", type=float, action="append")
    d.add_argument("--conj", type=float, action="append")
    d.add_argument("--table", metavar="CSV")
    d.add_argument("--json", metavar="FILE")
    d.add_argument("--r-max", type=float, default=10.0)
    d.add_argument("--n-grid", type=int, default=1024)
    d.set_defaults(func=cmd_deviation)

    for name, func, hlp in (("w1", cmd_w1, "exact W1 distance"),
                            ("entropy", cmd_entropy, "relative entropy H(nu|mu)")):
        w = sub.add_parser(name, help=hlp)
        w.add_argument("--poisson", type=float, action="append", metavar="LAMBDA",
                       help="Poisson parameter; give twice (nu, then mu)")
        w.add_argument("--K", type=int)
        w.add_argument("--nu")
        w.add_argument("--mu")
        if name == "w1":
            w.add_argument("--metric", choices=("euclidean", "hamming"), default="euclidean")
            w.add_argument("--plan", metavar="CSV")
            w.add_argument("--duals", metavar="CSV")
        w.set_defaults(func=func)

    b = sub.add_parser("dobrushin", help="Dobrushin constant")
    b.add_argument("--spin", metavar="FILE")
    b.add_argument("--continuum", metavar="FILE")
    b.add_argument("--out", default="-")
    b.set_defaults(func=cmd_dobrushin)

    for name, func in (("sample-ppp", cmd_sample_ppp), ("sample-gibbs", cmd_sample_gibbs)):
        s = sub.add_parser(name, help="write sampled configurations as line-delimited JSON")
        s.add_argument("--spec", metavar="FILE", help="continuum model JSON")
        s.add_argument("--z", type=float, default=1.0)
        s.add_argument("--half-width", type=float, default=0.5)
        s.add_argument("--dim", type=int, default=1)
        s.add_argument("--seed", type=int, required=True)
        s.add_argument("--out", default="-")
        if name == "sample-ppp":
            s.add_argument("--n", type=int, default=1)
        else:
            s.add_argument("--samples", type=int, default=1000)
            s.add_argument("--burn", type=int, default=10_000, help="burn-in sweeps")
            s.add_argument("--thin", type=int, default=10, help="sweeps between kept samples")
        s.set_defaults(func=func)

    v = sub.add_parser("verify", help="run an inequality check")
    v.add_argument("check", choices=("w1h", "laplace", "concentration", "mixture", "poincare",
                                     "theorem34", "theorem41"))
    v.add_argument("--spec", metavar="FILE")
    v.add_argument("--seed", type=int, required=True)
    v.add_argument("--trials", type=int, default=1000)
    v.add_argument("--threads", type=int, default=1)
    v.add_argument("--out", default="-")
    v.add_argument("--trace", metavar="CSV")
    v.add_argument("--no-timestamp", action="store_true")
    v.add_argument("--poisson", type=float, metavar="LAMBDA")
    v.add_argument("--alpha", metavar="FILE", help="deviation function JSON (w1h)")
    v.add_argument("--scale", type=float, default=1.0, help="w1h checks alpha(scale * W1)")
    v.add_argument("--masses", type=float, nargs="+", default=[0.3, 0.5, 0.2])
    v.add_argument("--phi", type=float, nargs="+", default=[1.0, 0.5, 2.0])
    v.add_argument("--lambdas", type=float, nargs="+",
                   default=[round(0.1 * k, 10) for k in range(1, 21)])
    v.add_argument("--r", type=float, nargs="+", default=[float(k) for k in range(0, 11)])
    v.add_argument("--samples", type=int, default=100_000)
    v.add_argument("--burn", type=int, default=10_000)
    v.add_argument("--thin", type=int, default=10)
    v.add_argument("--cells", type=int, nargs="+", default=[2])
    v.add_argument("--K", type=int)
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, DomainError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
