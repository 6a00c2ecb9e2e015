"""Command-line front end: every analysis as a subcommand with JSON output.

Exit codes: 0 success, 2 undetermined or no certificate, 1 error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

import numpy as np

from . import geodesic_flow as gf
from . import limit_objects as lo
from . import projgeo as pg
from . import schottky as sk
from .asymptotics import UNDETERMINED, Bounded, NotRealDiagonalizable, NotSimple, classify_iterates
from .serialize import dumps

OK, FAILED, INCONCLUSIVE = 0, 1, 2

# the certified pair: j(Diag(2, 1/2)), j([[5/4, 3/4], [3/4, 5/4]])
DEFAULT_CONFIG = {
    "generators": [{"sl2": [[2.0, 0.0], [0.0, 0.5]]}, {"sl2": [[1.25, 0.75], [0.75, 1.25]]}],
    "seed": 0,
    "exponents": [4, 4],
    "tube_radius": 0.375,
}


class UsageError(ValueError):
    pass


def _numbers(text: str, n: int | tuple[int, ...], what: str) -> np.ndarray:
    try:
        vals = np.array([float(v) for v in text.replace(";", ",").split(",") if v.strip()])
    except ValueError as exc:
        raise UsageError("%s: not a comma separated list of numbers" % what) from exc
    sizes = (n,) if isinstance(n, int) else n
    if vals.size not in sizes:
        raise UsageError("%s: expected %s numbers, got %d" % (what, " or ".join(map(str, sizes)), vals.size))
    return vals


def _element(args) -> pg.GroupElement:
    if args.pgl3:
        return pg.GroupElement(_numbers(args.pgl3, 9, "--pgl3").reshape(3, 3))
    if args.sl2:
        return pg.embed_j(_numbers(args.sl2, 4, "--sl2").reshape(2, 2))
    raise UsageError("give --pgl3 or --sl2")


def _flag(text: str, what: str = "--flag") -> pg.Flag:
    return pg.Flag.from_array(_numbers(text, 6, what))


def _group(args) -> sk.SchottkyGroup:
    """Group from --config (default: the certified pair); --seed overrides.

    With exponents and tube radius already given no certification is run.
    """
    source = args.config if args.config else DEFAULT_CONFIG
    cfg = sk.load_config(source)
    seed = cfg["seed"] if args.seed is None else args.seed
    exps = cfg.get("exponents")
    rho = args.radius if args.radius is not None else cfg.get("tube_radius")
    if exps is not None and rho is not None:
        gens = sk.validate_generators(cfg["matrices"], cfg["kinds"])
        return sk.build_group(gens, exps, rho, None, args.density, seed)
    group = sk.group_from_config(source, args.rmax, args.density, args.radius)
    return dataclasses.replace(group, seed=seed)


def _emit(obj) -> None:
    sys.stdout.write(dumps(obj) + "\n")


# ---------------------------------------------------------------------------
# subcommands


def cmd_classify(args) -> int:
    g = _element(args)
    try:
        r = classify_iterates(g)
    except NotRealDiagonalizable as exc:
        _emit({"type": "not_real_diagonalizable", "reason": str(exc)})
        return OK
    if isinstance(r, Bounded):
        _emit({"type": "bounded"})
    elif isinstance(r, NotSimple):
        _emit({"type": "not_simple"})
    else:
        _emit({"type": r.type.value, "loxodromic": r.loxodromic})
    return OK


def cmd_lox_objects(args) -> int:
    _emit(lo.lox_objects(_element(args)))
    return OK


def _sequence(args):
    if args.model:
        return lo.model_sequence(args.model), lo.MODEL_PROBES[args.model]
    g = _element(args)
    return (lambda n: g ** n), lo.DEFAULT_N_PROBE


def _target(args):
    given = [a for a in (args.flag, args.point, args.line) if a]
    if len(given) != 1:
        raise UsageError("give exactly one of --flag, --point, --line")
    if args.flag:
        return _flag(args.flag)
    if args.point:
        return pg.ProjPoint(*_numbers(args.point, 3, "--point"))
    return pg.ProjLine(*_numbers(args.line, 3, "--line"))


def cmd_predict(args) -> int:
    seq, n_probe = _sequence(args)
    try:
        objs = lo.objects_of_sequence(seq, n_probe)
    except lo.NonConvergent as exc:
        _emit({"result": "undetermined", "reason": str(exc)})
        return INCONCLUSIVE
    _emit({"objects": objs, "dynamic_set": lo.predict_dynamic_set(objs, _target(args))})
    return OK


def cmd_verify_dynamics(args) -> int:
    models = (args.model,) if args.model else ("balanced", "alpha", "beta")
    res = lo.verify_models(models, trials=args.trials, seed=args.seed or 0)
    rows = [dict(model=r.model, clause=r.clause, metric=r.metric, value=r.value,
                 tolerance=r.tolerance, passed=r.passed) for r in res]
    _emit({"clauses": rows, "passed": all(r.passed for r in res)})
    return OK if all(r.passed for r in res) else FAILED


def cmd_certify(args) -> int:
    source = args.config if args.config else DEFAULT_CONFIG
    cfg = sk.load_config(source)
    gens = sk.validate_generators(cfg["matrices"], cfg["kinds"])
    rho = args.radius if args.radius is not None else None
    try:
        if args.exponents:
            exps = [int(v) for v in _numbers(args.exponents, len(gens), "--exponents")]
            if rho is None:
                raise UsageError("--exponents needs --radius")
            cert = sk.certify_pingpong(gens, exps, rho, args.density)
        else:
            grid = sk.DEFAULT_RADIUS_GRID if rho is None else (rho,)
            _, _, cert = sk.search_exponents(gens, args.rmax, grid, args.density)
    except sk.NoCertificateFound as exc:
        _emit({"result": "no_certificate", "r_max": exc.r_max})
        return INCONCLUSIVE
    _emit(cert)
    return OK if isinstance(cert, sk.PingPongCertificate) else INCONCLUSIVE


def cmd_limitset(args) -> int:
    group = _group(args)
    ls = sk.limit_set(group, args.depth, args.samples, workers=args.workers)
    if args.out:
        sk.write_limit_csv(ls, args.out)
        _emit({"depth": ls.depth, "entries": len(ls.entries), "samples": int(ls.cloud.points.shape[0]),
               "seed": group.seed, "csv": args.out})
    else:
        sk.write_limit_csv(ls, sys.stdout)
    return OK


def cmd_reduce(args) -> int:
    group = _group(args)
    x = _flag(args.flag)
    try:
        w, u = sk.reduce_to_fundamental_domain(group, x, args.max_steps)
    except sk.NearLimitSet as exc:
        _emit({"result": "undetermined", "reason": exc.reason, "word": str(exc.word or sk.Word(())),
               "flag": exc.flag})
        return INCONCLUSIVE
    _emit({"result": "in_omega", "word": str(w), "flag": u})
    return OK


def _fate_json(f) -> dict:
    if isinstance(f, gf.Escapes):
        return {"fate": "escapes", "limit": f.limit}
    if isinstance(f, gf.Recurrent):
        return {"fate": "recurrent"}
    return {"fate": "undetermined"}


def cmd_fate(args) -> int:
    group = _group(args)
    x = _flag(args.flag)
    by_limit = gf.geodesic_fate(group, x, args.depth, args.eps, args.backward)
    out = {"fibration": _fate_json(by_limit)}
    if args.orbit or args.out:
        if args.backward:
            raise UsageError("the quotient orbit is simulated forward only")
        out["orbit"] = _fate_json(gf.fate_by_orbit(group, x, args.t, args.dt))
        if args.out:
            try:
                gf.write_trajectory_csv(args.out, gf.quotient_orbit(group, x, args.t, args.dt))
                out["trajectory_csv"] = args.out
            except sk.NearLimitSet:
                out["trajectory_csv"] = None  # reduction lost accuracy; nothing written
    _emit(out)
    return INCONCLUSIVE if by_limit is UNDETERMINED else OK


def _generic_oriented(rng: np.random.Generator) -> pg.OrientedFlag:
    while True:
        f = pg.OrientedFlag.from_basis(rng.normal(size=3), rng.normal(size=3))
        if gf.fixed_set_distance(f.to_array()[None])[0] > 0.1:
            return f


def cmd_lyapunov(args) -> int:
    if args.flag:
        p = pg.OrientedFlag.from_array(_numbers(args.flag, 6, "--flag"))
    else:
        p = _generic_oriented(np.random.default_rng(0 if args.seed is None else args.seed))
    est = gf.lyapunov(p, args.direction, args.t, args.dt, args.backward)
    if args.out:
        gf.write_exponent_json(args.out, p, args.direction or "all", args.t, args.dt, est)
    _emit({"point": p, "T": args.t, "dt": args.dt, "backward": args.backward,
           "direction": args.direction or "all", "estimate": est})
    return OK


def cmd_charts(args) -> int:
    if args.coords:
        c = _numbers(args.coords, 3, "--coords")
        f = gf.chart1(c) if args.chart == 1 else gf.chart2(c)
        out = {"chart": args.chart, "coords": c, "flag": f,
               "conjugated_flow": gf.conjugated_flow_in_chart(args.chart, args.t)}
        try:
            other = gf.chart2_inv_of_chart1(c) if args.chart == 1 else gf.chart1_inv_of_chart2(c)
            out["other_chart_coords"] = other
        except gf.OutOfChartDomain:
            out["other_chart_coords"] = None
        try:
            out["flowed_coords"] = gf.chart_flow(args.chart, args.t, c)
        except gf.OutOfChartDomain:
            out["flowed_coords"] = None
        _emit(out)
        return OK
    if args.flag:
        f = pg.OrientedFlag.from_array(_numbers(args.flag, 6, "--flag"))
        inv = gf.chart1_inv if args.chart == 1 else gf.chart2_inv
        _emit({"chart": args.chart, "flag": f, "coords": inv(f, strict=True)})
        return OK
    raise UsageError("give --coords or --flag")


# ---------------------------------------------------------------------------
# parser


def _common() -> argparse.ArgumentParser:
    # one instance per subcommand: parents share action objects, so per-command
    # defaults would otherwise leak between subcommands
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="group config JSON file")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out", help="output file for CSV or JSON artifacts")
    common.add_argument("--depth", type=int, default=4)
    common.add_argument("--density", type=float, default=0.05)
    common.add_argument("--rmax", type=int, default=16)
    common.add_argument("--radius", type=float, default=None)
    common.add_argument("--t", type=float, default=40.0)
    common.add_argument("--dt", type=float, default=0.05)
    common.add_argument("--workers", type=int, default=None)
    return common


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="flagdyn", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        s = sub.add_parser(name, parents=[_common()], help=help_)
        s.set_defaults(fn=fn)
        return s

    def matrix(s):
        s.add_argument("--pgl3", help="9 numbers, row major")
        s.add_argument("--sl2", help="4 numbers, row major, embedded block diagonally")

    s = add("classify", cmd_classify, "asymptotic type of the iterates")
    matrix(s)
    s = add("lox-objects", cmd_lox_objects, "limit objects of a loxodromic element")
    matrix(s)
    s = add("predict", cmd_predict, "predicted dynamic set of a point, line or flag")
    matrix(s)
    s.add_argument("--model", choices=("balanced", "alpha", "beta"))
    s.add_argument("--flag")
    s.add_argument("--point")
    s.add_argument("--line")
    s = add("verify-dynamics", cmd_verify_dynamics, "empirical check of every dynamic-set clause")
    s.add_argument("--model", choices=("balanced", "alpha", "beta"))
    s.add_argument("--trials", type=int, default=200)
    s = add("certify", cmd_certify, "ping-pong certificate for a generator set")
    s.add_argument("--exponents", help="fixed exponents, comma separated")
    s = add("limitset", cmd_limitset, "limit-set point cloud as CSV")
    s.add_argument("--samples", type=int, default=None, help="samples per circle")
    s = add("reduce", cmd_reduce, "reduce a flag to the fundamental domain")
    s.add_argument("--flag", required=True)
    s.add_argument("--max-steps", type=int, default=100)
    s = add("fate", cmd_fate, "forward or backward fate of a geodesic")
    s.add_argument("--flag", required=True)
    s.add_argument("--eps", type=float, default=1e-3)
    s.add_argument("--backward", action="store_true")
    s.add_argument("--orbit", action="store_true", help="also simulate the quotient orbit")
    s.set_defaults(t=60.0, dt=0.5)
    s = add("lyapunov", cmd_lyapunov, "growth rates of the flow")
    s.add_argument("--flag", help="oriented flag: direction and conormal")
    s.add_argument("--direction", choices=("c", "alpha", "beta"))
    s.add_argument("--backward", action="store_true")
    s = add("charts", cmd_charts, "chart maps and transitions")
    s.add_argument("--chart", type=int, choices=(1, 2), default=1)
    s.add_argument("--coords")
    s.add_argument("--flag")
    s.set_defaults(t=1.0)
    return p


def main(argv=None) -> int:
    p = build_parser()
    args = p.parse_args(argv)
    try:
        return args.fn(args)
    except (sk.ConfigError, UsageError) as exc:
        sys.stderr.write("flagdyn %s: %s\n" % (args.command, exc))
        return FAILED
    except (ValueError, RuntimeError, TypeError) as exc:
        sys.stderr.write("flagdyn %s: %s: %s\n" % (args.command, type(exc).__name__, exc))
        return FAILED


if __name__ == "__main__":
    sys.exit(main())
