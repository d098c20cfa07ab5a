"""Command-line driver for generation, queries, synthesis, and checking.

Exit codes: 0 on success, 1 when a checker or synthesis audit reports a
violation, 2 on bad input.  Identical flags and seed give byte-identical
JSON output, except for the timestamp field in aggregate reports (disable
it with --no-timestamp when comparing runs).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass

from . import domain as domain_mod
from . import verify
from .deform import DeformedDomain, parse_quadrature
from .domain import DomainError, estimate_metric_constants
from .synthesis import predicted_vs_measured, synthesize
from .weight import WeightFunction, derive_constants


@dataclass
class RunConfig:
    """Validated run parameters shared by the analysis subcommands."""

    domain_spec: str
    weight_spec: str
    quad: int
    samples: int
    seed: int
    tol_factor: float | None
    out: str | None

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("sample budget must be at least 1")
        if self.tol_factor is not None and self.tol_factor < 1.0:
            raise ValueError("tolerance factor must be at least 1")

    @property
    def tolerance(self):
        """Additive tolerance (the factor minus one), or None for auto."""
        if self.tol_factor is None:
            return None
        return self.tol_factor - 1.0


def _config_from_args(args):
    tol = None
    if args.tol not in (None, "auto"):
        tol = float(args.tol)
    return RunConfig(
        domain_spec=args.domain,
        weight_spec=args.weight,
        quad=parse_quadrature(args.quad),
        samples=args.samples,
        seed=args.seed,
        tol_factor=tol,
        out=getattr(args, "out", None),
    )


def _load_domain(spec):
    if os.path.exists(spec):
        return domain_mod.load_domain(spec)
    if ":" in spec or spec in ("half_plane", "strip", "slit_plane"):
        return domain_mod.generate_domain(spec)
    raise DomainError(f"{spec!r} is neither a domain file nor a generator spec")


def _resolve_vertex(dom, text):
    """Vertex reference: ``id:<n>`` or ``x,y`` snapped to the nearest vertex."""
    text = text.strip()
    if text.startswith("id:"):
        vid = int(text[3:])
        dom.index(vid)
        return vid
    parts = text.split(",")
    if len(parts) != 2:
        raise DomainError(
            f"bad vertex reference {text!r}; use 'x,y' coordinates or 'id:N'"
        )
    return dom.nearest_vertex(float(parts[0]), float(parts[1]))


def _bundle_for(dd, args, config):
    """Constants bundle from explicit --cu/--cq or an empirical estimate."""
    cu, cq = args.cu, args.cq
    info = {}
    if cu is None or cq is None:
        est = estimate_metric_constants(
            dd.domain, dd.field, n_pairs=min(2 * config.samples, 400),
            seed=config.seed,
        )
        cu = cu if cu is not None else est.cu
        cq = cq if cq is not None else est.cq
        info["estimated"] = {"cu": est.cu, "cq": est.cq, "pairs": est.n_pairs}
    return derive_constants(dd.weight, cu, cq), info


def _emit(payload, out_path):
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _build_deformed(config):
    dom = _load_domain(config.domain_spec)
    weight = WeightFunction.parse(config.weight_spec)
    return DeformedDomain(dom, weight, quadrature=config.quad)


# -- subcommand handlers ------------------------------------------------------


def cmd_generate(args):
    dom = domain_mod.generate_domain(args.spec)
    if args.out:
        dom.save(args.out)
    else:
        _emit(dom.to_dict(), None)
    return 0


def cmd_distance(args):
    config = _config_from_args(args)
    dd = _build_deformed(config)
    x = _resolve_vertex(dd.domain, args.frm)
    if args.to.strip().lower() == "inf":
        est = dd.dist_to_infinity(x)
        _emit(est.to_dict(), config.out)
        return 0
    y = _resolve_vertex(dd.domain, args.to)
    record = {
        "x": x, "y": y,
        "d": dd.domain.distance(x, y),
        "d_phi": dd.dphi_distance(x, y),
    }
    _emit(record, config.out)
    return 0


def cmd_geodesic(args):
    config = _config_from_args(args)
    dd = _build_deformed(config)
    x = _resolve_vertex(dd.domain, args.frm)
    if args.to.strip().lower() == "inf":
        bundle, _ = _bundle_for(dd, args, config)
        result = synthesize(dd, bundle, x, to_infinity=True)
        record = result.curve.to_dict()
        record.update(x=x, y="inf", d_phi_interval=[result.curve.estimate.lower,
                                                    result.curve.estimate.upper])
        _emit(record, config.out)
        return 0
    y = _resolve_vertex(dd.domain, args.to)
    curve = dd.dphi_geodesic(x, y)
    record = {
        "x": x, "y": y,
        "d": dd.domain.distance(x, y),
        "d_phi": curve.total_phi,
        "geodesic": curve.vertex_ids,
    }
    _emit(record, config.out)
    return 0


def cmd_constants(args):
    weight = WeightFunction.parse(args.weight)
    if args.cu is not None and args.cq is not None:
        bundle = derive_constants(weight, args.cu, args.cq)
        _emit(bundle.to_dict(), args.out)
        return 0
    if args.domain is None:
        raise DomainError("constants needs either --cu and --cq or --domain")
    config = _config_from_args(args)
    dd = _build_deformed(config)
    bundle, info = _bundle_for(dd, args, config)
    payload = bundle.to_dict()
    payload.update(info)
    _emit(payload, config.out)
    return 0


def cmd_synthesize(args):
    config = _config_from_args(args)
    dd = _build_deformed(config)
    bundle, _ = _bundle_for(dd, args, config)
    x = _resolve_vertex(dd.domain, args.frm)
    if args.to.strip().lower() == "inf":
        result = synthesize(dd, bundle, x, to_infinity=True)
    else:
        y = _resolve_vertex(dd.domain, args.to)
        result = synthesize(dd, bundle, x, y)
    payload = result.to_dict()
    payload["curve"] = result.curve.to_dict()
    _emit(payload, config.out)
    return 0


def cmd_check(args):
    config = _config_from_args(args)
    dd = _build_deformed(config)
    bundle, info = _bundle_for(dd, args, config)
    names = None
    if args.checks and args.checks != "all":
        names = [c.strip() for c in args.checks.split(",") if c.strip()]
    reports = verify.run_all_checks(
        dd, bundle, checks=names, n_samples=config.samples,
        seed=config.seed, tolerance=config.tolerance,
    )
    payload = verify.aggregate_report(
        dd, bundle, reports, seed=config.seed, tolerance=config.tolerance,
        include_timestamp=not args.no_timestamp,
    )
    payload.update(info)
    _emit(payload, config.out)
    return 1 if payload["violations_total"] > 0 else 0


def cmd_report(args):
    config = _config_from_args(args)
    dd = _build_deformed(config)
    bundle, info = _bundle_for(dd, args, config)
    out_dir = config.out or "."
    os.makedirs(out_dir, exist_ok=True)
    reports = verify.run_all_checks(
        dd, bundle, n_samples=config.samples, seed=config.seed,
        tolerance=config.tolerance,
    )
    aggregate = verify.aggregate_report(
        dd, bundle, reports, seed=config.seed, tolerance=config.tolerance,
        include_timestamp=not args.no_timestamp,
    )
    aggregate.update(info)
    synth = predicted_vs_measured(
        dd, bundle, n_pairs=config.samples, n_to_infinity=args.inf_queries,
        seed=config.seed, tolerance=config.tolerance,
    )
    with open(os.path.join(out_dir, "aggregate.json"), "w") as fh:
        fh.write(json.dumps(aggregate, sort_keys=True, indent=2) + "\n")
    with open(os.path.join(out_dir, "checks.csv"), "w") as fh:
        fh.write(verify.report_csv(reports))
    with open(os.path.join(out_dir, "synthesis.json"), "w") as fh:
        fh.write(json.dumps(synth, sort_keys=True, indent=2) + "\n")
    bad = aggregate["violations_total"] > 0 or bool(synth["summary"]["flags"])
    return 1 if bad else 0


# -- parser --------------------------------------------------------------------


def _add_common(sub, domain_required=True, vertex_args=False):
    sub.add_argument("--domain", required=domain_required,
                     help="domain JSON file or generator spec like "
                          "half_plane:width=40,depth=40,h=0.1,conn=8")
    sub.add_argument("--weight", required=True,
                     help="weight spec: power:beta=2, powerlog:beta=2,kappa=1, "
                          "or table:@file.json")
    sub.add_argument("--quad", default="subdivided:4",
                     help="edge quadrature: trapezoid or subdivided:k")
    sub.add_argument("--samples", type=int, default=200,
                     help="sample budget for estimates and checks")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--tol", default="auto",
                     help="tolerance factor (>= 1), default 1 + 10h")
    sub.add_argument("--out", default=None, help="output file (or directory "
                                                 "for report)")
    sub.add_argument("--cu", type=float, default=None,
                     help="override the uniformity constant")
    sub.add_argument("--cq", type=float, default=None,
                     help="override the quasiconvexity constant")
    if vertex_args:
        sub.add_argument("--from", dest="frm", required=True,
                         help="vertex: 'x,y' (snapped) or 'id:N'")
        sub.add_argument("--to", required=True,
                         help="vertex like --from, or 'inf'")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="confdeform",
        description="Deform boundary-marked metric graphs by a weight of the "
                    "distance to the boundary; query, synthesize uniform "
                    "curves, and check the quantitative inequalities.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    gen = subs.add_parser("generate", help="write a generated domain as JSON")
    gen.add_argument("--spec", required=True,
                     help="generator spec, e.g. half_plane:width=40,depth=40,h=0.1")
    gen.add_argument("--out", default=None)
    gen.set_defaults(func=cmd_generate)

    dist = subs.add_parser("distance", help="base and deformed distances")
    _add_common(dist, vertex_args=True)
    dist.set_defaults(func=cmd_distance)

    geo = subs.add_parser("geodesic", help="deformed-metric geodesic")
    _add_common(geo, vertex_args=True)
    geo.set_defaults(func=cmd_geodesic)

    cons = subs.add_parser("constants", help="derived constants bundle")
    cons.add_argument("--weight", required=True)
    cons.add_argument("--cu", type=float, default=None)
    cons.add_argument("--cq", type=float, default=None)
    cons.add_argument("--domain", default=None,
                      help="estimate cu/cq from this domain when not given")
    cons.add_argument("--quad", default="subdivided:4")
    cons.add_argument("--samples", type=int, default=200)
    cons.add_argument("--seed", type=int, default=0)
    cons.add_argument("--tol", default="auto")
    cons.add_argument("--out", default=None)
    cons.set_defaults(func=cmd_constants)

    syn = subs.add_parser("synthesize", help="produce a candidate uniform curve")
    _add_common(syn, vertex_args=True)
    syn.set_defaults(func=cmd_synthesize)

    chk = subs.add_parser("check", help="run the inequality checkers")
    _add_common(chk)
    chk.add_argument("--checks", default="all",
                     help="comma-separated checker names, or 'all'")
    chk.add_argument("--no-timestamp", action="store_true",
                     help="omit the timestamp for byte-identical reruns")
    chk.set_defaults(func=cmd_check)

    rep = subs.add_parser("report", help="full report bundle into a directory")
    _add_common(rep)
    rep.add_argument("--inf-queries", type=int, default=20,
                     help="point-to-infinity synthesis samples")
    rep.add_argument("--no-timestamp", action="store_true")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
