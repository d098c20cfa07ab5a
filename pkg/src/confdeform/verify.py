"""Numerical checkers for the quantitative inequalities of the deformation.

Each checker samples points, pairs, or curves, evaluates one family of
inequalities, and returns a :class:`CheckReport`.  Ratios are always
oriented so that values at most 1 mean the inequality holds with room to
spare; a sample counts as a violation only when its ratio exceeds the
tolerance factor ``1 + tolerance``.  Checkers never raise on a violation:
they record witnesses and report.

Sampling is stratified by dyadic shell so that the deep shells, where the
interesting inequalities live, are represented despite holding few
vertices.  Every checker is deterministic given its seed.
"""

from __future__ import annotations

import csv
import io
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _graphs
from .curves import subcurve_excess_ratio
from .synthesis import uniform_curve_d


@dataclass
class CheckReport:
    name: str
    samples: int
    violations: int
    worst_ratio: float
    tolerance: float
    seed: int
    excluded: int = 0
    witnesses: list = field(default_factory=list)
    notes: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "name": self.name,
            "samples": self.samples,
            "excluded": self.excluded,
            "violations": self.violations,
            "worst_ratio": self.worst_ratio,
            "tolerance": self.tolerance,
            "seed": self.seed,
            "witnesses": self.witnesses,
            "notes": self.notes,
        }


CHECK_NAMES = (
    "crossing_levels", "nearby_points", "dist_to_infty", "dist_pip_bdy",
    "large_bound", "boundary_identification", "separation_from_infinity",
)

_MAX_WITNESSES = 10


def default_tolerance(dd):
    """Global tolerance: ten mesh sizes (a factor 1 + 10h)."""
    return 10.0 * dd.domain.mesh_size


def _record(witnesses, entry):
    if len(witnesses) < _MAX_WITNESSES:
        witnesses.append(entry)


def _shell_groups(dd, min_shell=0, deep_side=False):
    """Interior vertex indices grouped by shell, optionally only the deeper
    quarter of each shell (distance at least three quarters of the shell
    top)."""
    shells = dd.field.shells
    values = dd.field.values
    interior = np.nonzero(~dd.domain.boundary_mask)[0]
    groups = []
    for s in range(min_shell, int(shells[interior].max()) + 1):
        members = interior[shells[interior] == s]
        if deep_side and s >= 1:
            members = members[values[members] >= 0.75 * 2.0 ** s]
        if members.size:
            groups.append((s, members))
    return groups


def _stratified_pick(groups, rng, count, start=0):
    picks = []
    gi = start
    while len(picks) < count:
        _, members = groups[gi % len(groups)]
        picks.append(int(rng.choice(members)))
        gi += 1
    return picks


# -- individual checkers -----------------------------------------------------


def check_crossing_levels(dd, n_samples=200, seed=0, tolerance=None):
    """Curves meeting both shell m and shell m+2 are at least as long as
    the crossing bound ``2**m * phi(2**m) / c_phi**2`` in the deformed
    metric.  Samples mix deformed geodesics with seeded random walks."""
    if tolerance is None:
        tolerance = default_tolerance(dd)
    rng = np.random.default_rng(seed)
    shells = dd.field.shells
    weight = dd.weight
    cphi2 = weight.c_phi ** 2
    adj = dd.adjacency_phi_interior
    groups = _shell_groups(dd)
    witnesses = []
    samples = excluded = violations = 0
    worst = 0.0

    curves = []
    n_geo = n_samples // 2
    n_sources = max(1, n_geo // 10)
    sources = _stratified_pick(groups, rng, n_sources)
    per_src = max(1, n_geo // n_sources)
    for s in sources:
        dist = _graphs.distances_from(adj, s)
        targets = _stratified_pick(groups, rng, per_src)
        for t in targets:
            if t == s or not np.isfinite(dist[t]):
                continue
            path = _graphs.extract_path(adj, dist, s, t)
            curves.append((path, float(dist[t])))
    n_from_geodesics = len(curves)
    indptr, indices = adj.indptr, adj.indices
    data = adj.data
    while len(curves) < n_samples:
        v = _stratified_pick(groups, rng, 1, start=len(curves))[0]
        steps = int(rng.integers(40, 400))
        walk = [v]
        total = 0.0
        for _ in range(steps):
            lo, hi = indptr[v], indptr[v + 1]
            if hi == lo:
                break
            j = int(rng.integers(lo, hi))
            total += float(data[j])
            v = int(indices[j])
            walk.append(v)
        if len(walk) > 1:
            curves.append((np.asarray(walk, dtype=np.int64), total))

    for path, len_phi in curves:
        s = shells[path]
        lo_shell, hi_shell = int(s.min()), int(s.max())
        tested = False
        for m in range(lo_shell, hi_shell - 1):
            if (s == m).any() and (s == m + 2).any():
                tested = True
                bound = 2.0 ** m * weight.value(2.0 ** m) / cphi2
                ratio = bound / len_phi
                worst = max(worst, ratio)
                if ratio > 1.0 + tolerance:
                    violations += 1
                    _record(witnesses, {
                        "kind": "crossing", "m": m, "len_phi": len_phi,
                        "bound": bound, "ratio": ratio,
                        "start": dd.domain.vertex_id(path[0]),
                        "end": dd.domain.vertex_id(path[-1]),
                    })
        if tested:
            samples += 1
        else:
            excluded += 1
    return CheckReport(
        name="crossing_levels", samples=samples, excluded=excluded,
        violations=violations, worst_ratio=worst, tolerance=tolerance,
        seed=seed, witnesses=witnesses,
        notes={"curves": len(curves), "geodesics": n_from_geodesics},
    )


def check_nearby_points(dd, bundle, n_samples=200, seed=0, tolerance=None):
    """Pairs below the closeness threshold compare the two metrics both
    ways through ``phi(2**m)``, with the constant ``c_a``, plus the sharper
    one-sided form with factor 11/10.

    The threshold shrinks with the shell scale, so shallow shells on a
    coarse grid hold no qualifying pairs; attempts there count as excluded.
    """
    if tolerance is None:
        tolerance = default_tolerance(dd)
    rng = np.random.default_rng(seed)
    weight = dd.weight
    shells = dd.field.shells
    bmask = dd.domain.boundary_mask
    adj_phi = dd.adjacency_phi_interior
    adj_d = dd.domain.adjacency_interior
    thr_coef = min(10.0 / (11.0 * 4.0 * weight.c_phi ** 2),
                   10.0 / (22.0 * bundle.cq ** 2))
    groups = _shell_groups(dd, deep_side=True)
    witnesses = []
    samples = excluded = violations = 0
    worst = 0.0
    attempts = 0
    max_attempts = 8 * n_samples
    while samples < n_samples and attempts < max_attempts:
        # rotate the starting shell so deep shells get their turn even
        # though shallow ones are usually excluded by the threshold
        x = _stratified_pick(groups, rng, 1, start=attempts)[0]
        attempts += 1
        m = int(shells[x])
        scale = weight.value(2.0 ** m) * 2.0 ** m
        thr = thr_coef * scale
        dist_phi = _graphs.distances_from(adj_phi, x, limit=thr)
        cand = np.nonzero(np.isfinite(dist_phi) & (dist_phi > 0) & ~bmask)[0]
        cand = cand[dist_phi[cand] < thr]
        if cand.size == 0:
            excluded += 1
            continue
        take = cand if cand.size <= 3 else rng.choice(cand, size=3, replace=False)
        limit_d = bundle.c_a * thr / weight.value(2.0 ** m) * (1.0 + tolerance) * 1.01
        dist_d = _graphs.distances_from(adj_d, x, limit=limit_d)
        for y in take:
            dphi = float(dist_phi[y])
            d = float(dist_d[y])
            phim = weight.value(2.0 ** m)
            if not np.isfinite(d):
                # the upper comparison already fails at the search limit
                violations += 1
                samples += 1
                worst = np.inf
                _record(witnesses, {
                    "kind": "upper", "x": dd.domain.vertex_id(x),
                    "y": dd.domain.vertex_id(int(y)), "m": m,
                    "d_phi": dphi, "d": None, "ratio": None,
                })
                continue
            r_upper = dphi / (bundle.c_a * phim * d)
            r_lower = phim * d / (bundle.c_a * dphi)
            r_sharp = weight.value(2.0 ** (m + 1)) * d / (1.1 * dphi)
            ratio = max(r_upper, r_lower, r_sharp)
            worst = max(worst, ratio)
            samples += 1
            if ratio > 1.0 + tolerance:
                violations += 1
                _record(witnesses, {
                    "kind": "two-sided", "x": dd.domain.vertex_id(x),
                    "y": dd.domain.vertex_id(int(y)), "m": m,
                    "d_phi": dphi, "d": d, "ratio": ratio,
                })
    branch = "cq<2cphi" if bundle.cq < 2.0 * weight.c_phi else "cq>=2cphi"
    return CheckReport(
        name="nearby_points", samples=samples, excluded=excluded,
        violations=violations, worst_ratio=worst, tolerance=tolerance,
        seed=seed, witnesses=witnesses,
        notes={"threshold_branch": branch, "attempts": attempts},
    )


def check_dist_to_infty(dd, bundle, n_samples=200, seed=0, tolerance=None):
    """Infinity intervals for points in shells m >= n0+2 nest into the
    analytic band [(5/11) tail(m+1), cu*cphi*tail(m-n0)] within tolerance
    and intersect it outright."""
    if tolerance is None:
        tolerance = default_tolerance(dd)
    rng = np.random.default_rng(seed)
    weight = dd.weight
    min_shell = bundle.n0 + 2
    groups = _shell_groups(dd, min_shell=min_shell)
    witnesses = []
    samples = violations = 0
    worst = 0.0
    excluded = 0
    if not groups:
        return CheckReport(
            name="dist_to_infty", samples=0, excluded=0, violations=0,
            worst_ratio=0.0, tolerance=tolerance, seed=seed,
            notes={"reason": f"no interior vertices in shells >= {min_shell}"},
        )
    for x in _stratified_pick(groups, rng, n_samples):
        m = int(dd.field.shells[x])
        est = dd.dist_to_infinity(dd.domain.vertex_id(x))
        band_low = (5.0 / 11.0) * weight.tail_sum(m + 1)
        band_up = bundle.cu * bundle.c_phi * weight.tail_sum(m - bundle.n0)
        ratio = max(
            est.upper / band_up,
            band_low / est.lower,
            est.lower / band_up,
            band_low / est.upper,
        )
        worst = max(worst, ratio)
        samples += 1
        if ratio > 1.0 + tolerance:
            violations += 1
            _record(witnesses, {
                "x": dd.domain.vertex_id(x), "m": m,
                "interval": [est.lower, est.upper],
                "band": [band_low, band_up], "ratio": ratio,
            })
    return CheckReport(
        name="dist_to_infty", samples=samples, excluded=excluded,
        violations=violations, worst_ratio=worst, tolerance=tolerance,
        seed=seed, witnesses=witnesses,
    )


def check_dist_pip_bdy(dd, bundle, n_samples=200, seed=0, tolerance=None):
    """Deformed boundary distance against the shell-sum band.

    Shell-0 points must reproduce the base boundary distance exactly (the
    weight is 1 there); a tiny float allowance stands in for exactness.
    Deeper points land between (50/121) of the inner shell sum and
    cu*cphi times the extended shell sum.
    """
    if tolerance is None:
        tolerance = default_tolerance(dd)
    eps0 = 1e-9
    rng = np.random.default_rng(seed)
    weight = dd.weight
    vals_phi = dd.boundary_field_phi
    vals_d = dd.field.values
    groups = _shell_groups(dd)
    witnesses = []
    samples = violations = 0
    worst = 0.0
    full = weight.tail_sum(0)
    for x in _stratified_pick(groups, rng, n_samples):
        m = int(dd.field.shells[x])
        v = float(vals_phi[x])
        d0 = float(vals_d[x])
        samples += 1
        if m == 0:
            ratio = max(v / d0, d0 / v)
            worst = max(worst, ratio)
            if ratio > 1.0 + eps0:
                violations += 1
                _record(witnesses, {
                    "x": dd.domain.vertex_id(x), "m": 0,
                    "d_omega": d0, "d_phi_bdry": v,
                    "ratio": ratio,
                })
            continue
        low = (50.0 / 121.0) * (full - weight.tail_sum(m))
        up = bundle.cu * bundle.c_phi * (full - weight.tail_sum(m + bundle.n0 + 1))
        ratio = max(low / v, v / up)
        worst = max(worst, ratio)
        if ratio > 1.0 + tolerance:
            violations += 1
            _record(witnesses, {
                "x": dd.domain.vertex_id(x), "m": m, "d_phi_bdry": v,
                "band": [low, up], "ratio": ratio,
            })
    return CheckReport(
        name="dist_pip_bdy", samples=samples, violations=violations,
        worst_ratio=worst, tolerance=tolerance, seed=seed,
        witnesses=witnesses, notes={"shell0_eps": eps0},
    )


def check_large_bound(dd, bundle, n_samples=200, seed=0, tolerance=None):
    """Pairs within shells <= m0 obey the coarse growth bound
    ``c_growth * 2**m * phi(2**m)`` with m the shallower shell."""
    if tolerance is None:
        tolerance = default_tolerance(dd)
    rng = np.random.default_rng(seed)
    weight = dd.weight
    shells = dd.field.shells
    adj = dd.adjacency_phi_interior
    groups = [(s, g) for s, g in _shell_groups(dd) if s <= bundle.m0]
    witnesses = []
    samples = violations = 0
    worst = 0.0
    if not groups:
        return CheckReport(
            name="large_bound", samples=0, violations=0, worst_ratio=0.0,
            tolerance=tolerance, seed=seed,
            notes={"reason": "no shells at or below m0"},
        )
    n_sources = max(2, n_samples // 14)
    sources = _stratified_pick(groups, rng, n_sources)
    per_src = max(1, -(-n_samples // n_sources))
    deepest = int(max(s for s, _ in groups))
    for src in sources:
        dist = _graphs.distances_from(adj, src)
        targets = _stratified_pick(groups, rng, per_src)
        for t in targets:
            if t == src or not np.isfinite(dist[t]):
                continue
            m = int(min(shells[src], shells[t]))
            bound = bundle.c_growth * 2.0 ** m * weight.value(2.0 ** m)
            ratio = float(dist[t]) / bound
            worst = max(worst, ratio)
            samples += 1
            if ratio > 1.0 + tolerance:
                violations += 1
                _record(witnesses, {
                    "x": dd.domain.vertex_id(src), "y": dd.domain.vertex_id(t),
                    "m": m, "d_phi": float(dist[t]), "bound": bound,
                    "ratio": ratio,
                })
    return CheckReport(
        name="large_bound", samples=samples, violations=violations,
        worst_ratio=worst, tolerance=tolerance, seed=seed,
        witnesses=witnesses,
        notes={"deepest_shell_sampled": deepest, "m0": bundle.m0},
    )


def check_boundary_identification(dd, bundle, n_samples=200, seed=0,
                                  tolerance=None):
    """Nearby boundary pairs (base distance at most 1/10) satisfy
    ``d <= d_phi <= cq * d`` with the empirical quasiconvexity constant.

    Distances run on the full graph: curves between boundary points live in
    the closure, where travelling along the boundary is legitimate.
    """
    if tolerance is None:
        tolerance = default_tolerance(dd)
    rng = np.random.default_rng(seed)
    domain = dd.domain
    boundary = domain.boundary_idx
    adj_d = domain.adjacency
    adj_phi = dd.adjacency_phi
    bmask = domain.boundary_mask
    witnesses = []
    samples = excluded = violations = 0
    worst = 0.0
    attempts = 0
    while samples < n_samples and attempts < 6 * n_samples:
        attempts += 1
        z = int(rng.choice(boundary))
        dist_d = _graphs.distances_from(adj_d, z, limit=0.1000001)
        cand = np.nonzero(np.isfinite(dist_d) & (dist_d > 0) & bmask)[0]
        cand = cand[dist_d[cand] <= 0.1]
        if cand.size == 0:
            excluded += 1
            continue
        take = cand if cand.size <= 4 else rng.choice(cand, size=4, replace=False)
        limit_phi = bundle.cq * 0.1 * (1.0 + tolerance) * 1.02
        dist_phi = _graphs.distances_from(adj_phi, z, limit=limit_phi)
        for y in take:
            d = float(dist_d[y])
            dphi = float(dist_phi[y])
            if not np.isfinite(dphi):
                dphi = float(_graphs.distances_from(adj_phi, z)[y])
            r1 = d / dphi
            r2 = dphi / (bundle.cq * d)
            ratio = max(r1, r2)
            worst = max(worst, ratio)
            samples += 1
            if ratio > 1.0 + tolerance:
                violations += 1
                _record(witnesses, {
                    "zeta": domain.vertex_id(z), "eta": domain.vertex_id(int(y)),
                    "d": d, "d_phi": dphi, "ratio": ratio,
                })
    return CheckReport(
        name="boundary_identification", samples=samples, excluded=excluded,
        violations=violations, worst_ratio=worst, tolerance=tolerance,
        seed=seed, witnesses=witnesses, notes={"cq": bundle.cq},
    )


def check_separation_from_infinity(dd, bundle, n_samples=0, seed=0,
                                   tolerance=None):
    """The point at infinity stays at positive deformed distance from every
    boundary vertex.  On generated half-plane domains with a power weight
    the boundary value has the closed form beta/(beta-1); the interval
    midpoint must land within 2 percent plus the interval width.

    All boundary vertices are checked (the sample budget is ignored); the
    frontier distances come from one frontier-rooted sweep on the full
    graph, whose minima agree with the per-vertex queries.
    """
    if tolerance is None:
        tolerance = default_tolerance(dd)
    domain = dd.domain
    if domain.frontier_idx.size == 0:
        return CheckReport(
            name="separation_from_infinity", samples=0, violations=0,
            worst_ratio=0.0, tolerance=tolerance, seed=seed,
            notes={"reason": "no frontier"},
        )
    weight = dd.weight
    dist_fr = _graphs.min_distance_field(dd.adjacency_phi, domain.frontier_idx)
    esc_low = weight.integral_tail(dd.frontier_min_depth)
    esc_high = weight.tail_sum(max(dd.frontier_shell - 1, 0))
    base_low = (5.0 / 11.0) * weight.tail_sum(1)
    witnesses = []
    violations = 0
    worst = 0.0
    lowers = np.maximum(dist_fr[domain.boundary_idx] + esc_low, base_low)
    uppers = dist_fr[domain.boundary_idx] + esc_high
    min_i = int(np.argmin(lowers))
    min_lower = float(lowers[min_i])
    samples = len(lowers)
    if not (min_lower > 0.0) or not np.isfinite(min_lower):
        violations += 1
        worst = np.inf
        _record(witnesses, {
            "kind": "positivity",
            "zeta": domain.vertex_id(domain.boundary_idx[min_i]),
            "lower": min_lower,
        })
    notes = {"min_lower": min_lower}
    if domain.meta.get("generator") == "half_plane" and weight.kind == "power":
        target = weight.beta / (weight.beta - 1.0)
        mid = 0.5 * (min_lower + float(uppers[min_i]))
        width = float(uppers[min_i]) - min_lower
        allowed = 0.02 * target + width
        ratio = abs(mid - target) / allowed
        worst = max(worst, ratio)
        if ratio > 1.0 + tolerance:
            violations += 1
            _record(witnesses, {
                "kind": "closed_form", "midpoint": mid, "target": target,
                "allowed": allowed, "ratio": ratio,
            })
        notes.update(target=target, midpoint=mid, width=width)
    return CheckReport(
        name="separation_from_infinity", samples=samples,
        violations=violations, worst_ratio=worst, tolerance=tolerance,
        seed=seed, witnesses=witnesses, notes=notes,
    )


# -- orchestration -------------------------------------------------------------


def run_all_checks(dd, bundle, checks=None, n_samples=200, seed=0,
                   tolerance=None, threads=None):
    """Run the named checkers (all seven by default) and return the reports
    in the canonical order.  ``CD_THREADS`` (or ``threads``) allows the
    independent checkers to run concurrently."""
    if checks is None:
        checks = CHECK_NAMES
    unknown = set(checks) - set(CHECK_NAMES)
    if unknown:
        raise ValueError(f"unknown checks: {sorted(unknown)}")
    if threads is None:
        threads = int(os.environ.get("CD_THREADS", "1"))
    runners = {
        "crossing_levels": lambda: check_crossing_levels(
            dd, n_samples=n_samples, seed=seed, tolerance=tolerance),
        "nearby_points": lambda: check_nearby_points(
            dd, bundle, n_samples=n_samples, seed=seed, tolerance=tolerance),
        "dist_to_infty": lambda: check_dist_to_infty(
            dd, bundle, n_samples=n_samples, seed=seed, tolerance=tolerance),
        "dist_pip_bdy": lambda: check_dist_pip_bdy(
            dd, bundle, n_samples=n_samples, seed=seed, tolerance=tolerance),
        "large_bound": lambda: check_large_bound(
            dd, bundle, n_samples=n_samples, seed=seed, tolerance=tolerance),
        "boundary_identification": lambda: check_boundary_identification(
            dd, bundle, n_samples=n_samples, seed=seed, tolerance=tolerance),
        "separation_from_infinity": lambda: check_separation_from_infinity(
            dd, bundle, n_samples=n_samples, seed=seed, tolerance=tolerance),
    }
    selected = [name for name in CHECK_NAMES if name in checks]
    if threads > 1:
        # fields shared by several checkers must exist before concurrent use
        dd.boundary_field_phi
        if dd.domain.frontier_idx.size:
            dd.frontier_field_phi
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {name: pool.submit(runners[name]) for name in selected}
            return [futures[name].result() for name in selected]
    return [runners[name]() for name in selected]


def subcurve_excess_report(dd, n_curves=6, seed=0, tolerance=None):
    """Prefix/suffix uniformity drift of sampled base-metric geodesics.

    Subcurves of uniform curves are uniform in the continuum; discrete
    geodesics may drift, so the worst prefix/suffix constant is reported
    relative to the whole-curve constant and flagged past tolerance.
    """
    if tolerance is None:
        tolerance = default_tolerance(dd)
    rng = np.random.default_rng(seed)
    groups = _shell_groups(dd)
    rows = []
    for _ in range(n_curves):
        a, b = _stratified_pick(groups, rng, 2)
        if a == b:
            continue
        curve = uniform_curve_d(dd, dd.domain.vertex_id(a), dd.domain.vertex_id(b))
        for metric in ("d", "phi"):
            excess = subcurve_excess_ratio(curve, metric)
            rows.append({
                "x": dd.domain.vertex_id(a), "y": dd.domain.vertex_id(b),
                "metric": metric, "excess": excess,
                "flag": bool(excess > 1.0 + tolerance),
            })
    return rows


def aggregate_report(dd, bundle, reports, seed, tolerance=None,
                     subcurves=True, include_timestamp=True):
    """Bundle checker reports with run provenance into one JSON-ready dict."""
    if tolerance is None:
        tolerance = default_tolerance(dd)
    out = {
        "checks": [r.to_dict() for r in reports],
        "domain_meta": dict(dd.domain.meta),
        "weight_spec": dd.weight.spec_string,
        "bundle": bundle.to_dict(),
        "seed": seed,
        "tolerance": tolerance,
        "violations_total": int(sum(r.violations for r in reports)),
    }
    if subcurves:
        out["subcurve_excess"] = subcurve_excess_report(
            dd, seed=seed, tolerance=tolerance)
    if include_timestamp:
        out["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime())
    return out


def report_csv(reports):
    """Flat CSV view of checker reports."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["check", "samples", "excluded", "violations",
                     "worst_ratio", "tolerance", "seed"])
    for r in reports:
        writer.writerow([r.name, r.samples, r.excluded, r.violations,
                         repr(r.worst_ratio), repr(r.tolerance), r.seed])
    return buf.getvalue()
