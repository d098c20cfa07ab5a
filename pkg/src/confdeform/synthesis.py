"""Constructive production of uniform curves in the deformed metric.

Given two endpoints (or one endpoint and infinity), the shell indices of the
endpoints select one of a fixed table of constructions, each returning a
candidate curve together with the constant it is predicted to satisfy:

* both deep (shells >= m0): the deformed-metric geodesic;
* both shallow (shells <= m0): the base-metric geodesic, spliced through a
  deformed-metric geodesic wherever it strays above shell m0+n0;
* one shallow, one deep: the base-metric geodesic up to its first crossing
  of depth 2**m0, then the deformed-metric geodesic;
* to infinity: the deformed-metric shortest path to the frontier, prefixed
  for shallow starts by the base-metric escape up to a threshold shell.

The predicted constants come from the constants bundle; the measured
constant of every produced curve is computed independently so predictions
can be audited sample by sample.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _graphs
from .curves import Curve, uniformity_constant
from .deform import DeformError
from .weight import derive_constants

CASE_TAGS = (
    "small", "medium_inside", "medium_spliced", "large_k", "cross_border",
    "to_infinity_deep", "to_infinity_shallow",
)


class SynthesisError(ValueError):
    """Raised for invalid synthesis queries."""


@dataclass
class SynthesisResult:
    curve: Curve
    case: str
    predicted: float
    measured: float
    x: int
    y: int | None
    splice_ids: list = field(default_factory=list)
    notes: dict = field(default_factory=dict)

    @property
    def ratio(self):
        return self.measured / self.predicted

    def to_dict(self):
        return {
            "case": self.case,
            "x": self.x,
            "y": self.y if self.y is not None else "inf",
            "predicted": self.predicted,
            "measured": self.measured,
            "ratio": self.ratio,
            "spliceverts": self.splice_ids,
            "notes": self.notes,
        }


def uniform_curve_d(dd, x, y):
    """Base-metric geodesic between two ids, as a dual-length curve.

    This is the discrete stand-in for a uniform curve in the base metric:
    graph geodesics are the best curves the discretisation offers, and their
    measured uniformity constant feeds back into the bundle when it exceeds
    the assumed one.
    """
    domain = dd.domain
    ix, iy = domain.index(x), domain.index(y)
    if ix == iy:
        raise SynthesisError("curve endpoints must differ")
    bmask = domain.boundary_mask
    extra = [i for i in (ix, iy) if bmask[i]]
    adj = domain.adjacency_allowing(extra) if extra else domain.adjacency_interior
    root, other = min(ix, iy), max(ix, iy)
    dist = _graphs.distances_from(adj, root)
    if not np.isfinite(dist[other]):
        raise SynthesisError("endpoints are not connected through the open domain")
    path = _graphs.extract_path(adj, dist, root, other)
    if path[0] != ix:
        path = path[::-1].copy()
    return Curve.from_indices(dd, path, total_d=float(dist[other]))


def _phi_geodesic_to_frontier(dd, start_idx):
    """Deformed geodesic from a vertex index to the cheapest frontier vertex."""
    adj = dd.adjacency_phi_interior
    dist = _graphs.distances_from(adj, int(start_idx))
    fr = dd.domain.frontier_idx
    vals = dist[fr]
    if not np.isfinite(vals).any():
        raise SynthesisError("frontier unreachable in the deformed metric")
    best = int(fr[int(np.argmin(vals))])
    path = _graphs.extract_path(adj, dist, int(start_idx), best)
    return Curve.from_indices(dd, path, total_phi=float(dist[best])), dist


def _maybe_rebundle(dd, bundle, base_curve, notes):
    """Recompute the bundle when a base geodesic beats the assumed cu.

    The predictions are functions of the true uniformity constant, so an
    observed constant above the assumed one invalidates them; the bundle is
    rebuilt with the observed value.
    """
    measured_cu = uniformity_constant(base_curve, "d")
    if measured_cu > bundle.cu:
        notes["rebundled_cu"] = measured_cu
        return derive_constants(dd.weight, measured_cu, bundle.cq)
    return bundle


def synthesize(dd, bundle, x, y=None, to_infinity=False):
    """Produce a candidate uniform curve between x and y (or infinity).

    Returns a :class:`SynthesisResult` whose ``measured`` field is the
    independently measured uniformity constant of the produced curve in the
    deformed metric.
    """
    if to_infinity or y is None:
        return _synthesize_to_infinity(dd, bundle, x)
    domain = dd.domain
    ix, iy = domain.index(x), domain.index(y)
    if ix == iy:
        raise SynthesisError("endpoints must differ")
    sx, sy = int(dd.field.shells[ix]), int(dd.field.shells[iy])
    m, k = min(sx, sy), max(sx, sy)
    notes = {"shells": [sx, sy]}

    if m >= bundle.m0:
        curve = dd.dphi_geodesic(x, y)
        measured = uniformity_constant(curve, "phi",
                                       endpoint_distance=curve.total_phi)
        return SynthesisResult(curve=curve, case="large_k",
                               predicted=1331.0 / 669.0, measured=measured,
                               x=int(x), y=int(y), notes=notes)

    # order endpoints shallow-first for the crossing constructions
    a, b = (x, y) if sx <= sy else (y, x)
    beta = uniform_curve_d(dd, a, b)
    bundle = _maybe_rebundle(dd, bundle, beta, notes)

    if k <= bundle.m0:
        level = 2.0 ** (bundle.m0 + bundle.n0)
        depths = dd.field.values[beta.vertices]
        outside = depths >= level
        if not outside.any():
            dphi = dd.dphi_distance(x, y)
            threshold = bundle.t_small * 2.0 ** m * dd.weight.value(2.0 ** m)
            if dphi < threshold:
                case = "small"
                predicted = bundle.c1
            else:
                case = "medium_inside"
                predicted = bundle.c2
            curve = beta if beta.start_id == int(x) else beta.reverse()
            measured = uniformity_constant(curve, "phi", endpoint_distance=dphi)
            return SynthesisResult(curve=curve, case=case, predicted=predicted,
                                   measured=measured, x=int(x), y=int(y),
                                   notes=notes)
        first = int(np.argmax(outside))
        last = len(outside) - 1 - int(np.argmax(outside[::-1]))
        z1, z2 = beta.vertices[first], beta.vertices[last]
        splice_ids = [domain.vertex_id(z1), domain.vertex_id(z2)]
        if first == last:
            curve = beta
            notes["degenerate_splice"] = True
        else:
            middle = dd.dphi_geodesic(domain.vertex_id(z1), domain.vertex_id(z2))
            curve = beta_slice(beta, 0, first).concat(middle) if first > 0 else middle
            if last < len(beta) - 1:
                curve = curve.concat(beta_slice(beta, last, len(beta) - 1))
        if curve.start_id != int(x):
            curve = curve.reverse()
        measured = uniformity_constant(curve, "phi")
        return SynthesisResult(curve=curve, case="medium_spliced",
                               predicted=bundle.c2, measured=measured,
                               x=int(x), y=int(y), splice_ids=splice_ids,
                               notes=notes)

    # m < m0 < k: shallow-to-deep
    dphi = dd.dphi_distance(x, y)
    if dphi < bundle.t_small * bundle.lam:
        # below the crossing construction's own applicability threshold;
        # the base geodesic is the candidate, as in the all-shallow case
        notes["subthreshold"] = True
        curve = beta if beta.start_id == int(x) else beta.reverse()
        measured = uniformity_constant(curve, "phi", endpoint_distance=dphi)
        return SynthesisResult(curve=curve, case="small", predicted=bundle.c1,
                               measured=measured, x=int(x), y=int(y),
                               notes=notes)
    level = 2.0 ** bundle.m0
    depths = dd.field.values[beta.vertices]
    crossing = depths >= level
    if not crossing.any():
        raise SynthesisError("deep endpoint below its own shell level; "
                             "inconsistent boundary distances")
    first = int(np.argmax(crossing))
    z1 = beta.vertices[first]
    z1_id = domain.vertex_id(z1)
    splice_ids = [z1_id]
    if first == 0:
        curve = dd.dphi_geodesic(a, b)
    else:
        tail = dd.dphi_geodesic(z1_id, b)
        curve = beta_slice(beta, 0, first).concat(tail)
    if curve.start_id != int(x):
        curve = curve.reverse()
    measured = uniformity_constant(curve, "phi", endpoint_distance=dphi)
    return SynthesisResult(curve=curve, case="cross_border", predicted=bundle.c3,
                           measured=measured, x=int(x), y=int(y),
                           splice_ids=splice_ids, notes=notes)


def _synthesize_to_infinity(dd, bundle, x):
    domain = dd.domain
    if domain.frontier_idx.size == 0:
        raise DeformError("domain has no frontier; nothing escapes to infinity")
    ix = domain.index(x)
    if domain.boundary_mask[ix]:
        raise SynthesisError("curves to infinity start at interior vertices")
    if domain.frontier_mask[ix]:
        raise SynthesisError(
            "start vertex sits on the truncation frontier; its escape lies "
            "entirely outside the sampled window"
        )
    m = int(dd.field.shells[ix])
    estimate = dd.dist_to_infinity(x)
    notes = {"shells": [m]}

    if m >= bundle.m0:
        curve, _ = _phi_geodesic_to_frontier(dd, ix)
        curve = Curve(dd, curve.vertices, curve.incr_d, curve.incr_phi,
                      curve.total_d, curve.total_phi, to_infinity=True,
                      estimate=estimate)
        measured = uniformity_constant(curve, "phi")
        return SynthesisResult(curve=curve, case="to_infinity_deep",
                               predicted=1331.0 / 669.0, measured=measured,
                               x=int(x), y=None, notes=notes)

    # shallow start: base-metric escape to the frontier
    fr_d = _graphs.distances_from(domain.adjacency_interior, ix)
    fvals = fr_d[domain.frontier_idx]
    if not np.isfinite(fvals).any():
        raise SynthesisError("frontier unreachable in the base metric")
    target = int(domain.frontier_idx[int(np.argmin(fvals))])
    path = _graphs.extract_path(domain.adjacency_interior, fr_d, ix, target)
    beta = Curve.from_indices(dd, path, total_d=float(fr_d[target]))
    bundle = _maybe_rebundle(dd, bundle, beta, notes)

    # smallest shell at or past m0+n0 whose every vertex is at deformed
    # distance at least the crossing threshold from x; fall back to m0+n0
    threshold = bundle.t_small * bundle.lam
    dist_phi = _graphs.distances_from(dd.adjacency_phi_interior, ix)
    shells = dd.field.shells
    k_star = bundle.m0 + bundle.n0
    max_shell = int(shells.max())
    for cand in range(bundle.m0 + bundle.n0, max_shell + 1):
        members = np.nonzero(shells == cand)[0]
        members = members[np.isfinite(dist_phi[members])]
        if members.size and dist_phi[members].min() >= threshold:
            k_star = cand
            break
    notes["k_star"] = k_star

    beta_shells = shells[beta.vertices]
    past = beta_shells >= k_star
    if past.any():
        cut = int(np.argmax(past))
    else:
        cut = len(beta) - 1
    if cut == len(beta) - 1:
        # the base escape reaches the frontier without ever clearing the
        # threshold shell (or only at its endpoint); it is the whole curve
        combined = beta
    elif cut == 0:
        tail_curve, _ = _phi_geodesic_to_frontier(dd, ix)
        combined = tail_curve
    else:
        z = beta.vertices[cut]
        tail_curve, _ = _phi_geodesic_to_frontier(dd, int(z))
        combined = beta_slice(beta, 0, cut).concat(tail_curve)
    curve = Curve(dd, combined.vertices, combined.incr_d, combined.incr_phi,
                  combined.total_d, combined.total_phi, to_infinity=True,
                  estimate=estimate)
    measured = uniformity_constant(curve, "phi")
    return SynthesisResult(curve=curve, case="to_infinity_shallow",
                           predicted=bundle.c4, measured=measured,
                           x=int(x), y=None,
                           splice_ids=[domain.vertex_id(beta.vertices[cut])],
                           notes=notes)


def beta_slice(curve, i, j):
    """Subcurve between vertex positions i <= j (inclusive)."""
    if not (0 <= i < j < len(curve)):
        raise SynthesisError("bad subcurve positions")
    return Curve(
        curve.dd, curve.vertices[i:j + 1],
        curve.incr_d[i:j], curve.incr_phi[i:j],
        float(np.sum(curve.incr_d[i:j])), float(np.sum(curve.incr_phi[i:j])),
    )


def _stratified_interior(dd, rng, count, min_shell=0, skip_frontier=False):
    """Sample interior vertex indices spread across shells."""
    shells = dd.field.shells
    keep = ~dd.domain.boundary_mask
    if skip_frontier:
        keep &= ~dd.domain.frontier_mask
    interior = np.nonzero(keep)[0]
    groups = []
    for s in range(min_shell, int(shells.max()) + 1):
        members = interior[shells[interior] == s]
        if members.size:
            groups.append(members)
    if not groups:
        raise SynthesisError("no interior vertices in the requested shells")
    picks = []
    gi = 0
    while len(picks) < count:
        members = groups[gi % len(groups)]
        picks.append(int(rng.choice(members)))
        gi += 1
    return picks


def predicted_vs_measured(dd, bundle, n_pairs=200, n_to_infinity=0, seed=0,
                          tolerance=None):
    """Run synthesize over a stratified sample and audit the predictions.

    Returns a report dict with one row per sample and a summary block:
    per-case counts and worst measured constants, every sample where the
    measured constant exceeds the predicted one beyond tolerance, and how
    often the shallow-to-deep construction fell below its threshold.
    """
    if n_pairs < 1 and n_to_infinity < 1:
        raise SynthesisError("sample budget must be at least 1")
    if tolerance is None:
        tolerance = 10.0 * dd.domain.mesh_size
    rng = np.random.default_rng(seed)
    domain = dd.domain
    rows = []
    xs = _stratified_interior(dd, rng, n_pairs)
    ys = _stratified_interior(dd, rng, n_pairs)
    interior = np.nonzero(~domain.boundary_mask)[0]
    for ix, iy in zip(xs, ys):
        while iy == ix:
            iy = int(rng.choice(interior))
        res = synthesize(dd, bundle, domain.vertex_id(ix), domain.vertex_id(iy))
        rows.append(res.to_dict())
    if n_to_infinity and domain.frontier_idx.size:
        for ix in _stratified_interior(dd, rng, n_to_infinity, skip_frontier=True):
            res = synthesize(dd, bundle, domain.vertex_id(ix), to_infinity=True)
            rows.append(res.to_dict())

    by_case = {tag: [r for r in rows if r["case"] == tag] for tag in CASE_TAGS}
    flags = [r for r in rows if r["measured"] > r["predicted"] * (1.0 + tolerance)]
    summary = {
        "samples": len(rows),
        "tolerance": tolerance,
        "cases": {
            tag: {
                "count": len(group),
                "max_measured": max((r["measured"] for r in group), default=None),
                "max_ratio": max((r["ratio"] for r in group), default=None),
            }
            for tag, group in by_case.items()
        },
        "absent_cases": [tag for tag, group in by_case.items() if not group],
        "flags": flags,
        "subthreshold_count": sum(
            1 for r in rows if r["notes"].get("subthreshold")
        ),
        "rebundled_count": sum(
            1 for r in rows if "rebundled_cu" in r["notes"]
        ),
    }
    return {"rows": rows, "summary": summary}
