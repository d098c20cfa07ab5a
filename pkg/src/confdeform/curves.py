"""Curves through a deformed domain and their uniformity measurements.

A curve is an ordered vertex walk along graph edges carrying per-step
lengths in both metrics (base and deformed).  Totals are stored explicitly:
geodesics record the bitwise Dijkstra distance as their length, so the
invariant "geodesic length equals the distance" holds exactly, and a
reversed curve shares the totals of its original.

Uniformity of a curve combines two ratios: the detour ratio (curve length
over endpoint distance) and the clearance ratio (at every interior vertex,
the shorter arm of the curve over the distance to the boundary).  The least
constant making the curve uniform is the larger of the two.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _graphs


class CurveError(ValueError):
    """Raised for invalid curve constructions or measurements."""


class Curve:
    """Immutable vertex walk with dual-metric lengths."""

    def __init__(self, dd, vertices, incr_d, incr_phi, total_d, total_phi,
                 to_infinity=False, estimate=None):
        self.dd = dd
        self.vertices = np.asarray(vertices, dtype=np.int64)
        self.incr_d = np.asarray(incr_d, dtype=np.float64)
        self.incr_phi = np.asarray(incr_phi, dtype=np.float64)
        self.total_d = float(total_d)
        self.total_phi = float(total_phi)
        self.to_infinity = bool(to_infinity)
        self.estimate = estimate
        n = len(self.vertices)
        if n < 2:
            raise CurveError("a curve needs at least two vertices")
        if len(self.incr_d) != n - 1 or len(self.incr_phi) != n - 1:
            raise CurveError("increment arrays must have one entry per step")
        if (self.incr_d <= 0).any() or (self.incr_phi <= 0).any():
            raise CurveError("curve increments must be positive")
        if self.to_infinity and self.estimate is None:
            raise CurveError("a curve to infinity carries its terminal estimate")

    @classmethod
    def from_indices(cls, dd, indices, total_d=None, total_phi=None,
                     to_infinity=False, estimate=None):
        """Build a curve from consecutive-adjacent vertex indices.

        Explicit totals override the forward float sums; geodesic builders
        pass the Dijkstra distance so lengths telescope exactly.
        """
        indices = np.asarray(indices, dtype=np.int64)
        incr_d = _graphs.edge_lengths_along(dd.domain.adjacency, indices)
        incr_phi = _graphs.edge_lengths_along(dd.adjacency_phi, indices)
        return cls(
            dd, indices, incr_d, incr_phi,
            float(np.sum(incr_d)) if total_d is None else total_d,
            float(np.sum(incr_phi)) if total_phi is None else total_phi,
            to_infinity=to_infinity, estimate=estimate,
        )

    # -- basics -----------------------------------------------------------

    def __len__(self):
        return len(self.vertices)

    @property
    def vertex_ids(self):
        return [self.dd.domain.vertex_id(i) for i in self.vertices]

    @property
    def start_id(self):
        return self.dd.domain.vertex_id(self.vertices[0])

    @property
    def end_id(self):
        return self.dd.domain.vertex_id(self.vertices[-1])

    def lengths(self):
        """(base length, deformed length)."""
        return self.total_d, self.total_phi

    def reverse(self):
        """The same walk traversed backwards.  Totals are shared, so every
        measurement that depends only on lengths is exactly invariant."""
        if self.to_infinity:
            raise CurveError("a curve to infinity has no reversal")
        return Curve(
            self.dd, self.vertices[::-1].copy(),
            self.incr_d[::-1].copy(), self.incr_phi[::-1].copy(),
            self.total_d, self.total_phi,
        )

    def concat(self, other):
        """Join two curves at a shared vertex; totals add."""
        if self.to_infinity:
            raise CurveError("cannot extend past infinity")
        if self.vertices[-1] != other.vertices[0]:
            raise CurveError("curves do not share a junction vertex")
        return Curve(
            self.dd,
            np.concatenate([self.vertices, other.vertices[1:]]),
            np.concatenate([self.incr_d, other.incr_d]),
            np.concatenate([self.incr_phi, other.incr_phi]),
            self.total_d + other.total_d,
            self.total_phi + other.total_phi,
            to_infinity=other.to_infinity, estimate=other.estimate,
        )

    def to_dict(self):
        return {
            "vertices": self.vertex_ids,
            "len_d": self.total_d,
            "len_phi": self.total_phi,
            "to_infinity": self.to_infinity,
        }


# -- uniformity measurement ------------------------------------------------


def _metric_arrays(curve, metric):
    if metric in ("phi", "deformed", "d_phi"):
        return curve.incr_phi, curve.total_phi, True
    if metric in ("d", "base"):
        return curve.incr_d, curve.total_d, False
    raise CurveError(f"unknown metric {metric!r}")


def _endpoint_distance(curve, deformed):
    dd = curve.dd
    if curve.to_infinity:
        if not deformed:
            raise CurveError("distance to infinity is only defined when deformed")
        # conservative choice: the low end of the interval inflates the ratio
        return curve.estimate.lower
    a, b = curve.start_id, curve.end_id
    if deformed:
        return dd.dphi_distance(a, b)
    ia, ib = dd.domain.index(a), dd.domain.index(b)
    root, other = min(ia, ib), max(ia, ib)
    bmask = dd.domain.boundary_mask
    extra = [i for i in (ia, ib) if bmask[i]]
    adj = dd.domain.adjacency_allowing(extra) if extra else dd.domain.adjacency_interior
    dist = _graphs.distances_from(adj, root)
    val = float(dist[other])
    if not np.isfinite(val):
        raise CurveError("curve endpoints are not connected through the open domain")
    return val


def _arm_lengths(incr):
    """min(left arm, right arm) at interior vertices, reversal-symmetric."""
    left = np.cumsum(incr)[:-1]
    right = np.cumsum(incr[::-1])[:-1][::-1]
    return np.minimum(left, right)


def uniformity_constant(curve, metric="phi", endpoint_distance=None,
                        boundary_values=None):
    """Least C for which the curve is C-uniform in the chosen metric.

    ``endpoint_distance`` and ``boundary_values`` default to the deformed
    (or base) distances of the owning domain; overrides let callers reuse
    precomputed fields.
    """
    incr, total, deformed = _metric_arrays(curve, metric)
    if endpoint_distance is None:
        endpoint_distance = _endpoint_distance(curve, deformed)
    if endpoint_distance <= 0:
        raise CurveError("endpoint distance must be positive")
    quasi = total / endpoint_distance
    cigar = 0.0
    if len(curve) > 2:
        if boundary_values is None:
            boundary_values = (curve.dd.boundary_field_phi if deformed
                               else curve.dd.field.values)
        clearance = boundary_values[curve.vertices[1:-1]]
        if (clearance <= 0).any():
            raise CurveError("curve passes through a boundary vertex")
        cigar = float((_arm_lengths(incr) / clearance).max())
    return max(quasi, cigar)


@dataclass(frozen=True)
class UniformityCheck:
    passed: bool
    constant: float
    bound: float
    witness: dict


def check_uniform(curve, bound, metric="phi", tolerance=0.0,
                  endpoint_distance=None, boundary_values=None):
    """Pass iff the curve is ``bound``-uniform up to a tolerance factor.

    On failure the witness names the violated ratio: the detour ratio, or
    the interior vertex with the worst clearance ratio.
    """
    incr, total, deformed = _metric_arrays(curve, metric)
    if endpoint_distance is None:
        endpoint_distance = _endpoint_distance(curve, deformed)
    if endpoint_distance <= 0:
        raise CurveError("endpoint distance must be positive")
    quasi = total / endpoint_distance
    witness = {"kind": "detour", "ratio": quasi}
    constant = quasi
    if len(curve) > 2:
        if boundary_values is None:
            boundary_values = (curve.dd.boundary_field_phi if deformed
                               else curve.dd.field.values)
        clearance = boundary_values[curve.vertices[1:-1]]
        if (clearance <= 0).any():
            raise CurveError("curve passes through a boundary vertex")
        ratios = _arm_lengths(incr) / clearance
        worst = int(np.argmax(ratios))
        if ratios[worst] > constant:
            constant = float(ratios[worst])
            witness = {
                "kind": "clearance",
                "vertex": curve.dd.domain.vertex_id(curve.vertices[worst + 1]),
                "ratio": constant,
            }
    passed = constant <= bound * (1.0 + tolerance)
    return UniformityCheck(passed=passed, constant=constant, bound=bound,
                           witness={} if passed else witness)


def subcurve_excess_ratio(curve, metric="phi"):
    """Worst prefix/suffix uniformity constant over the whole-curve constant.

    Discrete geodesics need not pass their uniformity down to subcurves with
    the same constant; this measures how far prefixes and suffixes stray.
    Endpoint distances for the subcurves come from two rooted runs, one per
    curve end.
    """
    dd = curve.dd
    if curve.to_infinity:
        raise CurveError("subcurve scan expects a two-endpoint curve")
    incr, _, deformed = _metric_arrays(curve, metric)
    whole = uniformity_constant(curve, metric)
    n = len(curve)
    if n < 3:
        return 1.0
    if deformed:
        bvals = dd.boundary_field_phi
        adj = dd._query_adjacency((curve.vertices[0], curve.vertices[-1]))
    else:
        bvals = dd.field.values
        adj = dd.domain.adjacency_interior
    dist_a = _graphs.distances_from(adj, curve.vertices[0])
    dist_b = _graphs.distances_from(adj, curve.vertices[-1])
    left = np.concatenate([[0.0], np.cumsum(incr)])
    clearance = bvals[curve.vertices]
    worst = whole
    # prefixes [0..i], interior vertices 1..i-1
    for i in range(2, n):
        dpair = dist_a[curve.vertices[i]]
        if dpair > 0 and np.isfinite(dpair):
            quasi = left[i] / dpair
            arms = np.minimum(left[1:i], left[i] - left[1:i])
            cigar = float((arms / clearance[1:i]).max())
            worst = max(worst, quasi, cigar)
    for i in range(0, n - 2):
        dpair = dist_b[curve.vertices[i]]
        seg = left[-1] - left[i]
        if dpair > 0 and np.isfinite(dpair):
            quasi = seg / dpair
            arms = np.minimum(left[i + 1:-1] - left[i], left[-1] - left[i + 1:-1])
            cigar = float((arms / clearance[i + 1:-1]).max())
            worst = max(worst, quasi, cigar)
    return worst / whole
