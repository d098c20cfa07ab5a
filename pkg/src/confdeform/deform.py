"""The deformed metric: edge lengths re-weighted by the dampening weight.

Deforming multiplies arc length by ``phi(distance to boundary)``, so deep
paths become cheap and near-boundary paths keep their length.  On a graph the
deformed length of an edge is the line integral of the weight along it, with
the boundary distance interpolated linearly between the endpoint values (it
is 1-Lipschitz along edges, so the interpolant is within one mesh size).

When the weight is summable along dyadic scales the deformed domain acquires
one extra point at infinite depth, at finite deformed distance.  Distances to
it are reported as certified intervals: the computed deformed distance to the
truncation frontier plus an analytic bracket for the escape cost beyond it.
The bracket assumes the continuation beyond the frontier admits escape rays
along which the boundary distance grows at unit speed, which holds for the
built-in generators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _graphs
from .domain import BoundaryDistanceField, DomainError, boundary_distance


class DeformError(ValueError):
    """Raised for invalid deformation queries."""


def _deformed_edge_lengths(d_u, d_v, lengths, weight, pieces, clamp):
    """Composite trapezoid integral of the weight along each edge.

    The boundary distance is interpolated linearly from ``d_u`` to ``d_v``
    and clamped below at half the mesh size; since the weight is 1 up to
    distance 1 and the mesh size is at most 2, clamping never changes the
    integrand, it only guards against boundary vertices where the distance
    is exactly zero.
    """
    nodes = np.linspace(0.0, 1.0, pieces + 1)
    t = np.maximum(d_u[:, None] * (1.0 - nodes) + d_v[:, None] * nodes, clamp)
    vals = weight.value(t)
    trapz = (vals[:, 0] + vals[:, -1]) / 2.0 + vals[:, 1:-1].sum(axis=1)
    return lengths * (trapz / pieces)


def parse_quadrature(text):
    """Quadrature spec: ``trapezoid`` or ``subdivided:k``."""
    text = text.strip().lower()
    if text == "trapezoid":
        return 1
    name, _, arg = text.partition(":")
    if name == "subdivided":
        try:
            k = int(arg)
        except ValueError:
            raise DeformError(f"bad subdivision count {arg!r}") from None
        if k < 1:
            raise DeformError("subdivision count must be at least 1")
        return k
    raise DeformError(f"unknown quadrature {text!r}")


class DeformedDomain:
    """A domain together with its deformed edge lengths and cached fields.

    Immutable once built; all queries are pure.
    """

    def __init__(self, domain, weight, field=None, quadrature=4):
        if field is None:
            field = boundary_distance(domain)
        if not isinstance(field, BoundaryDistanceField):
            raise DeformError("field must be a BoundaryDistanceField")
        h = domain.mesh_size
        if h > 2.0:
            raise DomainError(
                f"mesh size {h} exceeds 2; the weight would see clamped "
                "distances above 1 and the near-boundary calibration breaks"
            )
        self.domain = domain
        self.weight = weight
        self.field = field
        self.quadrature = int(quadrature)
        self.edge_len_phi = _deformed_edge_lengths(
            field.values[domain.edge_u], field.values[domain.edge_v],
            domain.edge_len, weight, self.quadrature, h / 2.0,
        )
        self._adj_phi = None
        self._adj_phi_interior = None
        self._bdry_field_phi = None
        self._frontier_field_phi = None

    # -- adjacency views ------------------------------------------------------

    @property
    def adjacency_phi(self):
        if self._adj_phi is None:
            self._adj_phi = _graphs.build_adjacency(
                self.domain.n_vertices, self.domain.edge_u, self.domain.edge_v,
                self.edge_len_phi,
            )
        return self._adj_phi

    @property
    def adjacency_phi_interior(self):
        if self._adj_phi_interior is None:
            self._adj_phi_interior = _graphs.drop_incident_edges(
                self.domain.n_vertices, self.domain.edge_u, self.domain.edge_v,
                self.edge_len_phi, self.domain.boundary_idx,
            )
        return self._adj_phi_interior

    def _adj_phi_allowing(self, endpoints):
        return _graphs.drop_incident_edges(
            self.domain.n_vertices, self.domain.edge_u, self.domain.edge_v,
            self.edge_len_phi, self.domain.boundary_idx, keep=endpoints,
        )

    def _query_adjacency(self, idx_pair):
        """Adjacency for a two-endpoint query.

        Interior endpoints use the interior view (curves between interior
        points stay in the open domain); boundary endpoints are re-attached
        for this query only.
        """
        bmask = self.domain.boundary_mask
        extra = [i for i in idx_pair if bmask[i]]
        if extra:
            return self._adj_phi_allowing(extra)
        return self.adjacency_phi_interior

    # -- distance and geodesic queries ----------------------------------------

    def _rooted_run(self, idx_a, idx_b):
        """Distances rooted at the smaller index of the pair.

        Rooting at min(a, b) makes the query order irrelevant, so the
        reported distance is exactly symmetric.
        """
        root, other = (idx_a, idx_b) if idx_a <= idx_b else (idx_b, idx_a)
        adj = self._query_adjacency((idx_a, idx_b))
        dist = _graphs.distances_from(adj, root)
        if not np.isfinite(dist[other]):
            raise DeformError(
                f"vertices {self.domain.vertex_id(idx_a)} and "
                f"{self.domain.vertex_id(idx_b)} are not connected through "
                "the open domain"
            )
        return adj, dist, root, other

    def dphi_distance(self, x, y):
        """Deformed distance between two vertex ids."""
        ix, iy = self.domain.index(x), self.domain.index(y)
        if ix == iy:
            return 0.0
        _, dist, _, other = self._rooted_run(ix, iy)
        return float(dist[other])

    def dphi_geodesic(self, x, y):
        """Shortest curve in the deformed metric, as a :class:`Curve`.

        The curve is oriented from x to y; its deformed length equals
        ``dphi_distance(x, y)`` bitwise.
        """
        from .curves import Curve

        ix, iy = self.domain.index(x), self.domain.index(y)
        if ix == iy:
            raise DeformError("geodesic endpoints must differ")
        adj, dist, root, other = self._rooted_run(ix, iy)
        path = _graphs.extract_path(adj, dist, root, other)
        total_phi = float(dist[other])
        if path[0] != ix:
            path = path[::-1].copy()
        return Curve.from_indices(self, path, total_phi=total_phi)

    # -- cached distance fields ------------------------------------------------

    @property
    def boundary_field_phi(self):
        """Deformed distance to the boundary, per vertex.

        Computed on the full graph: a path through one boundary vertex on
        the way to another is never shorter than stopping at the first, so
        the minimum is unaffected by transit.
        """
        if self._bdry_field_phi is None:
            self._bdry_field_phi = _graphs.min_distance_field(
                self.adjacency_phi, self.domain.boundary_idx
            )
        return self._bdry_field_phi

    @property
    def frontier_field_phi(self):
        """Deformed distance to the nearest frontier vertex (interior view)."""
        if self._frontier_field_phi is None:
            if self.domain.frontier_idx.size == 0:
                raise DeformError("domain has no frontier")
            self._frontier_field_phi = _graphs.min_distance_field(
                self.adjacency_phi_interior, self.domain.frontier_idx
            )
        return self._frontier_field_phi

    def dphi_boundary_distance(self, x=None):
        """Deformed distance to the boundary for one id, or the full field."""
        if x is None:
            return self.boundary_field_phi
        return float(self.boundary_field_phi[self.domain.index(x)])

    # -- the point at infinity ---------------------------------------------------

    @property
    def frontier_min_depth(self):
        """Smallest distance-to-boundary value on the frontier ring."""
        if self.domain.frontier_idx.size == 0:
            raise DeformError("domain has no frontier")
        return float(self.field.values[self.domain.frontier_idx].min())

    @property
    def frontier_shell(self):
        """Smallest shell index on the frontier ring."""
        if self.domain.frontier_idx.size == 0:
            raise DeformError("domain has no frontier")
        return int(self.field.shells[self.domain.frontier_idx].min())

    def dist_to_infinity(self, x):
        """Certified interval around the deformed distance to infinity.

        Both ends start from D, the computed deformed distance to the
        frontier ring.  The escape cost beyond the frontier is bracketed
        analytically: at least the integral of the weight from the frontier
        depth outward (any escape crosses every remaining depth level), and
        at most the dyadic majorant of that integral starting one shell
        early (an escape ray from the nearest frontier vertex).  The lower
        end is also kept above the coarea bound for the starting shell.
        """
        ix = self.domain.index(x)
        if self.domain.frontier_idx.size == 0:
            raise DeformError("domain has no frontier; nothing escapes to infinity")
        if self.domain.boundary_mask[ix]:
            adj = self._adj_phi_allowing([ix])
            dist = _graphs.distances_from(adj, ix)
            frontier_d = dist[self.domain.frontier_idx]
            if not np.isfinite(frontier_d).any():
                raise DeformError("frontier unreachable from this vertex")
            big_d = float(frontier_d.min())
        else:
            big_d = float(self.frontier_field_phi[ix])
            if not math.isfinite(big_d):
                raise DeformError("frontier unreachable from this vertex")
        m = int(self.field.shells[ix])
        big_m = self.frontier_shell
        esc_low = self.weight.integral_tail(self.frontier_min_depth)
        esc_high = self.weight.tail_sum(max(big_m - 1, 0))
        lower = max(big_d + esc_low, (5.0 / 11.0) * self.weight.tail_sum(m + 1))
        upper = big_d + esc_high
        if lower > upper:
            # cannot happen when the escape model holds; keep the interval valid
            lower = upper
        return InfinityEstimate(
            vertex=int(x), lower=lower, upper=upper, frontier_dphi=big_d,
            shell=m, frontier_shell=big_m,
        )


@dataclass(frozen=True)
class InfinityEstimate:
    """Interval bracket for the deformed distance from a vertex to infinity."""

    vertex: int
    lower: float
    upper: float
    frontier_dphi: float
    shell: int
    frontier_shell: int

    @property
    def midpoint(self):
        return 0.5 * (self.lower + self.upper)

    @property
    def width(self):
        return self.upper - self.lower

    def to_dict(self):
        return {
            "x": self.vertex,
            "lower": self.lower,
            "upper": self.upper,
            "frontier_shell": self.frontier_shell,
        }


def deform(domain, weight, field=None, quadrature=4):
    """Build the deformed domain.  ``quadrature`` is the subdivision count
    per edge (1 = plain trapezoid)."""
    return DeformedDomain(domain, weight, field=field, quadrature=quadrature)
