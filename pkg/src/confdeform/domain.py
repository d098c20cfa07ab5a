"""Boundary-marked metric graphs.

A domain here is a finite connected graph with positive edge lengths and two
disjoint sets of marked vertices:

* ``boundary``: samples of the metric boundary.  Their distance to the
  boundary is zero and interior curves are not allowed to travel through
  them (a path touching the boundary leaves the open domain).
* ``frontier``: the artificial truncation ring of an unbounded domain, the
  vertices where escaping rays leave the sampled window.  Frontier vertices
  are ordinary interior vertices for every purpose except the point-at-
  infinity constructions, which treat them as the gateway outward.

Distances between vertices are shortest-path distances in the graph.  The
distance-to-boundary field and its dyadic shell decomposition (shell 0 is
``d <= 1``, shell n is ``2**(n-1) < d <= 2**n``) drive everything else in the
package.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _graphs

_GENERATORS = {}


class DomainError(ValueError):
    """Raised for malformed or inconsistent domain data."""


@dataclass(eq=False)
class MetricDomain:
    """Finite graph with marked boundary and optional frontier ring.

    Vertex ids are arbitrary ints; internally everything is indexed by the
    position of the id in ``ids``.  Methods accept and return ids unless the
    name says otherwise.
    """

    ids: np.ndarray
    coords: np.ndarray | None
    edge_u: np.ndarray
    edge_v: np.ndarray
    edge_len: np.ndarray
    boundary_idx: np.ndarray
    frontier_idx: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        if self.coords is not None:
            self.coords = np.asarray(self.coords, dtype=np.float64)
        self.edge_u = np.asarray(self.edge_u, dtype=np.int64)
        self.edge_v = np.asarray(self.edge_v, dtype=np.int64)
        self.edge_len = np.asarray(self.edge_len, dtype=np.float64)
        self.boundary_idx = np.asarray(self.boundary_idx, dtype=np.int64)
        self.frontier_idx = np.asarray(self.frontier_idx, dtype=np.int64)
        self._id_to_idx = None
        self._adjacency = None
        self._adjacency_interior = None
        self._boundary_field = None
        self.validate()

    # -- basic queries ----------------------------------------------------

    @property
    def n_vertices(self):
        return len(self.ids)

    @property
    def n_edges(self):
        return len(self.edge_len)

    @property
    def boundary_mask(self):
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.boundary_idx] = True
        return mask

    @property
    def frontier_mask(self):
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.frontier_idx] = True
        return mask

    @property
    def mesh_size(self):
        """Edge-length scale h used for clamping and tolerances.

        Generated domains record it in ``meta``; for loaded domains it falls
        back to the shortest edge.
        """
        h = self.meta.get("h")
        if h is None:
            h = float(self.edge_len.min())
        return float(h)

    def index(self, vertex_id):
        """Row index of a vertex id."""
        if self._id_to_idx is None:
            self._id_to_idx = {int(v): i for i, v in enumerate(self.ids)}
        try:
            return self._id_to_idx[int(vertex_id)]
        except KeyError:
            raise DomainError(f"unknown vertex id {vertex_id}") from None

    def vertex_id(self, idx):
        return int(self.ids[int(idx)])

    def nearest_vertex(self, x, y):
        """Id of the vertex whose coordinates are closest to (x, y)."""
        if self.coords is None:
            raise DomainError("domain has no vertex coordinates")
        d2 = (self.coords[:, 0] - x) ** 2 + (self.coords[:, 1] - y) ** 2
        ties = np.nonzero(d2 == d2.min())[0]
        return int(self.ids[ties].min())

    # -- adjacency views ---------------------------------------------------

    @property
    def adjacency(self):
        """Full CSR adjacency, boundary vertices included."""
        if self._adjacency is None:
            self._adjacency = _graphs.build_adjacency(
                self.n_vertices, self.edge_u, self.edge_v, self.edge_len
            )
        return self._adjacency

    @property
    def adjacency_interior(self):
        """Adjacency with boundary vertices isolated.

        Interior paths must stay in the open domain, so queries between
        interior vertices run on this view.  Frontier vertices stay.
        """
        if self._adjacency_interior is None:
            self._adjacency_interior = _graphs.drop_incident_edges(
                self.n_vertices, self.edge_u, self.edge_v, self.edge_len,
                self.boundary_idx,
            )
        return self._adjacency_interior

    def adjacency_allowing(self, endpoint_indices):
        """Interior adjacency that additionally keeps the given boundary
        vertices connected, for queries with a boundary endpoint."""
        return _graphs.drop_incident_edges(
            self.n_vertices, self.edge_u, self.edge_v, self.edge_len,
            self.boundary_idx, keep=endpoint_indices,
        )

    def distance(self, x, y):
        """Graph distance between two ids through the open domain.

        Rooted at the smaller index so the result is exactly symmetric in
        the arguments.  Boundary endpoints are re-attached for the query.
        """
        ix, iy = self.index(x), self.index(y)
        if ix == iy:
            return 0.0
        bmask = self.boundary_mask
        extra = [i for i in (ix, iy) if bmask[i]]
        adj = self.adjacency_allowing(extra) if extra else self.adjacency_interior
        dist = _graphs.distances_from(adj, min(ix, iy))
        val = float(dist[max(ix, iy)])
        if not np.isfinite(val):
            raise DomainError(
                f"vertices {x} and {y} are not connected through the open domain"
            )
        return val

    # -- validation and I/O -------------------------------------------------

    def validate(self):
        n = self.n_vertices
        if n == 0:
            raise DomainError("domain has no vertices")
        if len(np.unique(self.ids)) != n:
            raise DomainError("vertex ids are not unique")
        if self.coords is not None and self.coords.shape != (n, 2):
            raise DomainError("coords must be an (n, 2) array")
        if not (len(self.edge_u) == len(self.edge_v) == len(self.edge_len)):
            raise DomainError("edge arrays have mismatched lengths")
        for arr, what in ((self.edge_u, "edge"), (self.edge_v, "edge"),
                          (self.boundary_idx, "boundary"),
                          (self.frontier_idx, "frontier")):
            if arr.size and (arr.min() < 0 or arr.max() >= n):
                raise DomainError(f"{what} refers to a vertex index out of range")
        if (self.edge_len <= 0).any() or not np.isfinite(self.edge_len).all():
            raise DomainError("edge lengths must be positive and finite")
        if (self.edge_u == self.edge_v).any():
            raise DomainError("self-loop edges are not allowed")
        if self.boundary_idx.size == 0:
            raise DomainError("domain needs at least one boundary vertex")
        if np.intersect1d(self.boundary_idx, self.frontier_idx).size:
            raise DomainError("boundary and frontier vertices overlap")
        # connectivity of the full graph
        comp = _graphs.min_distance_field(self.adjacency, [0])
        if not np.isfinite(comp).all():
            raise DomainError("graph is not connected")

    def to_dict(self):
        verts = []
        for i in range(self.n_vertices):
            entry = {"id": int(self.ids[i])}
            if self.coords is not None:
                entry["xy"] = [float(self.coords[i, 0]), float(self.coords[i, 1])]
            verts.append(entry)
        edges = [
            [int(self.ids[u]), int(self.ids[v]), float(w)]
            for u, v, w in zip(self.edge_u, self.edge_v, self.edge_len)
        ]
        return {
            "vertices": verts,
            "edges": edges,
            "boundary": [int(self.ids[i]) for i in self.boundary_idx],
            "frontier": [int(self.ids[i]) for i in self.frontier_idx],
            "meta": self.meta,
        }

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True, indent=1)
            fh.write("\n")


def from_dict(data):
    """Build a :class:`MetricDomain` from the JSON object layout."""
    try:
        raw_vertices = data["vertices"]
        raw_edges = data["edges"]
        raw_boundary = data["boundary"]
    except (KeyError, TypeError) as exc:
        raise DomainError(f"missing required domain field: {exc}") from exc
    if not raw_vertices:
        raise DomainError("domain has no vertices")
    ids = np.array([v["id"] for v in raw_vertices], dtype=np.int64)
    have_xy = [("xy" in v) for v in raw_vertices]
    if all(have_xy):
        coords = np.array([v["xy"] for v in raw_vertices], dtype=np.float64)
    elif any(have_xy):
        raise DomainError("either all vertices carry coordinates or none do")
    else:
        coords = None
    id_to_idx = {int(v): i for i, v in enumerate(ids)}
    if len(id_to_idx) != len(ids):
        raise DomainError("vertex ids are not unique")

    def lookup(vid):
        try:
            return id_to_idx[int(vid)]
        except KeyError:
            raise DomainError(f"edge or marker refers to unknown vertex id {vid}") from None

    edge_u = np.array([lookup(e[0]) for e in raw_edges], dtype=np.int64)
    edge_v = np.array([lookup(e[1]) for e in raw_edges], dtype=np.int64)
    edge_len = np.array([e[2] for e in raw_edges], dtype=np.float64)
    boundary = np.array([lookup(v) for v in raw_boundary], dtype=np.int64)
    frontier = np.array([lookup(v) for v in data.get("frontier", [])], dtype=np.int64)
    return MetricDomain(
        ids=ids, coords=coords, edge_u=edge_u, edge_v=edge_v, edge_len=edge_len,
        boundary_idx=boundary, frontier_idx=frontier, meta=data.get("meta", {}),
    )


def load_domain(path):
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DomainError(f"not valid JSON: {exc}") from exc
    return from_dict(data)


# -- distance to the boundary and dyadic shells -----------------------------


def shell_index(values):
    """Dyadic shell index of each distance value.

    Shell 0 collects ``d <= 1``; shell n >= 1 is ``2**(n-1) < d <= 2**n``.
    Exact at powers of two: frexp gives mantissa 0.5 there, which belongs to
    the lower shell.
    """
    d = np.asarray(values, dtype=np.float64)
    mant, expo = np.frexp(d)
    n = np.where(mant == 0.5, expo - 1, expo)
    out = np.where(d <= 1.0, 0, n).astype(np.int64)
    if d.ndim == 0:
        return int(out)
    return out


@dataclass(eq=False)
class BoundaryDistanceField:
    """Distance to the nearest boundary vertex, per vertex, with shells."""

    values: np.ndarray
    shells: np.ndarray

    @property
    def max_shell(self):
        return int(self.shells.max())


def boundary_distance(domain):
    """Compute the distance-to-boundary field on the full graph.

    Travelling through one boundary vertex on the way to another cannot beat
    the direct distance to the first, so the full graph gives the right
    minimum even though interior curves avoid the boundary.
    """
    values = _graphs.min_distance_field(domain.adjacency, domain.boundary_idx)
    if not np.isfinite(values).all():
        raise DomainError("some vertices cannot reach the boundary")
    return BoundaryDistanceField(values=values, shells=shell_index(values))


# -- structural constants of the discretisation -----------------------------


@dataclass(frozen=True)
class ConstantEstimates:
    """Empirical uniformity and quasiconvexity constants of a domain.

    ``cu`` bounds the two-sided clearance ratio of sampled geodesics: every
    interior point z of a geodesic from x to y satisfies
    ``min(len to x, len to y) <= cu * dist_to_boundary(z)``.
    ``cq`` bounds graph distance over straight-line distance (only when the
    domain has coordinates; otherwise 1.0 and ``cq_valid`` is False).
    """

    cu: float
    cq: float
    cq_valid: bool
    n_pairs: int
    seed: int


def estimate_metric_constants(domain, bdry_field=None, n_pairs=400, seed=0):
    """Sample interior geodesics and measure uniformity constants.

    Geodesics in the graph metric are the best curves the discretisation can
    offer, so the maxima observed here estimate the uniformity constant of
    the underlying domain from below.  Values are floored at 1.
    """
    if bdry_field is None:
        bdry_field = boundary_distance(domain)
    rng = np.random.default_rng(seed)
    interior = np.nonzero(~domain.boundary_mask)[0]
    if interior.size < 2:
        raise DomainError("need at least two interior vertices")
    n_sources = max(2, min(interior.size, int(math.ceil(math.sqrt(n_pairs)))))
    n_targets = max(1, int(math.ceil(n_pairs / n_sources)))
    sources = rng.choice(interior, size=n_sources, replace=False)
    adj = domain.adjacency_interior
    cu = 1.0
    cq = 1.0
    used = 0
    for s in sources:
        dist = _graphs.distances_from(adj, s)
        reachable = interior[np.isfinite(dist[interior])]
        reachable = reachable[reachable != s]
        if reachable.size == 0:
            continue
        targets = rng.choice(reachable, size=min(n_targets, reachable.size),
                             replace=False)
        for t in targets:
            path = _graphs.extract_path(adj, dist, s, t)
            # dist[v] == dist[u] + w(u, v) exactly along an extracted path,
            # so differencing recovers the edge lengths without a lookup
            steps = np.diff(dist[path])
            total = dist[t]
            if domain.coords is not None:
                chord = math.hypot(*(domain.coords[t] - domain.coords[s]))
                if chord > 0:
                    cq = max(cq, total / chord)
            if len(path) > 2:
                left = np.cumsum(steps)[:-1]
                arms = np.minimum(left, total - left)
                clearance = bdry_field.values[path[1:-1]]
                cu = max(cu, float((arms / clearance).max()))
            used += 1
    if used == 0:
        raise DomainError("no usable interior pairs found")
    return ConstantEstimates(cu=float(cu), cq=float(cq),
                             cq_valid=domain.coords is not None,
                             n_pairs=used, seed=seed)


# -- generators --------------------------------------------------------------


def _grid_edges(n_cols, n_rows, h, conn):
    """Edge arrays of an n_cols x n_rows grid, vertex id = row*n_cols + col."""
    if conn not in (4, 8):
        raise DomainError(f"conn must be 4 or 8, got {conn}")
    idx = np.arange(n_cols * n_rows, dtype=np.int64).reshape(n_rows, n_cols)
    us = [idx[:, :-1].ravel(), idx[:-1, :].ravel()]
    vs = [idx[:, 1:].ravel(), idx[1:, :].ravel()]
    ws = [np.full(us[0].size, h), np.full(us[1].size, h)]
    if conn == 8:
        diag = h * math.sqrt(2.0)
        us += [idx[:-1, :-1].ravel(), idx[:-1, 1:].ravel()]
        vs += [idx[1:, 1:].ravel(), idx[1:, :-1].ravel()]
        ws += [np.full(us[2].size, diag), np.full(us[3].size, diag)]
    return np.concatenate(us), np.concatenate(vs), np.concatenate(ws)


def _steps(extent, h):
    n = int(round(extent / h))
    if abs(n * h - extent) > 1e-9 * max(1.0, extent):
        raise DomainError(f"extent {extent} is not a multiple of the mesh size {h}")
    return n


def half_plane(width=40.0, depth=40.0, h=0.1, conn=8):
    """Rectangular sample of the upper half plane.

    Columns span ``[-width/2, width/2]``, rows ``[0, depth]``.  The bottom row
    is the boundary, the top row is the frontier (rays escape upward).
    """
    n_cols = _steps(width, h) + 1
    n_rows = _steps(depth, h) + 1
    xs = np.linspace(-width / 2.0, width / 2.0, n_cols)
    ys = np.linspace(0.0, depth, n_rows)
    coords = np.stack(
        [np.tile(xs, n_rows), np.repeat(ys, n_cols)], axis=1
    )
    eu, ev, ew = _grid_edges(n_cols, n_rows, h, conn)
    n = n_cols * n_rows
    return MetricDomain(
        ids=np.arange(n), coords=coords, edge_u=eu, edge_v=ev, edge_len=ew,
        boundary_idx=np.arange(n_cols),
        frontier_idx=np.arange((n_rows - 1) * n_cols, n),
        meta={"generator": "half_plane", "width": width, "depth": depth,
              "h": h, "conn": conn},
    )


def strip(width=40.0, h=0.1, conn=8):
    """Bounded slab of height 1 over a boundary line; no frontier.

    Every vertex has distance at most 1 to the boundary, so a weight that is
    identically 1 up to distance 1 leaves this domain unchanged.
    """
    n_cols = _steps(width, h) + 1
    n_rows = _steps(1.0, h) + 1
    xs = np.linspace(-width / 2.0, width / 2.0, n_cols)
    ys = np.linspace(0.0, 1.0, n_rows)
    coords = np.stack([np.tile(xs, n_rows), np.repeat(ys, n_cols)], axis=1)
    eu, ev, ew = _grid_edges(n_cols, n_rows, h, conn)
    n = n_cols * n_rows
    return MetricDomain(
        ids=np.arange(n), coords=coords, edge_u=eu, edge_v=ev, edge_len=ew,
        boundary_idx=np.arange(n_cols), frontier_idx=np.arange(0),
        meta={"generator": "strip", "width": width, "h": h, "conn": conn},
    )


def slit_plane(depth=10.0, h=0.1, conn=8):
    """Square window of the plane slit along the segment [-depth, 0] x {0}.

    The grid covers ``[-2*depth, 2*depth]**2``.  Vertices on the slit are the
    boundary.  Because interior curves may not travel through boundary
    vertices, the two banks of the slit are only connected around the tip at
    the origin, which reproduces the slit topology.  The frontier collects
    vertices whose straight-line distance to the slit is at least ``depth``.
    """
    side = 4.0 * depth
    n_side = _steps(side, h) + 1
    xs = np.linspace(-2.0 * depth, 2.0 * depth, n_side)
    coords = np.stack([np.tile(xs, n_side), np.repeat(xs, n_side)], axis=1)
    eu, ev, ew = _grid_edges(n_side, n_side, h, conn)
    x, y = coords[:, 0], coords[:, 1]
    on_axis = np.abs(y) < h * 1e-9
    boundary = np.nonzero(on_axis & (x >= -depth - h * 1e-9) & (x <= h * 1e-9))[0]
    # straight-line distance to the slit segment
    seg = np.where(x > 0, np.hypot(x, y), np.where(x < -depth, np.hypot(x + depth, y), np.abs(y)))
    frontier = np.nonzero(seg >= depth - h * 1e-9)[0]
    frontier = np.setdiff1d(frontier, boundary)
    n = n_side * n_side
    return MetricDomain(
        ids=np.arange(n), coords=coords, edge_u=eu, edge_v=ev, edge_len=ew,
        boundary_idx=boundary, frontier_idx=frontier,
        meta={"generator": "slit_plane", "depth": depth, "h": h, "conn": conn},
    )


_GENERATORS.update(half_plane=half_plane, strip=strip, slit_plane=slit_plane)

_GENERATOR_PARAMS = {
    "half_plane": {"width": float, "depth": float, "h": float, "conn": int},
    "strip": {"width": float, "h": float, "conn": int},
    "slit_plane": {"depth": float, "h": float, "conn": int},
}


def generate_domain(spec):
    """Build a domain from a text spec like ``half_plane:width=40,h=0.1``."""
    name, _, rest = spec.partition(":")
    name = name.strip()
    if name not in _GENERATORS:
        known = ", ".join(sorted(_GENERATORS))
        raise DomainError(f"unknown generator {name!r} (choose from {known})")
    params = {}
    schema = _GENERATOR_PARAMS[name]
    if rest.strip():
        for item in rest.split(","):
            key, eq, val = item.partition("=")
            key = key.strip()
            if not eq or key not in schema:
                raise DomainError(f"bad generator parameter {item!r} for {name}")
            try:
                params[key] = schema[key](val)
            except ValueError:
                raise DomainError(f"bad value for {key!r}: {val!r}") from None
    return _GENERATORS[name](**params)
