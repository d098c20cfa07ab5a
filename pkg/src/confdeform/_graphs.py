"""Shortest-path plumbing shared by the rest of the package.

Everything here operates on plain CSR adjacency matrices and integer vertex
indices.  Translation between user-facing vertex ids and row indices happens
one level up, in :mod:`confdeform.domain`.
"""

from __future__ import annotations

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra


def build_adjacency(n_vertices, edge_u, edge_v, edge_len):
    """Symmetric CSR adjacency matrix from an undirected edge list."""
    edge_u = np.asarray(edge_u, dtype=np.int64)
    edge_v = np.asarray(edge_v, dtype=np.int64)
    edge_len = np.asarray(edge_len, dtype=np.float64)
    rows = np.concatenate([edge_u, edge_v])
    cols = np.concatenate([edge_v, edge_u])
    vals = np.concatenate([edge_len, edge_len])
    return csr_matrix((vals, (rows, cols)), shape=(n_vertices, n_vertices))


def distances_from(adj, source, limit=np.inf):
    """Single-source distances; unreached vertices get ``inf``."""
    return dijkstra(adj, directed=True, indices=int(source), limit=limit)


def min_distance_field(adj, sources):
    """Distance from every vertex to the nearest vertex of ``sources``.

    One multi-source sweep, much cheaper than a run per source.
    """
    sources = np.asarray(sources, dtype=np.int64)
    if sources.size == 0:
        raise ValueError("min_distance_field needs at least one source vertex")
    return dijkstra(adj, directed=True, indices=sources, min_only=True)


def extract_path(adj, dist, source, target):
    """Vertex index sequence of a shortest path ``source -> target``.

    ``dist`` must be the distance array of a run rooted at ``source`` on the
    same matrix.  The walk goes backwards from ``target``, at each step taking
    a neighbour u with ``dist[u] + w(u, v) == dist[v]`` (exact float equality,
    which the relaxation parent always satisfies).  Ties break to the smallest
    vertex index so the returned path does not depend on heap order.
    """
    source = int(source)
    target = int(target)
    if not np.isfinite(dist[target]):
        raise ValueError(f"vertex {target} is not reachable from {source}")
    indptr, indices, data = adj.indptr, adj.indices, adj.data
    path = [target]
    v = target
    while v != source:
        lo, hi = indptr[v], indptr[v + 1]
        nbrs = indices[lo:hi]
        exact = dist[nbrs] + data[lo:hi] == dist[v]
        if not exact.any():
            raise RuntimeError(
                "no optimal predecessor found; distance array does not match "
                "the adjacency matrix"
            )
        v = int(nbrs[exact].min())
        path.append(v)
        if len(path) > adj.shape[0]:
            raise RuntimeError("path extraction cycled; inconsistent distances")
    path.reverse()
    return np.asarray(path, dtype=np.int64)


def edge_lengths_along(adj, path):
    """Per-step edge lengths for a vertex index sequence.

    Raises if two consecutive vertices are not adjacent.
    """
    path = np.asarray(path, dtype=np.int64)
    out = np.empty(max(len(path) - 1, 0), dtype=np.float64)
    indptr, indices, data = adj.indptr, adj.indices, adj.data
    for i in range(len(path) - 1):
        u, v = path[i], path[i + 1]
        row = indices[indptr[u]:indptr[u + 1]]
        hit = np.nonzero(row == v)[0]
        if hit.size == 0:
            raise ValueError(f"vertices {u} and {v} are not adjacent")
        out[i] = data[indptr[u] + hit[0]]
    return out


def pairwise_distances(adj, vertices, tighten=True):
    """Dense distance matrix between the listed vertices.

    Shortest-path distances computed by independent rooted runs are only
    symmetric and triangle-consistent up to float roundoff (different runs
    associate the same edge sums differently).  With ``tighten`` the matrix is
    symmetrised by min and then closed under min-plus until stable, which
    restores both properties exactly.  Every entry remains the float sum of a
    genuine path, evaluated in some association order; observed perturbations
    are below 1e-15 relative.
    """
    vertices = np.asarray(vertices, dtype=np.int64)
    mat = dijkstra(adj, directed=True, indices=vertices)[:, vertices]
    if not tighten:
        return mat
    mat = np.minimum(mat, mat.T)
    np.fill_diagonal(mat, 0.0)
    for _ in range(len(vertices) + 1):
        relaxed = np.minimum(mat, (mat[:, :, None] + mat[None, :, :]).min(axis=1))
        if (relaxed == mat).all():
            return mat
        mat = relaxed
    raise RuntimeError("min-plus closure failed to stabilise")


def drop_incident_edges(n_vertices, edge_u, edge_v, edge_len, blocked, keep=()):
    """Adjacency with every edge touching a blocked vertex removed.

    ``keep`` lists blocked vertices that should stay connected anyway (used
    for queries that start or end at such a vertex).  Blocked vertices remain
    as isolated rows so indexing is unchanged.
    """
    blocked_mask = np.zeros(n_vertices, dtype=bool)
    blocked_mask[np.asarray(blocked, dtype=np.int64)] = True
    for v in keep:
        blocked_mask[int(v)] = False
    ok = ~(blocked_mask[edge_u] | blocked_mask[edge_v])
    return build_adjacency(n_vertices, edge_u[ok], edge_v[ok], edge_len[ok])
