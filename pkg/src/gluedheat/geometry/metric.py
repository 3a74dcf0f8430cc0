"""Path metric on the glued complex.

Distances are shortest-path lengths through the mesh edge graph with
Euclidean edge lengths.  This overestimates the intrinsic geodesic distance
by at most a factor tied to mesh quality and converges to it under
refinement; DOFs in different connected components are at distance inf.
"""

from __future__ import annotations

import numpy as np
from scipy.sparse.csgraph import dijkstra

from ..errors import InvalidParameterError
from .gluing import GluedComplex


def _as_dof(complex: GluedComplex, where) -> int:
    if isinstance(where, (int, np.integer)):
        d = int(where)
        if not (0 <= d < complex.n_dofs):
            raise InvalidParameterError(f"DOF index {d} out of range")
        return d
    return complex.nearest_dof(where)


def glued_distance(complex: GluedComplex, x, y) -> float:
    """Edge-graph distance between two DOFs (or ambient points, snapped)."""
    dx = _as_dof(complex, x)
    dy = _as_dof(complex, y)
    dist = dijkstra(complex.edge_graph, directed=False, indices=dx)
    return float(dist[dy])


def distances_from(complex: GluedComplex, sources, limit: float = np.inf) -> np.ndarray:
    """Multi-source edge-graph distances to every DOF (inf beyond `limit`)."""
    sources = np.atleast_1d(np.asarray(sources, dtype=np.int64))
    dist = dijkstra(
        complex.edge_graph,
        directed=False,
        indices=sources,
        min_only=True,
        limit=limit,
    )
    return dist


def metric_ball(complex: GluedComplex, center, r: float) -> np.ndarray:
    """Sorted DOF indices within edge-graph distance r of the center."""
    if not (r >= 0):
        raise InvalidParameterError("ball radius must be nonnegative")
    c = _as_dof(complex, center)
    dist = dijkstra(complex.edge_graph, directed=False, indices=c, limit=r)
    return np.nonzero(dist <= r)[0]
