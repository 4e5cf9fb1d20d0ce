"""Independent oracles and fixtures shared by the test modules.

The beam-search interpreter here is a deliberately naive plain-list
transcription of the layer-search loop; it must stay independent of the
package's heap-based implementation so the two can check each other.
"""

from __future__ import annotations

import numpy as np

from walknn.index import BuildParams, HnswIndex


def alg2_layer_search(out, dist, entry, ef, tombstones=frozenset()):
    """Reference beam search over an adjacency dict.

    ``dist(node)`` gives the (squared) distance to the query.  Ties break by
    lowest id for "nearest" pops and by highest id when evicting the furthest
    retained neighbor.  Tombstoned nodes are explored but never retained.
    Returns the retained set sorted ascending by (distance, id).
    """
    visited = {entry}
    candidates = [entry]
    nbrs = [] if entry in tombstones else [entry]
    while candidates:
        c = min(candidates, key=lambda x: (dist(x), x))
        candidates.remove(c)
        if nbrs:
            f = max(nbrs, key=lambda x: (dist(x), x))
            if dist(c) > dist(f):
                break
        for v in out.get(c, []):
            if v in visited:
                continue
            visited.add(v)
            if len(nbrs) < ef:
                qualifies = True
            else:
                f = max(nbrs, key=lambda x: (dist(x), x))
                qualifies = dist(v) < dist(f)
            if qualifies:
                candidates.append(v)
                if v not in tombstones:
                    nbrs.append(v)
                    if len(nbrs) > ef:
                        nbrs.remove(max(nbrs, key=lambda x: (dist(x), x)))
    return sorted(nbrs, key=lambda x: (dist(x), x))


def quadratic_topk(base, queries, k, alive=None):
    """Slow exhaustive k-nearest scan in pure python loops (float64)."""
    alive = range(len(base)) if alive is None else [i for i in range(len(base)) if alive[i]]
    out = []
    for q in queries:
        scored = []
        for i in alive:
            d = 0.0
            for a, b in zip(base[i], q):
                d += (float(a) - float(b)) ** 2
            scored.append((d, i))
        scored.sort()
        out.append([i for _, i in scored[:k]])
    return out


def mirrored(edges):
    """Both directions of every pair."""
    out = []
    for u, v in edges:
        out.append((u, v))
        out.append((v, u))
    return out


def manual_index(vectors, edges_by_layer, tops=None, build=None):
    """Index with hand-wired adjacency: no insertion logic runs."""
    vectors = np.asarray(vectors, dtype=np.float32)
    ix = HnswIndex(vectors.shape[1], build or BuildParams(m=2, ef_construction=2), seed=0)
    tops = tops or {}
    for vec in vectors:
        ix.store.add(vec)
    for i in range(len(vectors)):
        ix.graph.upsert_node(i, tops.get(i, 0))
    for layer, edges in edges_by_layer.items():
        for u, v in edges:
            ix.graph.add_edge(layer, u, v)
    return ix


def knn_graph_index(points, k, rng=None):
    """Single-layer index wired as a mutual k-nearest-neighbor graph."""
    points = np.asarray(points, dtype=np.float32)
    n = len(points)
    d2 = (
        np.einsum("ij,ij->i", points, points)[:, None]
        - 2.0 * (points @ points.T)
        + np.einsum("ij,ij->i", points, points)[None, :]
    )
    np.fill_diagonal(d2, np.inf)
    edges = []
    for i in range(n):
        for j in np.argsort(d2[i])[:k]:
            edges.append((i, int(j)))
            edges.append((int(j), i))
    return manual_index(points, {0: edges})


def integer_points(rng, n, dim, lo=-8, hi=8):
    """Integer grids keep float32 and float64 distance pipelines bit-equal."""
    return rng.integers(lo, hi + 1, size=(n, dim)).astype(np.float32)


def star_mesh_transition_gap(graph, p, result):
    """Worst per-pair deviation of the transformed walk from the original.

    Enumerates one-step and through-p two-step probabilities directly from the
    raw weights and compares them to the transition probabilities of the
    transformed neighborhood (merged weights plus self-loops), independently
    of how the transform was computed.
    """
    weight = {(min(u, v), max(u, v)): w for u, v, w in graph.edges}
    deg = [0.0] * graph.n
    for u, v, w in graph.edges:
        deg[u] += w
        deg[v] += w
    nbrs = sorted({b if a == p else a for a, b, _ in graph.edges if p in (a, b)})
    nbr_set = set(nbrs)
    worst = 0.0
    for u in nbrs:
        outside = sum(
            w
            for (a, b), w in weight.items()
            if u in (a, b) and p not in (a, b) and not {a, b} <= nbr_set
        )
        merged = sum(w for k, w in result.new_weights.items() if u in k)
        deg_new = result.self_loops[u] + outside + merged
        for v in nbrs:
            if v == u:
                continue
            key = (min(u, v), max(u, v))
            one_step = weight.get(key, 0.0) / deg[u]
            through = (
                weight.get((min(u, p), max(u, p)), 0.0)
                / deg[u]
                * weight.get((min(p, v), max(p, v)), 0.0)
                / deg[p]
            )
            got = result.new_weights[key] / deg_new
            worst = max(worst, abs(got - (one_step + through)))
    return worst


def clique_walk_instance(rng, n=26, dim=4, k=4):
    """Draw one pure-greedy-walk instance that passes the excision filter.

    Returns ``(index, query, entry, path, p)`` where the walk visits ``p``
    strictly inside the path and touches ``N(p)`` for the first time at the
    node immediately before ``p``; under that condition removing ``p`` and
    inserting a clique over its neighborhood must leave the walk unchanged
    except for skipping ``p``.  Returns ``None`` when the draw fails the
    filter.
    """
    pts = rng.standard_normal((n, dim)).astype(np.float32)
    ix = knn_graph_index(pts, k)
    q = rng.standard_normal(dim).astype(np.float32)
    entry = int(rng.integers(n))
    path = ix.greedy_walk(q, 0, entry)
    if len(path) < 3:
        return None
    for i in range(1, len(path) - 1):
        p = path[i]
        nbrs = set(ix.graph.out_neighbors(0, p))
        if path[i - 1] not in nbrs:
            continue
        if any(x in nbrs for x in path[: i - 1]):
            continue
        return ix, q, entry, path, p
    return None
