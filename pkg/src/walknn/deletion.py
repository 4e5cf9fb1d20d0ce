"""Bottom-layer vertex deletion strategies.

Every strategy except ``tombstone`` removes the point's presence at layer 0
and tombstones it at the layers above; they differ only in how the hole is
patched.  SPatch reweights the deleted point's neighborhood with the star-mesh
formula over query-independent Gaussian kernel weights and keeps the heaviest
bridging pairs; all weight arithmetic runs in the log domain so the sharpness
scale can never underflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .graph import GraphError, NodeId, UndirectedWeightedGraph
from .index import HnswIndex, select_neighbors

STRATEGIES = (
    "tombstone",
    "nopatch",
    "local",
    "fresh",
    "spatch_global",
    "spatch_pernode",
    "clique",
    "global_reconnect",
)


@dataclass
class DeletionConfig:
    """Strategy selector plus its knobs.

    ``alpha`` is the fan-out multiplier for SPatch variants and the prune
    slack for ``fresh``; ``r_hat_delete`` sets the dimensionless sharpness of
    the deletion-time kernel; ``keep_existing`` makes SPatch purely additive,
    never dropping surviving pre-existing edges.
    """

    strategy: str = "spatch_pernode"
    alpha: float = 1.2
    r_hat_delete: float = 1.0
    keep_existing: bool = True

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.r_hat_delete > 0:
            raise ValueError("r_hat_delete must be positive")


@dataclass
class DeletionOutcome:
    """What one deletion did to the bottom layer."""

    strategy: str
    node: NodeId
    edges_added: int = 0
    edges_removed: int = 0
    degraded: bool = False
    kept_pairs: Optional[list[tuple[NodeId, NodeId]]] = None


@dataclass
class StarMeshResult:
    """Reweighted neighborhood of a removed vertex.

    ``new_weights`` maps canonical unordered pairs ``(u, v)`` with ``u < v``
    over the neighborhood to their merged weight; ``self_loops`` is populated
    only in exact mode, where carrying ``w(u,p)^2 / deg(p)`` per neighbor makes
    the transform preserve both degrees and one-step-or-through-p transition
    probabilities.
    """

    new_weights: dict[tuple[int, int], float] = field(default_factory=dict)
    self_loops: dict[int, float] = field(default_factory=dict)


def star_mesh_weights(
    graph: UndirectedWeightedGraph, p: int, mode: str = "practical"
) -> StarMeshResult:
    """Star-mesh transform around vertex ``p``.

    For every unordered pair ``u != v`` in ``N(p)``:

        w'(u, v) = w(u, v) + w(u, p) * w(p, v) / deg(p)

    ``exact_with_selfloops`` additionally emits the ``v == u`` term as a
    self-loop per neighbor; ``practical`` drops it, since a search never
    follows a self-edge.
    """
    if mode not in ("practical", "exact_with_selfloops"):
        raise ValueError(f"unknown star-mesh mode {mode!r}")
    if not 0 <= p < graph.n:
        raise GraphError(f"vertex {p} out of range")
    weight: dict[tuple[int, int], float] = {}
    star: dict[int, float] = {}
    for a, b, w in graph.edges:
        weight[(min(a, b), max(a, b))] = w
        if a == p:
            star[b] = w
        elif b == p:
            star[a] = w
    if not star:
        raise GraphError(f"vertex {p} is isolated")
    deg_p = sum(star.values())
    nbrs = sorted(star)
    result = StarMeshResult()
    for i, u in enumerate(nbrs):
        for v in nbrs[i + 1 :]:
            base = weight.get((u, v), 0.0)
            result.new_weights[(u, v)] = base + star[u] * star[v] / deg_p
    if mode == "exact_with_selfloops":
        for u in nbrs:
            result.self_loops[u] = star[u] * star[u] / deg_p
    return result


# ----------------------------------------------------------------- helpers

def _logsumexp(values: np.ndarray) -> float:
    top = float(values.max())
    if not math.isfinite(top):
        return top
    return top + math.log(float(np.exp(values - top).sum()))


def deletion_scale(index: HnswIndex, p: NodeId, neighbors: list[NodeId]) -> float:
    """Kernel sharpness ``r`` with ``r * mu = 1`` over the local point cloud.

    ``mu`` is the mean pairwise distance over ``{p} + neighbors``; clouds
    larger than 64 points are thinned through a subsample seeded by ``p`` so
    repeated runs stay deterministic.  Returns 0 when the cloud is degenerate,
    which flattens all weights and leaves ordering to the tie-break.
    """
    ids = sorted(set(neighbors) | {p})
    if len(ids) > 64:
        rng = np.random.default_rng(p)
        ids = sorted(rng.choice(ids, size=64, replace=False))
    pts = index.store.matrix[np.asarray(ids, dtype=np.intp)].astype(np.float64)
    diffs = pts[:, None, :] - pts[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diffs, diffs)
    iu = np.triu_indices(len(ids), k=1)
    mu = float(np.sqrt(d2[iu]).mean()) if len(iu[0]) else 0.0
    return 0.0 if mu == 0.0 else 1.0 / mu


def _finalize_bottom_removal(index: HnswIndex, p: NodeId) -> int:
    """Hard-remove ``p`` at layer 0, tombstoning it at any layer above.

    Entry repair, when needed, promotes the nearest surviving out-neighbor at
    the removed node's top layer.  Returns the number of directed edges
    dropped.
    """
    graph = index.graph
    if graph.node_top(p) > 0:
        graph.set_tombstone(p)
    pvec = index.store.get(p).astype(np.float64)

    def rank(w: NodeId) -> float:
        diff = index.store.get(w).astype(np.float64) - pvec
        return float(diff @ diff)

    removed = graph.remove_node(p, "hard", layer=0, rank=rank)
    return sum(len(edges) for edges in removed.values())


def _pair_sq_dists(index: HnswIndex, left: list[int], right: list[int]) -> np.ndarray:
    a = index.store.matrix[np.asarray(left, dtype=np.intp)].astype(np.float64)
    b = index.store.matrix[np.asarray(right, dtype=np.intp)].astype(np.float64)
    d2 = (
        np.einsum("ij,ij->i", a, a)[:, None]
        - 2.0 * (a @ b.T)
        + np.einsum("ij,ij->i", b, b)[None, :]
    )
    np.maximum(d2, 0.0, out=d2)
    return d2


def spatch_log_weight_table(
    index: HnswIndex, p: NodeId, nin: list[int], nout: list[int], r: float
) -> np.ndarray:
    """Log-domain star-mesh table ``log w'(nin[i] -> nout[j])``.

    ``log w(u, v) = -r^2 ||u - v||^2`` and the merge is ``logaddexp`` of the
    direct weight with the through-p product, so only orderings, never raw
    exponentials, are ever materialized.  Same-node pairs are ``-inf``.
    """
    r2 = r * r
    lw_uv = -r2 * _pair_sq_dists(index, nin, nout)
    lw_up = -r2 * _pair_sq_dists(index, nin, [p])[:, 0]
    lw_pv = -r2 * _pair_sq_dists(index, [p], nout)[0, :]
    log_deg = _logsumexp(np.concatenate([lw_up, lw_pv]))
    table = np.logaddexp(lw_uv, lw_up[:, None] + lw_pv[None, :] - log_deg)
    same = np.asarray(nin)[:, None] == np.asarray(nout)[None, :]
    table[same] = -np.inf
    return table


def delete_spatch(index: HnswIndex, p: NodeId, cfg: DeletionConfig) -> DeletionOutcome:
    """Sparsified patching: keep only the heaviest star-mesh bridging pairs.

    ``spatch_global`` ranks all in->out pairs jointly and keeps the top
    ``ceil(alpha * (|N_in| + |N_out|))``; ``spatch_pernode`` keeps, for every
    out-neighbor, its top ``ceil(alpha * ceil((|N_in|+|N_out|) / |N_out|))``
    in-neighbors and wires them toward it.  With ``keep_existing`` unset, all
    surviving in->out edges are first dropped and replaced by the kept set.
    Degenerate neighborhoods degrade to plain removal.
    """
    graph = index.graph
    nin = sorted(graph.in_neighbors(0, p))
    nout = sorted(graph.out_neighbors(0, p))
    if not nin or not nout:
        outcome = delete_nopatch(index, p)
        return DeletionOutcome(
            strategy=cfg.strategy,
            node=p,
            edges_removed=outcome.edges_removed,
            degraded=True,
            kept_pairs=[],
        )

    r = deletion_scale(index, p, nin + nout) * cfg.r_hat_delete
    table = spatch_log_weight_table(index, p, nin, nout, r)

    kept: list[tuple[int, int]] = []
    if cfg.strategy == "spatch_global":
        t = math.ceil(cfg.alpha * (len(nin) + len(nout)))
        flat = [
            (-table[i, j], nin[i], nout[j])
            for i in range(len(nin))
            for j in range(len(nout))
            if math.isfinite(table[i, j])
        ]
        flat.sort()
        kept = [(u, v) for _, u, v in flat[:t]]
    else:
        fan = -(-(len(nin) + len(nout)) // len(nout))
        t = math.ceil(cfg.alpha * fan)
        for j, u in enumerate(nout):
            col = [
                (-table[i, j], nin[i])
                for i in range(len(nin))
                if math.isfinite(table[i, j])
            ]
            col.sort()
            kept.extend((v, u) for _, v in col[:t])

    removed = 0
    if not cfg.keep_existing:
        out_set = set(nout)
        for u in nin:
            for v in list(graph._layers[0].out[u]):
                if v in out_set and v != u:
                    graph.remove_edge(0, u, v)
                    removed += 1
    added = 0
    for u, v in kept:
        added += graph.add_edge(0, u, v)
    removed += _finalize_bottom_removal(index, p)
    return DeletionOutcome(
        strategy=cfg.strategy,
        node=p,
        edges_added=added,
        edges_removed=removed,
        kept_pairs=kept,
    )


def delete_tombstone(index: HnswIndex, p: NodeId) -> DeletionOutcome:
    """Flag ``p`` as never-returnable; the graph is untouched."""
    index.graph.set_tombstone(p)
    return DeletionOutcome(strategy="tombstone", node=p)


def delete_nopatch(index: HnswIndex, p: NodeId) -> DeletionOutcome:
    """Remove ``p`` at the bottom layer without adding any replacement edges."""
    removed = _finalize_bottom_removal(index, p)
    return DeletionOutcome(strategy="nopatch", node=p, edges_removed=removed)


def delete_local_reconnect(index: HnswIndex, p: NodeId) -> DeletionOutcome:
    """Bridge each in-neighbor to its nearest out-neighbor of ``p``."""
    graph = index.graph
    nin = sorted(graph.in_neighbors(0, p))
    nout = sorted(graph.out_neighbors(0, p))
    if not nin or not nout:
        out = delete_nopatch(index, p)
        return DeletionOutcome(
            strategy="local", node=p, edges_removed=out.edges_removed, degraded=True
        )
    d2 = _pair_sq_dists(index, nin, nout)
    same = np.asarray(nin)[:, None] == np.asarray(nout)[None, :]
    d2[same] = np.inf
    added = 0
    for i, u in enumerate(nin):
        j = int(np.argmin(d2[i]))  # nout sorted ascending, so ties take the lowest id
        if math.isfinite(d2[i, j]):
            added += graph.add_edge(0, u, nout[j])
    removed = _finalize_bottom_removal(index, p)
    return DeletionOutcome(strategy="local", node=p, edges_added=added, edges_removed=removed)


def robust_prune(
    index: HnswIndex, u: NodeId, candidates: list[NodeId], alpha: float, cap: int
) -> list[NodeId]:
    """Diversity pruning: accept nearest candidates, discarding any remaining
    ``c'`` with ``alpha * ||c - c'|| <= ||u - c'||`` after each acceptance.

    Distances are plain Euclidean so ``alpha`` scales linearly.  Returns at
    most ``cap`` ids in acceptance order.
    """
    if not candidates:
        return []
    ids = np.asarray(sorted(set(candidates)), dtype=np.intp)
    du = np.sqrt(_pair_sq_dists(index, [u], list(ids))[0])
    order = np.lexsort((ids, du))
    ids = ids[order]
    du = du[order]
    kept: list[int] = []
    while len(ids) and len(kept) < cap:
        c = int(ids[0])
        kept.append(c)
        if len(ids) == 1:
            break
        rest_ids = ids[1:]
        rest_du = du[1:]
        dc = np.sqrt(_pair_sq_dists(index, [c], list(rest_ids))[0])
        keep_mask = alpha * dc > rest_du
        ids = rest_ids[keep_mask]
        du = rest_du[keep_mask]
    return kept


def delete_freshdiskann(
    index: HnswIndex, p: NodeId, alpha_prune: float = 1.2
) -> DeletionOutcome:
    """Two-hop repair: reroute each in-neighbor through ``N_out(u) ∪ N_out(p)``
    and rebuild its out-list with robust pruning under the bottom degree cap."""
    graph = index.graph
    nin = sorted(graph.in_neighbors(0, p))
    nout_p = set(graph.out_neighbors(0, p))
    cap = index.build.m_max_bottom
    added = 0
    removed = 0
    for u in nin:
        candidates = (set(graph.out_neighbors(0, u)) | nout_p) - {p, u}
        new = robust_prune(index, u, sorted(candidates), alpha_prune, cap)  # type: ignore[arg-type]
        old = set(graph.out_neighbors(0, u))
        graph.set_out_neighbors(0, u, new)
        added += len(set(new) - old)
        removed += len(old - set(new))
    removed += _finalize_bottom_removal(index, p)
    return DeletionOutcome(strategy="fresh", node=p, edges_added=added, edges_removed=removed)


def delete_clique(index: HnswIndex, p: NodeId) -> DeletionOutcome:
    """Wire every in-neighbor of ``p`` to every out-neighbor before removal."""
    graph = index.graph
    nin = sorted(graph.in_neighbors(0, p))
    nout = sorted(graph.out_neighbors(0, p))
    added = 0
    for u in nin:
        for v in nout:
            if u != v:
                added += graph.add_edge(0, u, v)
    removed = _finalize_bottom_removal(index, p)
    return DeletionOutcome(strategy="clique", node=p, edges_added=added, edges_removed=removed)


def delete_global_reconnect(index: HnswIndex, p: NodeId) -> DeletionOutcome:
    """Remove ``p`` and rebuild every former neighbor's bottom out-list by
    rerunning the construction search for it."""
    graph = index.graph
    affected = sorted(set(graph.in_neighbors(0, p)) | set(graph.out_neighbors(0, p)))
    removed = _finalize_bottom_removal(index, p)
    added = 0
    build = index.build
    for u in affected:
        entry = graph.entry_point
        if entry is None:
            break
        q = index.store.get(u)
        qq = float(q @ q)
        counter = [0]
        cur, top = entry
        for layer in range(top, 0, -1):
            results, fallback, _ = index._layer_search(
                q, qq, layer, [cur], 1, "greedy", 15.0, None, counter
            )
            cur = results[0][1] if results else fallback
        candidates, _, _ = index._layer_search(
            q, qq, 0, [cur], build.ef_construction, "greedy", 15.0, None, counter
        )
        candidates = [(d, c) for d, c in candidates if c != u]
        chosen = select_neighbors(q, candidates, build.m, build.selection, index.store)
        old = set(graph.out_neighbors(0, u))
        new = [v for _, v in chosen]
        graph.set_out_neighbors(0, u, new)
        added += len(set(new) - old)
        removed += len(old - set(new))
        for v in new:
            added += graph.add_edge(0, v, u)
            index._enforce_cap(0, v, build.m_max_bottom)
    return DeletionOutcome(
        strategy="global_reconnect", node=p, edges_added=added, edges_removed=removed
    )


def delete_point(index: HnswIndex, p: NodeId, cfg: DeletionConfig) -> DeletionOutcome:
    """Dispatch one deletion according to ``cfg.strategy``."""
    strategy = cfg.strategy
    if strategy == "tombstone":
        return delete_tombstone(index, p)
    if strategy == "nopatch":
        return delete_nopatch(index, p)
    if strategy == "local":
        return delete_local_reconnect(index, p)
    if strategy == "fresh":
        return delete_freshdiskann(index, p, cfg.alpha)
    if strategy == "clique":
        return delete_clique(index, p)
    if strategy == "global_reconnect":
        return delete_global_reconnect(index, p)
    if strategy in ("spatch_global", "spatch_pernode"):
        return delete_spatch(index, p, cfg)
    raise ValueError(f"unknown strategy {strategy!r}")
