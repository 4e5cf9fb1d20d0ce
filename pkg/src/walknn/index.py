"""Multi-layer navigable small-world index with two walk modes.

Greedy mode expands the candidate nearest to the query at every step; softmax
mode samples the next candidate ``c`` with probability proportional to
``exp(-r^2 * ||c - q||^2)``, where ``r`` is rescaled per step so that
``r * mu = r_hat`` for ``mu`` the mean candidate distance.  Both modes share
the same beam bookkeeping and the same termination rule: stop when the popped
candidate is farther from the query than the worst retained neighbor.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .graph import GraphError, LayeredGraph, NodeId


@dataclass
class BuildParams:
    """Construction knobs: degree budget, caps, and beam width.

    ``m_max_upper`` caps out-degree at layers >= 1 and defaults to ``m``;
    ``m_max_bottom`` caps layer 0 and defaults to ``2 * m``, keeping the
    bottom layer denser.  ``level_multiplier`` drives the geometric layer
    assignment and defaults to ``m``.
    """

    m: int = 32
    m_max_upper: Optional[int] = None
    m_max_bottom: Optional[int] = None
    ef_construction: int = 64
    level_multiplier: Optional[float] = None
    selection: str = "top_m"

    def __post_init__(self) -> None:
        if self.m_max_upper is None:
            self.m_max_upper = self.m
        if self.m_max_bottom is None:
            self.m_max_bottom = 2 * self.m
        if self.level_multiplier is None:
            self.level_multiplier = float(self.m)
        if self.m < 2:
            raise ValueError("m must be at least 2")
        if not self.m_max_bottom >= self.m_max_upper >= self.m:
            raise ValueError("need m_max_bottom >= m_max_upper >= m")
        if self.ef_construction < self.m:
            raise ValueError("ef_construction must be >= m")
        if self.level_multiplier <= 1.0:
            raise ValueError("level_multiplier must exceed 1")
        if self.selection not in ("top_m", "heuristic"):
            raise ValueError(f"unknown selection method {self.selection!r}")

    def cap(self, layer: int) -> int:
        return self.m_max_bottom if layer == 0 else self.m_max_upper  # type: ignore[return-value]


@dataclass
class SearchParams:
    """Query-time knobs.  ``ef >= k >= 1`` and ``r_hat > 0`` are enforced."""

    mode: str = "greedy"
    ef: int = 64
    k: int = 10
    r_hat: float = 15.0
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        if self.mode not in ("greedy", "softmax"):
            raise ValueError(f"unknown search mode {self.mode!r}")
        if not self.ef >= self.k >= 1:
            raise ValueError("need ef >= k >= 1")
        if not self.r_hat > 0:
            raise ValueError("r_hat must be positive")


@dataclass
class QueryResult:
    """Top-k answer plus the cost and walk statistics of producing it.

    ``softmax_pops`` counts candidate pops made with at least two options on
    the table; ``greedy_pops`` counts how many of those landed on the argmin.
    Both stay zero in greedy mode.
    """

    ids: list[NodeId]
    distances: list[float]
    distance_computations: int
    softmax_pops: int = 0
    greedy_pops: int = 0


class VectorStore:
    """Dense fixed-dimension point store; node ids are row indices."""

    def __init__(self, dim: int) -> None:
        if dim <= 0:
            raise ValueError("dimension must be positive")
        self.dim = dim
        self._data = np.empty((0, dim), dtype=np.float32)
        self._sq = np.empty(0, dtype=np.float32)
        self._n = 0

    def __len__(self) -> int:
        return self._n

    def add(self, vec: np.ndarray) -> NodeId:
        vec = np.asarray(vec, dtype=np.float32).reshape(-1)
        if vec.shape[0] != self.dim:
            raise ValueError(f"dimension mismatch: got {vec.shape[0]}, store has {self.dim}")
        if self._n == len(self._data):
            grown = max(64, 2 * len(self._data))
            data = np.empty((grown, self.dim), dtype=np.float32)
            data[: self._n] = self._data[: self._n]
            self._data = data
            sq = np.empty(grown, dtype=np.float32)
            sq[: self._n] = self._sq[: self._n]
            self._sq = sq
        self._data[self._n] = vec
        self._sq[self._n] = float(vec @ vec)
        node = self._n
        self._n += 1
        return node

    def get(self, node: NodeId) -> np.ndarray:
        if not 0 <= node < self._n:
            raise KeyError(node)
        return self._data[node]

    @property
    def matrix(self) -> np.ndarray:
        return self._data[: self._n]

    @property
    def sq_norms(self) -> np.ndarray:
        return self._sq[: self._n]


# --------------------------------------------------------------- primitives

def layer_from_uniform(u: float, level_multiplier: float) -> int:
    """``floor(-ln(u) / ln(level_multiplier))`` for ``u`` in (0, 1]."""
    if not 0 < u <= 1:
        raise ValueError("u must lie in (0, 1]")
    if level_multiplier <= 1:
        raise ValueError("level_multiplier must exceed 1")
    return int(math.floor(-math.log(u) / math.log(level_multiplier)))


def assign_layer(rng: np.random.Generator, level_multiplier: float) -> int:
    """Draw the insertion layer from the geometric law; layer 0 is the bottom."""
    u = 1.0 - rng.random()  # (0, 1]: guards the log against u == 0
    return layer_from_uniform(u, level_multiplier)


def adaptive_r(distances: Sequence[float], r_hat: float) -> float:
    """Per-step sharpness ``r = r_hat / mean(distances)``.

    Returns ``inf`` as a sentinel when the mean distance is zero, which
    downstream samplers treat as "pick uniformly among the argmin set".
    """
    arr = np.asarray(distances, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("adaptive_r needs at least one candidate")
    mu = float(arr.mean())
    if mu == 0.0:
        return math.inf
    return r_hat / mu


def transition_probabilities(
    distances: Sequence[float], r_hat: float, r: Optional[float] = None
) -> np.ndarray:
    """Softmax distribution ``p_i ∝ exp(-(r * d_i)^2)`` over candidates.

    Logits are shifted by their maximum before exponentiation, so the sharp
    regime never overflows.  A non-finite ``r`` (the degenerate sentinel)
    yields the uniform distribution over the argmin set.
    """
    d = np.asarray(distances, dtype=np.float64)
    if d.size == 0:
        raise ValueError("no candidates")
    if r is None:
        r = adaptive_r(d, r_hat)
    if not math.isfinite(r):
        mask = d == d.min()
        return mask / mask.sum()
    logits = -((r * d) ** 2)
    logits -= logits.max()
    weights = np.exp(logits)
    return weights / weights.sum()


def _sample_pop(
    rng: np.random.Generator, sq_dists: np.ndarray, r_hat: float
) -> tuple[int, bool]:
    """Sample one candidate index; also report whether it was an argmin.

    Works on squared distances: with ``r = r_hat / mean(sqrt(d2))`` the logits
    are ``-r^2 * d2``.  Sampling uses the Gumbel-argmax trick on max-shifted
    logits, which is exact for the softmax and never exponentiates.
    """
    n = sq_dists.size
    if n == 1:
        return 0, True
    mu = float(np.sqrt(sq_dists).mean())
    if mu == 0.0 or not math.isfinite(r_hat):
        mins = np.flatnonzero(sq_dists == sq_dists.min())
        pick = int(mins[rng.integers(len(mins))]) if len(mins) > 1 else int(mins[0])
        return pick, True
    r = r_hat / mu
    logits = -(r * r) * sq_dists
    logits -= logits.max()
    pick = int(np.argmax(logits + rng.gumbel(size=n)))
    return pick, bool(sq_dists[pick] == sq_dists.min())


def select_neighbors(
    center: np.ndarray,
    candidates: Sequence[tuple[float, NodeId]],
    m: int,
    method: str,
    store: Optional[VectorStore] = None,
) -> list[tuple[float, NodeId]]:
    """Pick at most ``m`` links for ``center`` from distance-evaluated candidates.

    ``top_m`` keeps the nearest ``m`` (ties by lowest id).  ``heuristic``
    scans in ascending distance and keeps a candidate only when it is closer
    to the center than to every already-kept node, the usual diversity rule;
    it needs the ``store`` to measure candidate-to-candidate distances.
    Distances in and out are squared.
    """
    ranked = sorted(candidates, key=lambda t: (t[0], t[1]))
    if method == "top_m":
        return ranked[:m]
    if method != "heuristic":
        raise ValueError(f"unknown selection method {method!r}")
    if store is None:
        raise ValueError("heuristic selection needs the vector store")
    kept: list[tuple[float, NodeId]] = []
    for d_cq, c in ranked:
        if len(kept) >= m:
            break
        vec = store.get(c)
        ok = True
        for _, g in kept:
            diff = vec - store.get(g)
            if float(diff @ diff) <= d_cq:
                ok = False
                break
        if ok:
            kept.append((d_cq, c))
    return kept


# -------------------------------------------------------------------- index

class HnswIndex:
    """Layered proximity graph over a vector store.

    Queries are pure reads and may run concurrently, each owning its private
    distance counter and random stream; insertion and deletion require
    exclusive access.
    """

    def __init__(
        self,
        dim: int,
        build: Optional[BuildParams] = None,
        seed: int = 0,
    ) -> None:
        self.build = build if build is not None else BuildParams()
        self.store = VectorStore(dim)
        self.graph = LayeredGraph()
        self._rng = np.random.default_rng(seed)
        self.distance_hook = None  # optional callable(n_evals) for instrumentation

    # ------------------------------------------------------------ plumbing

    def _sq_dists(self, q: np.ndarray, qq: float, ids: list[int], counter: list[int]) -> np.ndarray:
        """Squared distances from ``q`` to ``ids``; one counted evaluation each."""
        counter[0] += len(ids)
        if self.distance_hook is not None:
            self.distance_hook(len(ids))
        mat = self.store._data
        sq = self.store._sq
        idx = np.asarray(ids, dtype=np.intp)
        d = sq[idx] - 2.0 * (mat[idx] @ q) + qq
        np.maximum(d, 0.0, out=d)
        return d

    def copy(self) -> "HnswIndex":
        dup = HnswIndex.__new__(HnswIndex)
        dup.build = self.build
        dup.graph = self.graph.copy()
        store = VectorStore(self.store.dim)
        store._data = self.store._data.copy()
        store._sq = self.store._sq.copy()
        store._n = self.store._n
        dup.store = store
        dup._rng = np.random.default_rng()
        dup._rng.bit_generator.state = self._rng.bit_generator.state
        dup.distance_hook = None
        return dup

    def is_alive(self, node: NodeId) -> bool:
        return self.graph.has_node(node, 0) and not self.graph.is_tombstoned(node)

    # -------------------------------------------------------------- search

    def layer_search(
        self,
        q: np.ndarray,
        layer: int,
        entry: NodeId,
        ef: int,
        params: Optional[SearchParams] = None,
        rng: Optional[np.random.Generator] = None,
    ) -> list[tuple[float, NodeId]]:
        """Beam search one layer; returns at most ``ef`` (sq_dist, id) pairs.

        The entry must be present at the layer.  Tombstoned nodes are walked
        through but never retained in the returned set.
        """
        if ef < 1:
            raise ValueError("ef must be at least 1")
        if not self.graph.has_node(entry, layer):
            raise GraphError(f"entry {entry} absent at layer {layer}")
        params = params if params is not None else SearchParams(ef=max(ef, 1), k=1)
        if rng is None:
            rng = np.random.default_rng(params.seed)
        q = np.asarray(q, dtype=np.float32).reshape(-1)
        counter = [0]
        results, _, _ = self._layer_search(
            q, float(q @ q), layer, [entry], ef, params.mode, params.r_hat, rng, counter
        )
        return results

    def _layer_search(
        self,
        q: np.ndarray,
        qq: float,
        layer: int,
        entries: list[NodeId],
        ef: int,
        mode: str,
        r_hat: float,
        rng: Optional[np.random.Generator],
        counter: list[int],
    ) -> tuple[list[tuple[float, NodeId]], NodeId, tuple[int, int]]:
        """Shared beam loop.  Returns (ascending results, fallback node, pop stats).

        The fallback is the nearest visited node regardless of tombstoning; it
        keeps descents navigable when a whole region is tombstoned.  Pop stats
        are (total softmax pops, pops that hit the argmin).
        """
        out = self.graph._layers[layer].out
        tombs = self.graph._tombstones
        d0 = self._sq_dists(q, qq, entries, counter)
        visited = set(entries)

        best_d = math.inf
        best_node = entries[0]
        softmax = mode == "softmax"
        pops = 0
        hits = 0

        if softmax:
            cap = 256
            cand_d = np.empty(cap, dtype=np.float64)
            cand_id = np.empty(cap, dtype=np.int64)
            count = 0
        else:
            cand_heap: list[tuple[float, int]] = []
        nbrs: list[tuple[float, int]] = []  # max-heap via (-d, -id)

        def softmax_push(node: int, d: float) -> None:
            nonlocal cap, cand_d, cand_id, count
            if count == cap:
                cap *= 2
                cand_d = np.resize(cand_d, cap)
                cand_id = np.resize(cand_id, cap)
            cand_d[count] = d
            cand_id[count] = node
            count += 1

        for node, d in zip(entries, d0):
            d = float(d)
            if d < best_d or (d == best_d and node < best_node):
                best_d, best_node = d, node
            if softmax:
                softmax_push(node, d)
            else:
                heapq.heappush(cand_heap, (d, node))
            if node not in tombs:
                heapq.heappush(nbrs, (-d, -node))
                if len(nbrs) > ef:
                    heapq.heappop(nbrs)

        while (count if softmax else cand_heap):
            if softmax:
                pick, was_min = _sample_pop(rng, cand_d[:count], r_hat)  # type: ignore[arg-type]
                # Forced moves from a single candidate say nothing about how
                # greedy the sampler is, so only multi-candidate pops count.
                if count >= 2:
                    pops += 1
                    hits += was_min
                d_c, c = float(cand_d[pick]), int(cand_id[pick])
                count -= 1
                cand_d[pick] = cand_d[count]
                cand_id[pick] = cand_id[count]
            else:
                d_c, c = heapq.heappop(cand_heap)
            if nbrs and d_c > -nbrs[0][0]:
                break
            targets = out.get(c)
            if not targets:
                continue
            fresh = [v for v in targets if v not in visited]
            if not fresh:
                continue
            visited.update(fresh)
            dists = self._sq_dists(q, qq, fresh, counter)
            for v, dv in zip(fresh, dists):
                dv = float(dv)
                if dv < best_d or (dv == best_d and v < best_node):
                    best_d, best_node = dv, v
                if len(nbrs) < ef or dv < -nbrs[0][0]:
                    if softmax:
                        softmax_push(v, dv)
                    else:
                        heapq.heappush(cand_heap, (dv, v))
                    if v not in tombs:
                        heapq.heappush(nbrs, (-dv, -v))
                        if len(nbrs) > ef:
                            heapq.heappop(nbrs)

        results = sorted(((-d, -node) for d, node in nbrs), key=lambda t: (t[0], t[1]))
        return results, best_node, (pops, hits)

    def search(
        self,
        q: np.ndarray,
        params: SearchParams,
        rng: Optional[np.random.Generator] = None,
    ) -> QueryResult:
        """Top-k query: greedy descent through the upper layers, beam at layer 0.

        Tombstoned nodes are traversed but never returned.  The distance
        counter covers every vector evaluation, descent included.
        """
        if self.graph.entry_point is None:
            raise ValueError("empty index")
        if self.graph.alive_bottom_count() == 0:
            raise ValueError("index has no live points")
        if rng is None:
            rng = np.random.default_rng(params.seed)
        q = np.asarray(q, dtype=np.float32).reshape(-1)
        if q.shape[0] != self.store.dim:
            raise ValueError("dimension mismatch")
        qq = float(q @ q)
        counter = [0]
        pops = 0
        hits = 0

        node, top = self.graph.entry_point
        for layer in range(top, 0, -1):
            results, fallback, stats = self._layer_search(
                q, qq, layer, [node], 1, params.mode, params.r_hat, rng, counter
            )
            node = results[0][1] if results else fallback
            pops += stats[0]
            hits += stats[1]

        results, _, stats = self._layer_search(
            q, qq, 0, [node], params.ef, params.mode, params.r_hat, rng, counter
        )
        pops += stats[0]
        hits += stats[1]
        topk = results[: params.k]
        return QueryResult(
            ids=[node for _, node in topk],
            distances=[math.sqrt(d) for d, _ in topk],
            distance_computations=counter[0],
            softmax_pops=pops,
            greedy_pops=hits,
        )

    def greedy_walk(self, q: np.ndarray, layer: int, entry: NodeId) -> list[NodeId]:
        """Pure hill-descent walk: hop to the nearest out-neighbor while it improves.

        Ignores tombstones; returns the visited node sequence including the
        entry and the local minimum where the walk stops.
        """
        if not self.graph.has_node(entry, layer):
            raise GraphError(f"entry {entry} absent at layer {layer}")
        q = np.asarray(q, dtype=np.float32).reshape(-1)
        qq = float(q @ q)
        counter = [0]
        out = self.graph._layers[layer].out
        cur = entry
        cur_d = float(self._sq_dists(q, qq, [entry], counter)[0])
        path = [entry]
        while True:
            targets = out[cur]
            if not targets:
                return path
            dists = self._sq_dists(q, qq, list(targets), counter)
            pick = int(np.lexsort((targets, dists))[0])
            d_best = float(dists[pick])
            if d_best < cur_d:
                cur, cur_d = targets[pick], d_best
                path.append(cur)
            else:
                return path

    # ----------------------------------------------------------- insertion

    def add(self, vec: np.ndarray, rng: Optional[np.random.Generator] = None) -> NodeId:
        """Insert one point and wire it into every layer up to its drawn level."""
        rng = rng if rng is not None else self._rng
        node = self.store.add(vec)
        level = assign_layer(rng, self.build.level_multiplier)  # type: ignore[arg-type]

        if self.graph.entry_point is None:
            self.graph.upsert_node(node, level)
            return node

        q = self.store.get(node)
        qq = float(q @ q)
        counter = [0]
        entry, top = self.graph.entry_point
        cur = entry
        for layer in range(top, level, -1):
            results, fallback, _ = self._layer_search(
                q, qq, layer, [cur], 1, "greedy", 15.0, None, counter
            )
            cur = results[0][1] if results else fallback

        self.graph.upsert_node(node, level)
        for layer in range(min(top, level), -1, -1):
            candidates, fallback, _ = self._layer_search(
                q, qq, layer, [cur], self.build.ef_construction, "greedy", 15.0, None, counter
            )
            chosen = select_neighbors(
                q, candidates, self.build.m, self.build.selection, self.store
            )
            for _, v in chosen:
                self.graph.add_edge(layer, node, v)
                self.graph.add_edge(layer, v, node)
            cap = self.build.cap(layer)
            for _, v in chosen:
                self._enforce_cap(layer, v, cap)
            cur = candidates[0][1] if candidates else fallback
        return node

    def _enforce_cap(self, layer: int, node: NodeId, cap: int) -> None:
        targets = self.graph._layers[layer].out[node]
        if len(targets) <= cap:
            return
        center = self.store.get(node)
        cc = float(center @ center)
        counter = [0]
        dists = self._sq_dists(center, cc, list(targets), counter)
        ranked = [(float(d), v) for d, v in zip(dists, targets)]
        chosen = select_neighbors(center, ranked, cap, self.build.selection, self.store)
        self.graph.set_out_neighbors(layer, node, [v for _, v in chosen])


# ------------------------------------------------- single-layer constructor

def construct_layer_sparsified(
    points: np.ndarray,
    m: int,
    r_hat: float = 15.0,
    rng: Optional[np.random.Generator] = None,
) -> LayeredGraph:
    """Build one undirected layer by densify / random-walk / sparsify rounds.

    Each arriving point is notionally wired to every prior point with Gaussian
    kernel weights, a softmax walk from the first point collects a visited
    set, and ``m`` retained neighbors are sampled from it with probability
    proportional to their kernel weight to the new point (Gumbel top-m, i.e.
    weighted sampling without replacement).  Overfull neighbors are resampled
    down to ``m`` edges the same way.  The transient all-pairs star is never
    materialized: the walk cannot route through the arriving point, so walking
    the existing graph is equivalent.
    """
    if rng is None:
        rng = np.random.default_rng()
    pts = np.asarray(points, dtype=np.float32)
    if pts.ndim != 2 or len(pts) == 0:
        raise ValueError("points must be a non-empty 2d array")
    if m < 1:
        raise ValueError("m must be positive")
    n = len(pts)
    sq = np.einsum("ij,ij->i", pts, pts)
    graph = LayeredGraph()
    graph.upsert_node(0, 0)

    def kernel_sq_dists(i: int, ids: list[int]) -> np.ndarray:
        idx = np.asarray(ids, dtype=np.intp)
        d = sq[idx] - 2.0 * (pts[idx] @ pts[i]) + sq[i]
        np.maximum(d, 0.0, out=d)
        return d

    def weighted_top(ids: list[int], d2: np.ndarray, k: int) -> list[int]:
        if len(ids) <= k:
            return list(ids)
        mu = float(np.sqrt(d2).mean())
        if mu == 0.0:
            order = rng.permutation(len(ids))[:k]
        else:
            r = r_hat / mu
            logits = -(r * r) * d2
            logits -= logits.max()
            order = np.argsort(-(logits + rng.gumbel(size=len(ids))))[:k]
        return [ids[int(j)] for j in order]

    out = graph._layers[0].out
    cand_ids = np.empty(n, dtype=np.int64)
    cand_d2 = np.empty(n, dtype=np.float64)
    for i in range(1, n):
        graph.upsert_node(i, 0)
        visited_ids = [0]
        visited_d2 = [float(kernel_sq_dists(i, [0])[0])]
        in_visited = {0}
        cand_ids[0] = 0
        cand_d2[0] = visited_d2[0]
        count = 1
        while count:
            pick, _ = _sample_pop(rng, cand_d2[:count], r_hat)
            c = int(cand_ids[pick])
            count -= 1
            cand_ids[pick] = cand_ids[count]
            cand_d2[pick] = cand_d2[count]
            fresh = [v for v in out[c] if v not in in_visited and v != i]
            if not fresh:
                continue
            in_visited.update(fresh)
            d2 = kernel_sq_dists(i, fresh)
            visited_ids.extend(fresh)
            visited_d2.extend(float(x) for x in d2)
            cand_ids[count : count + len(fresh)] = fresh
            cand_d2[count : count + len(fresh)] = d2
            count += len(fresh)

        sample = weighted_top(visited_ids, np.asarray(visited_d2), m)
        for u in sample:
            graph.add_edge(0, i, u)
            graph.add_edge(0, u, i)
        for u in sample:
            targets = list(out[u])
            if len(targets) <= m:
                continue
            keep = set(weighted_top(targets, kernel_sq_dists(u, targets), m))
            for v in targets:
                if v not in keep:
                    graph.remove_edge(0, u, v)
                    graph.remove_edge(0, v, u)
    return graph
