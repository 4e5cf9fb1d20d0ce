"""Layered directed graph storage for navigable small-world indexes.

Adjacency is kept both ways at every layer: ordered out-neighbor lists plus
reverse in-neighbor sets, so deletion-time neighborhood queries run in
O(degree) instead of scanning the whole layer.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional

NodeId = int

SNAPSHOT_MAGIC = b"WNNG"
SNAPSHOT_VERSION = 1


class GraphError(ValueError):
    """Raised when a graph mutation violates its contract."""


@dataclass
class UndirectedWeightedGraph:
    """Undirected weighted graph over vertices ``0..n-1`` with a flat edge list.

    ``labels`` optionally maps each vertex back to the node id it had in the
    layered graph it was extracted from.  Weights must be strictly positive and
    self-loops are rejected unless ``allow_self_loops`` is set.
    """

    n: int
    edges: list[tuple[int, int, float]] = field(default_factory=list)
    labels: Optional[list[int]] = None
    allow_self_loops: bool = False

    def __post_init__(self) -> None:
        seen: set[tuple[int, int]] = set()
        for u, v, w in self.edges:
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise GraphError(f"edge ({u},{v}) out of range for n={self.n}")
            if u == v and not self.allow_self_loops:
                raise GraphError(f"self-loop at {u}")
            if w <= 0:
                raise GraphError(f"non-positive weight {w} on edge ({u},{v})")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise GraphError(f"duplicate edge {key}")
            seen.add(key)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def degrees(self) -> list[float]:
        """Weighted degree per vertex; a self-loop contributes its weight once."""
        deg = [0.0] * self.n
        for u, v, w in self.edges:
            deg[u] += w
            if v != u:
                deg[v] += w
        return deg


class _Layer:
    __slots__ = ("out", "inc")

    def __init__(self) -> None:
        self.out: dict[int, list[int]] = {}
        self.inc: dict[int, set[int]] = {}


class LayeredGraph:
    """Mutable multi-layer directed adjacency store with tombstone flags.

    Layer 0 is the bottom.  Node ids are dense non-negative integers assigned
    by the caller; an id is never valid again after it has been hard-removed
    from every layer.
    """

    def __init__(self) -> None:
        self._layers: list[_Layer] = []
        self._edge_counts: list[int] = []
        self._tombstones: set[int] = set()
        self._tomb_at_bottom = 0
        self._removed: set[int] = set()
        self._node_top: dict[int, int] = {}
        self.entry_point: Optional[tuple[NodeId, int]] = None

    # ------------------------------------------------------------------ views

    @property
    def num_layers(self) -> int:
        return len(self._layers)

    def top_layer(self) -> int:
        """Index of the highest layer, or -1 for an empty graph."""
        return len(self._layers) - 1

    def has_node(self, node: NodeId, layer: Optional[int] = None) -> bool:
        if layer is None:
            return node in self._node_top
        return 0 <= layer < len(self._layers) and node in self._layers[layer].out

    def node_top(self, node: NodeId) -> int:
        if node not in self._node_top:
            raise GraphError(f"unknown node {node}")
        return self._node_top[node]

    def is_removed(self, node: NodeId) -> bool:
        return node in self._removed

    def is_tombstoned(self, node: NodeId) -> bool:
        return node in self._tombstones

    def set_tombstone(self, node: NodeId) -> None:
        if node not in self._node_top:
            raise GraphError(f"unknown node {node}")
        if node not in self._tombstones:
            self._tombstones.add(node)
            if self.has_node(node, 0):
                self._tomb_at_bottom += 1

    def out_neighbors(self, layer: int, node: NodeId) -> list[int]:
        self._require(layer, node)
        return list(self._layers[layer].out[node])

    def in_neighbors(self, layer: int, node: NodeId) -> set[int]:
        self._require(layer, node)
        return set(self._layers[layer].inc[node])

    def nodes_at(self, layer: int) -> Iterator[int]:
        if not 0 <= layer < len(self._layers):
            raise GraphError(f"layer {layer} does not exist")
        return iter(self._layers[layer].out)

    def node_count(self, layer: int) -> int:
        if not 0 <= layer < len(self._layers):
            raise GraphError(f"layer {layer} does not exist")
        return len(self._layers[layer].out)

    def vertex_count(self) -> int:
        """Total node presences summed over all layers."""
        return sum(len(layer.out) for layer in self._layers)

    def edge_count(self, layer: int) -> int:
        if not 0 <= layer < len(self._layers):
            raise GraphError(f"layer {layer} does not exist")
        return self._edge_counts[layer]

    def alive_bottom_count(self) -> int:
        """Nodes present at layer 0 that are not tombstoned."""
        if not self._layers:
            return 0
        return len(self._layers[0].out) - self._tomb_at_bottom

    # ------------------------------------------------------------- mutations

    def upsert_node(self, node: NodeId, top_layer: int) -> None:
        """Ensure ``node`` exists at layers ``0..top_layer``; idempotent.

        Promotes the entry point only when ``top_layer`` strictly exceeds the
        current entry layer.  Reusing a hard-removed id is rejected.
        """
        if node < 0:
            raise GraphError("node ids must be non-negative")
        if top_layer < 0:
            raise GraphError("top_layer must be non-negative")
        if node in self._removed:
            raise GraphError(f"node id {node} was hard-removed and cannot be reused")
        while len(self._layers) <= top_layer:
            self._layers.append(_Layer())
            self._edge_counts.append(0)
        for l in range(top_layer + 1):
            layer = self._layers[l]
            if node not in layer.out:
                layer.out[node] = []
                layer.inc[node] = set()
        prev = self._node_top.get(node, -1)
        if top_layer > prev:
            self._node_top[node] = top_layer
        if self.entry_point is None or top_layer > self.entry_point[1]:
            self.entry_point = (node, top_layer)

    def add_edge(self, layer: int, u: NodeId, v: NodeId) -> bool:
        """Insert directed edge ``u -> v``; a duplicate is a no-op returning False."""
        if u == v:
            raise GraphError(f"self-loop rejected at node {u}")
        self._require(layer, u)
        self._require(layer, v)
        lay = self._layers[layer]
        if v in lay.out[u]:
            return False
        lay.out[u].append(v)
        lay.inc[v].add(u)
        self._edge_counts[layer] += 1
        return True

    def remove_edge(self, layer: int, u: NodeId, v: NodeId) -> bool:
        """Remove directed edge ``u -> v`` if present; returns whether it was."""
        self._require(layer, u)
        self._require(layer, v)
        lay = self._layers[layer]
        if v not in lay.out[u]:
            return False
        lay.out[u].remove(v)
        lay.inc[v].discard(u)
        self._edge_counts[layer] -= 1
        return True

    def set_out_neighbors(self, layer: int, u: NodeId, targets: list[int]) -> None:
        """Replace the out-list of ``u`` at ``layer``, keeping mirrors in sync."""
        self._require(layer, u)
        lay = self._layers[layer]
        deduped: list[int] = []
        seen: set[int] = set()
        for v in targets:
            if v == u:
                raise GraphError(f"self-loop rejected at node {u}")
            self._require(layer, v)
            if v not in seen:
                seen.add(v)
                deduped.append(v)
        old = lay.out[u]
        for v in old:
            lay.inc[v].discard(u)
        self._edge_counts[layer] += len(deduped) - len(old)
        lay.out[u] = deduped
        for v in deduped:
            lay.inc[v].add(u)

    def remove_node(
        self,
        node: NodeId,
        mode: str = "hard",
        layer: Optional[int] = None,
        rank: Optional[Callable[[NodeId], object]] = None,
    ) -> dict[int, list[tuple[int, int]]]:
        """Remove ``node`` and return the directed edges dropped per layer.

        ``tombstone`` mode only sets the flag and removes nothing.  ``hard``
        mode removes the node's presence and every incident edge, either at a
        single ``layer`` or (default) everywhere.  A node whose presence drops
        to zero layers is retired permanently: its id can never be upserted
        again.  Callers that strip only the bottom layer of a multi-layer node
        are expected to tombstone it, which keeps the layer-nesting invariant
        meaningful for live nodes.

        ``rank`` orders candidate replacement entry points (lower is better);
        it defaults to the node id, which makes repair deterministic but blind
        to geometry.
        """
        if node not in self._node_top:
            raise GraphError(f"unknown node {node}")
        if mode == "tombstone":
            self.set_tombstone(node)
            return {}
        if mode != "hard":
            raise GraphError(f"unknown removal mode {mode!r}")

        top = self._node_top[node]
        scope = range(top + 1) if layer is None else (layer,)
        # Snapshot the top-layer out-list first: it seeds entry-point repair.
        top_out = list(self._layers[top].out.get(node, ()))
        removed: dict[int, list[tuple[int, int]]] = {}
        for l in scope:
            if not self.has_node(node, l):
                continue
            lay = self._layers[l]
            gone: list[tuple[int, int]] = []
            for v in lay.out[node]:
                lay.inc[v].discard(node)
                gone.append((node, v))
            for w in lay.inc[node]:
                lay.out[w].remove(node)
                gone.append((w, node))
            self._edge_counts[l] -= len(gone)
            del lay.out[node]
            del lay.inc[node]
            if gone:
                removed[l] = gone
            if l == 0 and node in self._tombstones:
                self._tomb_at_bottom -= 1

        still_present = any(node in lay.out for lay in self._layers)
        if not still_present:
            del self._node_top[node]
            self._tombstones.discard(node)
            self._removed.add(node)
        self._repair_entry(node, top_out, rank)
        return removed

    def _repair_entry(
        self,
        node: NodeId,
        top_out: list[int],
        rank: Optional[Callable[[NodeId], object]],
    ) -> None:
        ep = self.entry_point
        if ep is None or ep[0] != node or self.has_node(node, ep[1]):
            return
        key = rank if rank is not None else (lambda w: w)
        survivors = [w for w in top_out if self.has_node(w, ep[1])]
        if survivors:
            best = min(survivors, key=lambda w: (key(w), w))
            self.entry_point = (best, ep[1])
            return
        # Fall back to any surviving node at the highest populated layer.
        for l in range(len(self._layers) - 1, -1, -1):
            if self._layers[l].out:
                best = min(self._layers[l].out, key=lambda w: (key(w), w))
                self.entry_point = (best, l)
                self._trim_empty_top()
                return
        self.entry_point = None
        self._trim_empty_top()

    def _trim_empty_top(self) -> None:
        while self._layers and not self._layers[-1].out:
            self._layers.pop()
            self._edge_counts.pop()

    # ------------------------------------------------------------- exports

    def snapshot_undirected(
        self, layer: int, weight_fn: Callable[[int, int], float]
    ) -> UndirectedWeightedGraph:
        """Coalesce the directed layer into an undirected weighted graph.

        ``(u, v)`` and ``(v, u)`` collapse into one edge and ``weight_fn`` is
        evaluated once per unordered pair, with ``u < v`` in original ids.
        Vertices are renumbered ``0..n-1`` in ascending id order; the original
        ids are returned in ``labels``.
        """
        if not 0 <= layer < len(self._layers):
            raise GraphError(f"layer {layer} does not exist")
        lay = self._layers[layer]
        labels = sorted(lay.out)
        pos = {v: i for i, v in enumerate(labels)}
        pairs: set[tuple[int, int]] = set()
        for u, targets in lay.out.items():
            for v in targets:
                pairs.add((u, v) if u < v else (v, u))
        edges = [(pos[u], pos[v], float(weight_fn(u, v))) for u, v in sorted(pairs)]
        return UndirectedWeightedGraph(n=len(labels), edges=edges, labels=labels)

    def copy(self) -> "LayeredGraph":
        dup = LayeredGraph()
        for layer in self._layers:
            new = _Layer()
            new.out = {u: list(vs) for u, vs in layer.out.items()}
            new.inc = {u: set(vs) for u, vs in layer.inc.items()}
            dup._layers.append(new)
        dup._edge_counts = list(self._edge_counts)
        dup._tombstones = set(self._tombstones)
        dup._tomb_at_bottom = self._tomb_at_bottom
        dup._removed = set(self._removed)
        dup._node_top = dict(self._node_top)
        dup.entry_point = self.entry_point
        return dup

    # ---------------------------------------------------------- validation

    def validate(self) -> None:
        """Full-scan consistency check; raises ``GraphError`` on violation."""
        for l, lay in enumerate(self._layers):
            count = 0
            for u, targets in lay.out.items():
                if len(set(targets)) != len(targets):
                    raise GraphError(f"duplicate out-edges at node {u} layer {l}")
                count += len(targets)
                for v in targets:
                    if v in self._removed:
                        raise GraphError(f"edge ({u},{v}) targets removed node")
                    if v not in lay.out:
                        raise GraphError(f"edge ({u},{v}) targets node absent at layer {l}")
                    if u not in lay.inc[v]:
                        raise GraphError(f"mirror missing for edge ({u},{v}) at layer {l}")
            for v, sources in lay.inc.items():
                for u in sources:
                    if u not in lay.out or v not in lay.out[u]:
                        raise GraphError(f"stale mirror ({u},{v}) at layer {l}")
            if count != self._edge_counts[l]:
                raise GraphError(
                    f"edge count cache {self._edge_counts[l]} != actual {count} at layer {l}"
                )
        for node, top in self._node_top.items():
            if node in self._tombstones:
                continue
            for l in range(top + 1):
                if node not in self._layers[l].out:
                    raise GraphError(f"node {node} missing at layer {l} below its top {top}")

    def _require(self, layer: int, node: NodeId) -> None:
        if not 0 <= layer < len(self._layers):
            raise GraphError(f"layer {layer} does not exist")
        if node not in self._layers[layer].out:
            raise GraphError(f"node {node} absent at layer {layer}")


# ------------------------------------------------------------------ snapshot

def save_snapshot(graph: LayeredGraph, path: str) -> None:
    """Write the layered edge structure in the WNNG binary format.

    Header: magic ``WNNG``, version u32, layer count u32, node count u64.
    Then one u64-length-prefixed list of (u u64, v u64) edges per layer,
    little-endian throughout.  Tombstone flags and isolated presences above
    layer 0 are not part of the format.
    """
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<IIQ", SNAPSHOT_VERSION, graph.num_layers, len(graph._node_top)))
        for lay in graph._layers:
            edges = [(u, v) for u, targets in lay.out.items() for v in targets]
            fh.write(struct.pack("<Q", len(edges)))
            for u, v in edges:
                fh.write(struct.pack("<QQ", u, v))


def load_snapshot(path: str) -> LayeredGraph:
    """Rebuild a ``LayeredGraph`` from a WNNG snapshot.

    All ``n`` node ids are materialized at layer 0; presence above layer 0 is
    inferred from edge endpoints.  The entry point is recomputed as the lowest
    id present at the highest populated layer.
    """
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != SNAPSHOT_MAGIC:
            raise GraphError(f"bad snapshot magic {magic!r}")
        version, num_layers, n = struct.unpack("<IIQ", fh.read(16))
        if version != SNAPSHOT_VERSION:
            raise GraphError(f"unsupported snapshot version {version}")
        per_layer: list[list[tuple[int, int]]] = []
        for _ in range(num_layers):
            (count,) = struct.unpack("<Q", fh.read(8))
            raw = fh.read(16 * count)
            if len(raw) != 16 * count:
                raise GraphError("truncated snapshot")
            per_layer.append(
                [struct.unpack_from("<QQ", raw, 16 * i) for i in range(count)]
            )
    graph = LayeredGraph()
    for node in range(n):
        graph.upsert_node(node, 0)
    for l, edges in enumerate(per_layer):
        for u, v in edges:
            graph.upsert_node(u, l)
            graph.upsert_node(v, l)
        for u, v in edges:
            graph.add_edge(l, u, v)
    top = graph.top_layer()
    if top >= 0:
        entry = min(graph.nodes_at(top))
        graph.entry_point = (entry, top)
    return graph
