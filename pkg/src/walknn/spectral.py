"""Dense linear-algebra checks of the random-walk theory on small graphs.

Everything here is written for verification at desk scale (n up to a few
hundred): Laplacians and their pseudo-inverses are dense, hitting times come
from first-step linear systems, and edge expansion is an exhaustive subset
scan.  Production search code never calls this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .graph import GraphError, UndirectedWeightedGraph

_PINV_TOL = 1e-10  # eigenvalues below tol * lambda_max are treated as zero


# ----------------------------------------------------------------- matrices

def adjacency(graph: UndirectedWeightedGraph) -> np.ndarray:
    a = np.zeros((graph.n, graph.n))
    for u, v, w in graph.edges:
        if u == v:
            continue
        a[u, v] += w
        a[v, u] += w
    return a


def laplacian(graph: UndirectedWeightedGraph) -> np.ndarray:
    """L = D - A.  Self-loops cancel out of the Laplacian and are ignored."""
    a = adjacency(graph)
    return np.diag(a.sum(axis=1)) - a


def incidence_factor(graph: UndirectedWeightedGraph) -> np.ndarray:
    """C = sqrt(W) B, one row per edge, so that C^T C equals the Laplacian."""
    m = len(graph.edges)
    c = np.zeros((m, graph.n))
    for i, (u, v, w) in enumerate(graph.edges):
        if u == v:
            continue
        root = math.sqrt(w)
        c[i, u] = root
        c[i, v] = -root
    return c


def degrees(graph: UndirectedWeightedGraph) -> np.ndarray:
    return np.asarray(graph.degrees())


def is_connected(graph: UndirectedWeightedGraph) -> bool:
    return _component_labels(graph).max(initial=0) == 0 if graph.n else True


def _component_labels(graph: UndirectedWeightedGraph) -> np.ndarray:
    parent = list(range(graph.n))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for u, v, _ in graph.edges:
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[ru] = rv
    roots = [find(x) for x in range(graph.n)]
    remap = {r: i for i, r in enumerate(dict.fromkeys(roots))}
    return np.asarray([remap[r] for r in roots])


def laplacian_pinv(lap: np.ndarray) -> np.ndarray:
    """Pseudo-inverse through eigendecomposition with an explicit rank cutoff."""
    vals, vecs = np.linalg.eigh(lap)
    cutoff = _PINV_TOL * max(vals.max(), 1e-300)
    inv = np.where(vals > cutoff, 1.0 / np.where(vals > cutoff, vals, 1.0), 0.0)
    return (vecs * inv) @ vecs.T


# -------------------------------------------------------------- sparsifier

@dataclass
class SparsifyOutcome:
    """Result of row-norm sampling: the accumulated graph and its error."""

    graph: UndirectedWeightedGraph
    samples: int
    frobenius_error: float
    trace_w: float


def row_norm_sparsify(
    graph: UndirectedWeightedGraph, s: int, rng: np.random.Generator
) -> SparsifyOutcome:
    """Sample ``s`` incidence rows proportionally to their squared norms.

    Row ``e`` of ``sqrt(W) B`` has squared norm ``2 w_e``, so the sampling
    distribution reduces to the edge weights.  Each draw contributes
    ``w_e / (p_e * s)`` to the drawn edge, duplicates accumulating, which
    keeps the sparsified Laplacian unbiased.
    """
    if s < 1:
        raise ValueError("sample count must be at least 1")
    if not graph.edges:
        raise GraphError("cannot sparsify an edgeless graph")
    weights = np.asarray([w for _, _, w in graph.edges])
    probs = weights / weights.sum()
    draws = rng.choice(len(weights), size=s, replace=True, p=probs)
    accumulated = np.bincount(draws, minlength=len(weights)).astype(np.float64)
    new_w = accumulated * weights / (probs * s)
    edges = [
        (graph.edges[i][0], graph.edges[i][1], float(new_w[i]))
        for i in np.flatnonzero(accumulated)
    ]
    sparsified = UndirectedWeightedGraph(n=graph.n, edges=edges, labels=graph.labels)
    err = float(np.linalg.norm(laplacian(sparsified) - laplacian(graph), "fro"))
    return SparsifyOutcome(
        graph=sparsified, samples=s, frobenius_error=err, trace_w=float(weights.sum())
    )


# ------------------------------------------------------- walk-time statistics

def effective_resistance(graph: UndirectedWeightedGraph, u: int, v: int) -> float:
    """``(e_u - e_v)^T L^+ (e_u - e_v)``; infinite across components."""
    if u == v:
        return 0.0
    labels = _component_labels(graph)
    if labels[u] != labels[v]:
        return math.inf
    pinv = laplacian_pinv(laplacian(graph))
    chi = np.zeros(graph.n)
    chi[u] = 1.0
    chi[v] = -1.0
    return float(chi @ pinv @ chi)


def resistance_matrix(graph: UndirectedWeightedGraph) -> np.ndarray:
    pinv = laplacian_pinv(laplacian(graph))
    diag = np.diag(pinv)
    return diag[:, None] + diag[None, :] - 2.0 * pinv


def hitting_time(graph: UndirectedWeightedGraph, method: str = "direct") -> np.ndarray:
    """Expected steps ``H[u, v]`` for a weighted walk from ``u`` to first reach ``v``.

    ``direct`` solves the first-step equations ``h(u) = 1 + sum_z P(u,z) h(z)``
    with the target row pinned to zero, one linear system per target.
    ``tetali`` assembles the same table from effective resistances and
    weighted degrees:

        h(u, v) = 1/2 * sum_z deg(z) * (R(u, v) + R(v, z) - R(u, z))
    """
    if not is_connected(graph):
        raise GraphError("hitting times require a connected graph")
    if graph.n == 1:
        return np.zeros((1, 1))
    if method == "direct":
        a = adjacency(graph)
        deg = a.sum(axis=1)
        p = a / deg[:, None]
        n = graph.n
        h = np.zeros((n, n))
        eye = np.eye(n)
        ones = np.ones(n)
        for target in range(n):
            system = eye - p
            system[target, :] = 0.0
            system[target, target] = 1.0
            rhs = ones.copy()
            rhs[target] = 0.0
            h[:, target] = np.linalg.solve(system, rhs)
        np.fill_diagonal(h, 0.0)
        return h
    if method == "tetali":
        r = resistance_matrix(graph)
        deg = degrees(graph)
        s = deg @ r
        total = float(deg.sum())
        h = 0.5 * (total * r + s[None, :] - s[:, None])
        np.fill_diagonal(h, 0.0)
        return h
    raise ValueError(f"unknown method {method!r}")


# --------------------------------------------------------------- expansion

def edge_expansion(graph: UndirectedWeightedGraph) -> tuple[float, frozenset[int]]:
    """Exact ``min_S cut(S) / min(|S|, n - |S|)`` by exhaustive subset scan.

    Subsets are enumerated with vertex 0 pinned inside S, which covers every
    complement pair once.  Limited to n <= 24.
    """
    n = graph.n
    if n < 2:
        raise GraphError("edge expansion needs at least two vertices")
    if n > 24:
        raise GraphError("exhaustive expansion scan is limited to n <= 24")
    half = 1 << (n - 1)
    best = math.inf
    witness = 0
    chunk = 1 << 18
    ends = np.asarray([(u, v, w) for u, v, w in graph.edges if u != v])
    eu = ends[:, 0].astype(np.int64) if len(ends) else np.zeros(0, dtype=np.int64)
    ev = ends[:, 1].astype(np.int64) if len(ends) else np.zeros(0, dtype=np.int64)
    ew = ends[:, 2] if len(ends) else np.zeros(0)
    for start in range(0, half, chunk):
        masks = np.arange(start, min(start + chunk, half), dtype=np.int64)
        subsets = (masks << 1) | 1  # vertex 0 always inside S
        sizes = np.zeros(len(subsets), dtype=np.int64)
        for bit in range(n):
            sizes += (subsets >> bit) & 1
        valid = sizes < n  # proper subsets only
        cuts = np.zeros(len(subsets))
        for i in range(len(eu)):
            inside_u = (subsets >> eu[i]) & 1
            inside_v = (subsets >> ev[i]) & 1
            cuts += ew[i] * (inside_u ^ inside_v)
        denom = np.minimum(sizes, n - sizes)
        with np.errstate(divide="ignore", invalid="ignore"):
            phi = np.where(valid, cuts / denom, math.inf)
        local = int(np.argmin(phi))
        if phi[local] < best:
            best = float(phi[local])
            witness = int(subsets[local])
    members = frozenset(i for i in range(n) if (witness >> i) & 1)
    return best, members


def cheeger_check(graph: UndirectedWeightedGraph) -> tuple[float, float, float]:
    """Return ``(lambda_2, phi^2 / (2 d_max), 2 phi)``; the bounds bracket lambda_2."""
    lam2 = float(np.sort(np.linalg.eigvalsh(laplacian(graph)))[1])
    phi, _ = edge_expansion(graph)
    d_max = float(max(degrees(graph), default=0.0))
    lower = 0.0 if d_max == 0 else phi * phi / (2.0 * d_max)
    return lam2, lower, 2.0 * phi


# ------------------------------------------------------- hitting-time bound

@dataclass
class Theorem4Report:
    """Per-pair evaluation of the sparsified hitting-time error bound.

    For every pair the bound is

        |h(u,v) - h'(u,v)| <= (delta / d_min) h(u,v)
                              + 12 delta (phi^2 / (2 d_max) - delta)^{-2} sum_e w_e

    with ``delta`` the achieved Frobenius gap between the Laplacians.  The
    bound is vacuous when ``delta >= phi^2 / (2 d_max)`` or the sparsified
    graph is disconnected; vacuity is reported rather than raised.
    """

    delta: float
    phi: float
    d_min: float
    d_max: float
    total_weight: float
    vacuous: bool
    holds: bool = False
    max_abs_gap: float = 0.0
    min_margin: float = math.inf
    pairs_checked: int = 0
    lhs: Optional[np.ndarray] = field(default=None, repr=False)
    rhs: Optional[np.ndarray] = field(default=None, repr=False)


def theorem4_check(
    original: UndirectedWeightedGraph,
    sparsified: UndirectedWeightedGraph,
    eps: Optional[float] = None,
) -> Theorem4Report:
    """Evaluate the hitting-time perturbation bound on every vertex pair.

    ``eps`` is accepted for bookkeeping symmetry with the sampling theorem but
    the check always uses the achieved ``delta = ||L - L'||_F``.
    """
    del eps
    delta = float(
        np.linalg.norm(laplacian(original) - laplacian(sparsified), "fro")
    )
    phi, _ = edge_expansion(original)
    deg = degrees(original)
    d_min = float(deg.min())
    d_max = float(deg.max())
    total_w = float(sum(w for _, _, w in original.edges))
    gap = phi * phi / (2.0 * d_max) - delta
    report = Theorem4Report(
        delta=delta,
        phi=phi,
        d_min=d_min,
        d_max=d_max,
        total_weight=total_w,
        vacuous=(gap <= 0.0) or not is_connected(sparsified),
    )
    if report.vacuous:
        return report
    h = hitting_time(original, "direct")
    h_prime = hitting_time(sparsified, "direct")
    lhs = np.abs(h - h_prime)
    rhs = (delta / d_min) * h + 12.0 * delta * gap ** (-2.0) * total_w
    off = ~np.eye(original.n, dtype=bool)
    report.lhs = lhs
    report.rhs = rhs
    report.max_abs_gap = float(lhs[off].max())
    report.min_margin = float((rhs - lhs)[off].min())
    scale = max(1.0, float(np.abs(rhs[off]).max()))
    report.holds = report.min_margin >= -1e-9 * scale
    report.pairs_checked = int(off.sum())
    return report


# ------------------------------------------------------------- generators

def complete_graph(n: int, weight: float = 1.0) -> UndirectedWeightedGraph:
    edges = [(u, v, weight) for u in range(n) for v in range(u + 1, n)]
    return UndirectedWeightedGraph(n=n, edges=edges)


def path_graph(n: int, weight: float = 1.0) -> UndirectedWeightedGraph:
    return UndirectedWeightedGraph(n=n, edges=[(i, i + 1, weight) for i in range(n - 1)])


def random_connected_graph(
    n: int,
    rng: np.random.Generator,
    edge_prob: float = 0.5,
    w_lo: float = 0.5,
    w_hi: float = 1.5,
) -> UndirectedWeightedGraph:
    """Erdos-Renyi draw with uniform weights, augmented along a random
    spanning path so the result is always connected."""
    edges: dict[tuple[int, int], float] = {}
    order = rng.permutation(n)
    for i in range(n - 1):
        a, b = int(order[i]), int(order[i + 1])
        edges[(min(a, b), max(a, b))] = float(rng.uniform(w_lo, w_hi))
    for u in range(n):
        for v in range(u + 1, n):
            if (u, v) not in edges and rng.random() < edge_prob:
                edges[(u, v)] = float(rng.uniform(w_lo, w_hi))
    return UndirectedWeightedGraph(
        n=n, edges=[(u, v, w) for (u, v), w in sorted(edges.items())]
    )


def clustered_complete_graph(
    clusters: int,
    size: int,
    intra_weight: float,
    inter_weight: float,
) -> UndirectedWeightedGraph:
    """Complete graph with block-structured weights: heavy inside each of the
    ``clusters`` groups of ``size`` vertices, light between groups."""
    n = clusters * size
    edges = []
    for u in range(n):
        for v in range(u + 1, n):
            w = intra_weight if u // size == v // size else inter_weight
            edges.append((u, v, w))
    return UndirectedWeightedGraph(n=n, edges=edges)


# ------------------------------------------------------------ verify suite

@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def verify_suite(seed: int = 0) -> list[CheckResult]:
    """Run the lab's property checks and report one pass/fail line each."""
    from .deletion import star_mesh_weights  # local import: avoids module cost when unused

    rng = np.random.default_rng(seed)
    results: list[CheckResult] = []

    # Hitting times agree between the first-step solve and the resistance identity.
    worst = 0.0
    for _ in range(60):
        n = int(rng.integers(3, 17))
        g = random_connected_graph(n, rng)
        direct = hitting_time(g, "direct")
        tet = hitting_time(g, "tetali")
        off = ~np.eye(n, dtype=bool)
        worst = max(worst, float((np.abs(direct - tet)[off] / direct[off]).max()))
    results.append(
        CheckResult("tetali_consistency", worst <= 1e-8, f"max relative gap {worst:.2e}")
    )

    # Sparsifier unbiasedness: Monte Carlo mean of the sampled Laplacian.
    g = random_connected_graph(8, rng)
    lap = laplacian(g)
    trials = 10_000
    acc = np.zeros_like(lap)
    acc_sq = np.zeros_like(lap)
    for _ in range(trials):
        sampled = laplacian(row_norm_sparsify(g, 20, rng).graph)
        acc += sampled
        acc_sq += sampled * sampled
    mean = acc / trials
    sigma = np.sqrt(np.maximum(acc_sq / trials - mean * mean, 0.0) / trials)
    excess = float((np.abs(mean - lap) - 3.0 * sigma - 1e-12).max())
    results.append(
        CheckResult("sparsifier_unbiasedness", excess <= 0.0, f"max 3-sigma excess {excess:.2e}")
    )

    # Frobenius guarantee frequency at the theorem's sample count.
    for eps in (0.25, 0.5):
        s = int(200 / eps**2)
        g = random_connected_graph(12, rng)
        hits = sum(
            row_norm_sparsify(g, s, rng).frobenius_error
            <= eps * sum(w for _, _, w in g.edges)
            for _ in range(100)
        )
        results.append(
            CheckResult(
                f"frobenius_bound_eps_{eps}",
                hits >= 90,
                f"{hits}/100 trials within eps * tr(W)",
            )
        )

    # Spectral stability of lambda_2 under Frobenius perturbation.
    ok = True
    detail = ""
    for _ in range(50):
        g = random_connected_graph(10, rng)
        out = row_norm_sparsify(g, 50, rng)
        l2a = float(np.sort(np.linalg.eigvalsh(laplacian(g)))[1])
        l2b = float(np.sort(np.linalg.eigvalsh(laplacian(out.graph)))[1])
        if abs(l2a - l2b) > out.frobenius_error + 1e-9:
            ok = False
            detail = f"|{l2a:.4f} - {l2b:.4f}| > {out.frobenius_error:.4f}"
            break
    results.append(CheckResult("lambda2_perturbation", ok, detail or "50 sampled pairs"))

    # Effective resistance behaves like a metric on sampled instances.
    ok = True
    detail = ""
    for _ in range(30):
        n = int(rng.integers(3, 12))
        g = random_connected_graph(n, rng)
        r = resistance_matrix(g)
        if float(np.abs(r - r.T).max()) > 1e-9 or float(np.abs(np.diag(r)).max()) > 1e-9:
            ok, detail = False, "symmetry or diagonal violated"
            break
        tri = r[:, :, None] + r.T[None, :, :] - r[:, None, :]
        if float(tri.min()) < -1e-9:
            ok, detail = False, "triangle inequality violated"
            break
        if float(r[~np.eye(n, dtype=bool)].min()) <= 0.0:
            ok, detail = False, "zero resistance between distinct vertices"
            break
    results.append(CheckResult("resistance_metric", ok, detail or "30 sampled graphs"))

    # Cheeger brackets on random connected graphs.
    ok = True
    detail = ""
    for _ in range(100):
        g = random_connected_graph(10, rng)
        lam2, lower, upper = cheeger_check(g)
        if not (lower - 1e-9 <= lam2 <= upper + 1e-9):
            ok, detail = False, f"lambda2 {lam2:.4f} outside [{lower:.4f}, {upper:.4f}]"
            break
    results.append(CheckResult("cheeger_bounds", ok, detail or "100 sampled graphs"))

    # Star-mesh transform preserves one-step-or-through-p transitions exactly.
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(4, 12))
        g = random_connected_graph(n, rng)
        p = int(rng.integers(n))
        res = star_mesh_weights(g, p, "exact_with_selfloops")
        weight = {(min(u, v), max(u, v)): w for u, v, w in g.edges}
        nbrs = sorted({b if a == p else a for a, b, _ in g.edges if p in (a, b)})
        deg = {
            u: sum(w for (a, b), w in weight.items() if u in (a, b))
            for u in range(n)
        }
        nbr_set = set(nbrs)
        for u in nbrs:
            outside = sum(
                w
                for (a, b), w in weight.items()
                if u in (a, b) and p not in (a, b) and not {a, b} <= nbr_set
            )
            merged = sum(w for (a, b), w in res.new_weights.items() if u in (a, b))
            deg_new = res.self_loops[u] + outside + merged
            for v in nbrs:
                if v == u:
                    continue
                key = (min(u, v), max(u, v))
                direct = weight.get(key, 0.0) / deg[u]
                through = (
                    weight.get((min(u, p), max(u, p)), 0.0)
                    / deg[u]
                    * weight.get((min(p, v), max(p, v)), 0.0)
                    / deg[p]
                )
                new = res.new_weights[key] / deg_new
                worst = max(worst, abs(new - (direct + through)))
    results.append(
        CheckResult("star_mesh_transitions", worst <= 1e-12, f"max deviation {worst:.2e}")
    )
    return results
