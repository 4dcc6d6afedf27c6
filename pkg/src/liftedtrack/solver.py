"""Minimum cost (lifted) multicut: feasibility, exact oracle, and heuristics.

Sign convention used across the project: an edge cost is the logit of the
same-identity probability, so positive costs penalize cutting (the endpoints
attract) and negative costs reward it. The objective sums the costs of cut
edges and is minimized.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from .graph import (
    Edge,
    EdgeLabeling,
    MulticutInstance,
    Partition,
    UnionFind,
    canonical_edge,
    labeling_to_partition,
)

BRUTEFORCE_MAX_NODES = 12

# Accepting moves on float noise would loop forever; improvements smaller
# than this are treated as zero.
_IMPROVEMENT_EPS = 1e-11


@dataclass(frozen=True)
class Violation:
    """One edge whose label disagrees with join-subgraph connectivity."""

    edge: Edge
    lifted: bool
    label: int
    reason: str


@dataclass(frozen=True)
class FeasibilityReport:
    feasible: bool
    violations: Tuple[Violation, ...] = ()

    def __bool__(self) -> bool:
        return self.feasible


def objective(instance: MulticutInstance, labeling: EdgeLabeling) -> float:
    """Total cost of the cut edges over E union F."""
    labeling.validate_for(instance)
    total = 0.0
    for u, v, c in instance.edges:
        total += c * labeling.labels[(u, v)]
    for u, v, c in instance.lifted_edges:
        total += c * labeling.labels[(u, v)]
    return total


def is_feasible(
    instance: MulticutInstance, labeling: EdgeLabeling
) -> FeasibilityReport:
    """Check that the labeling is induced by some node partition.

    An edge label is consistent exactly when it is 0 for endpoints joined in
    the label-0 subgraph of G and 1 otherwise. This single connectivity
    check subsumes the cycle, path, and cut inequality systems.
    """
    labeling.validate_for(instance)
    uf = UnionFind(instance.num_nodes)
    for u, v, _ in instance.edges:
        if labeling.labels[(u, v)] == 0:
            uf.union(u, v)
    violations: List[Violation] = []
    for group, lifted in ((instance.edges, False), (instance.lifted_edges, True)):
        for u, v, _ in group:
            label = labeling.labels[(u, v)]
            connected = uf.connected(u, v)
            if label == 1 and connected:
                kind = "lifted " if lifted else ""
                violations.append(
                    Violation(
                        (u, v),
                        lifted,
                        label,
                        f"{kind}edge ({u}, {v}) is cut although its endpoints stay "
                        "connected through join edges",
                    )
                )
            elif label == 0 and not connected:
                kind = "lifted " if lifted else ""
                violations.append(
                    Violation(
                        (u, v),
                        lifted,
                        label,
                        f"{kind}edge ({u}, {v}) is joined although no join path "
                        "connects its endpoints",
                    )
                )
    return FeasibilityReport(not violations, tuple(violations))


def partition_to_labeling(
    instance: MulticutInstance, partition: Partition
) -> EdgeLabeling:
    """Labeling induced by a partition; always feasible.

    Regular edges are cut when their endpoints sit in different blocks.
    Lifted edges are cut when no path of joined regular edges connects
    their endpoints, which for blocks that are connected in G coincides
    with the block test.
    """
    if partition.num_nodes != instance.num_nodes:
        raise ValueError(
            f"partition covers {partition.num_nodes} nodes, "
            f"instance has {instance.num_nodes}"
        )
    comp = partition.component_of
    labels: Dict[Edge, int] = {}
    uf = UnionFind(instance.num_nodes)
    for u, v, _ in instance.edges:
        cut = 0 if comp[u] == comp[v] else 1
        labels[(u, v)] = cut
        if not cut:
            uf.union(u, v)
    for u, v, _ in instance.lifted_edges:
        labels[(u, v)] = 0 if uf.connected(u, v) else 1
    return EdgeLabeling(labels)


# ---------------------------------------------------------------------------
# Exact oracle: vectorized enumeration of all set partitions.
# ---------------------------------------------------------------------------

_PARTITION_TABLES: Dict[int, np.ndarray] = {}


def _partition_table(n: int) -> np.ndarray:
    """All canonical assignment vectors for n nodes, lexicographically ordered.

    Row r is a restricted growth string: component ids are contiguous and
    numbered by first occurrence. Cached per n (Bell(12) ~ 4.2M rows).
    """
    cached = _PARTITION_TABLES.get(n)
    if cached is not None:
        return cached
    rows = np.zeros((1, 1), dtype=np.int8)
    maxv = np.zeros(1, dtype=np.int8)
    for _ in range(n - 1):
        counts = maxv.astype(np.int64) + 2
        total = int(counts.sum())
        rep = np.repeat(rows, counts, axis=0)
        starts = np.repeat(np.cumsum(counts) - counts, counts)
        newcol = (np.arange(total) - starts).astype(np.int8)
        rows = np.concatenate([rep, newcol[:, None]], axis=1)
        maxv = np.maximum(np.repeat(maxv, counts), newcol)
    _PARTITION_TABLES[n] = rows
    return rows


def _join_components(table: np.ndarray, edges) -> np.ndarray:
    """Per row, connected-component labels of the within-block regular subgraph.

    Min-label propagation along regular edges restricted to same-block
    endpoints; component labels end up as the smallest member node id, so
    they are unique per component across blocks too.
    """
    n_rows, n = table.shape
    comp = np.tile(np.arange(n, dtype=np.int8), (n_rows, 1))
    masks = [(u, v, table[:, u] == table[:, v]) for u, v, _ in edges]
    changed = True
    while changed:
        changed = False
        for u, v, same in masks:
            cu = comp[:, u]
            cv = comp[:, v]
            m = np.minimum(cu, cv)
            new_u = np.where(same, m, cu)
            new_v = np.where(same, m, cv)
            if (new_u != cu).any():
                comp[:, u] = new_u
                changed = True
            if (new_v != cv).any():
                comp[:, v] = new_v
                changed = True
    return comp


def solve_bruteforce(instance: MulticutInstance) -> Tuple[Partition, float]:
    """Globally optimal partition by enumerating every set partition.

    Lifted edges are charged through join-subgraph connectivity, so blocks
    that are not connected in G pay for the lifted pairs they fail to link.
    Among optimal partitions, returns the one that corresponds to a feasible
    labeling with the lexicographically smallest assignment vector.
    """
    n = instance.num_nodes
    if n > BRUTEFORCE_MAX_NODES:
        raise ValueError(
            f"brute force limited to {BRUTEFORCE_MAX_NODES} nodes, got {n}"
        )
    if n == 0:
        return Partition(()), 0.0
    table = _partition_table(n)
    obj = np.zeros(len(table))
    for u, v, c in instance.edges:
        obj += c * (table[:, u] != table[:, v])
    comp = _join_components(table, instance.edges)
    for u, v, c in instance.lifted_edges:
        obj += c * (comp[:, u] != comp[:, v])
    # Rows whose blocks are G-connected are exactly those a labeling can
    # induce; the optimum is always attained on one of them.
    stable = np.ones(len(table), dtype=bool)
    for u in range(n):
        for v in range(u + 1, n):
            stable &= ~((table[:, u] == table[:, v]) & (comp[:, u] != comp[:, v]))
    best = float(np.min(np.where(stable, obj, np.inf)))
    idx = int(np.argmax(stable & (obj == best)))
    return Partition(tuple(int(x) for x in table[idx])), best


# ---------------------------------------------------------------------------
# Greedy additive edge contraction.
# ---------------------------------------------------------------------------


def solve_gaec(
    instance: MulticutInstance, trace: Optional[List[float]] = None
) -> Tuple[Partition, float]:
    """Greedy additive edge contraction.

    Starts from singletons (everything cut) and repeatedly merges the
    cluster pair with the largest aggregated inter-cluster cost, as long as
    that total is positive, i.e. merging strictly lowers the objective.
    Only pairs adjacent through regular edges are contraction candidates;
    lifted costs between adjacent clusters are folded into their totals.
    Ties pick the smallest canonical pair of cluster representatives. Pass
    `trace` to record the objective after every contraction.
    """
    n = instance.num_nodes
    uf = UnionFind(n)
    min_node = list(range(n))
    reg: List[Dict[int, float]] = [dict() for _ in range(n)]
    lif: List[Dict[int, float]] = [dict() for _ in range(n)]
    total_cost = 0.0
    for u, v, c in instance.edges:
        reg[u][v] = reg[u].get(v, 0.0) + c
        reg[v][u] = reg[v].get(u, 0.0) + c
        total_cost += c
    for u, v, c in instance.lifted_edges:
        lif[u][v] = lif[u].get(v, 0.0) + c
        lif[v][u] = lif[v].get(u, 0.0) + c
        total_cost += c

    obj = total_cost
    if trace is not None:
        trace.append(obj)

    def pair_total(a: int, b: int) -> float:
        return reg[a][b] + lif[a].get(b, 0.0)

    heap: List[Tuple[float, Tuple[int, int], int, int]] = []

    def push(a: int, b: int) -> None:
        t = pair_total(a, b)
        if t > 0.0:
            key = canonical_edge(min_node[a], min_node[b])
            heapq.heappush(heap, (-t, key, a, b))

    for u, v, _ in instance.edges:
        if v in reg[u] and u < v:
            push(u, v)

    while heap:
        negt, key, a, b = heapq.heappop(heap)
        if uf.find(a) != a or uf.find(b) != b or b not in reg[a]:
            continue
        t = pair_total(a, b)
        if -negt != t or key != canonical_edge(min_node[a], min_node[b]):
            continue  # stale entry; a fresh one was pushed on update
        if t <= 0.0:
            continue
        # Contract b into a; keep the root with the smaller representative.
        if min_node[b] < min_node[a]:
            a, b = b, a
        uf.parent[b] = a
        uf.size[a] += uf.size[b]
        min_node[a] = min(min_node[a], min_node[b])
        obj -= t
        if trace is not None:
            trace.append(obj)
        reg[a].pop(b, None)
        reg[b].pop(a, None)
        lif[a].pop(b, None)
        lif[b].pop(a, None)
        for nbr, c in reg[b].items():
            reg[a][nbr] = reg[a].get(nbr, 0.0) + c
            del reg[nbr][b]
            reg[nbr][a] = reg[a][nbr]
        for nbr, c in lif[b].items():
            lif[a][nbr] = lif[a].get(nbr, 0.0) + c
            del lif[nbr][b]
            lif[nbr][a] = lif[a][nbr]
        reg[b].clear()
        lif[b].clear()
        for nbr in reg[a]:
            push(a, nbr)

    partition = Partition.from_labels([uf.find(i) for i in range(n)])
    final = objective(instance, partition_to_labeling(instance, partition))
    return partition, final


# ---------------------------------------------------------------------------
# Kernighan-Lin style local search with joins.
# ---------------------------------------------------------------------------


class _KLState:
    """Mutable partition state with join-connected clusters.

    Maintains the invariant that every cluster is connected through regular
    edges, so a lifted edge is cut exactly when its endpoints sit in
    different clusters and objective deltas stay local.
    """

    def __init__(self, instance: MulticutInstance, initial: Partition):
        self.instance = instance
        n = instance.num_nodes
        self.reg_adj: List[List[Tuple[int, float]]] = [[] for _ in range(n)]
        self.lif_adj: List[List[Tuple[int, float]]] = [[] for _ in range(n)]
        for u, v, c in instance.edges:
            self.reg_adj[u].append((v, c))
            self.reg_adj[v].append((u, c))
        for u, v, c in instance.lifted_edges:
            self.lif_adj[u].append((v, c))
            self.lif_adj[v].append((u, c))

        # Split any block that is not connected in G; the true objective is
        # unchanged because such lifted pairs were already charged as cut.
        uf = UnionFind(n)
        comp_in = initial.component_of
        for u, v, _ in instance.edges:
            if comp_in[u] == comp_in[v]:
                uf.union(u, v)
        self.comp: List[int] = [0] * n
        self.members: Dict[int, Set[int]] = {}
        roots: Dict[int, int] = {}
        for node in range(n):
            root = uf.find(node)
            if root not in roots:
                roots[root] = len(roots)
            cid = roots[root]
            self.comp[node] = cid
            self.members.setdefault(cid, set()).add(node)
        self.next_cid = len(roots)
        self.obj = self._full_objective()

    def _full_objective(self) -> float:
        total = 0.0
        for u, v, c in self.instance.edges:
            if self.comp[u] != self.comp[v]:
                total += c
        for u, v, c in self.instance.lifted_edges:
            if self.comp[u] != self.comp[v]:
                total += c
        return total

    def cluster_key(self, cid: int) -> int:
        return min(self.members[cid])

    def _remainder_components(self, cluster: Set[int], removed: int) -> List[Set[int]]:
        """Regular-edge components of cluster minus one node."""
        rest = cluster - {removed}
        comps: List[Set[int]] = []
        unseen = set(rest)
        while unseen:
            start = min(unseen)
            stack = [start]
            seen = {start}
            while stack:
                x = stack.pop()
                for nbr, _ in self.reg_adj[x]:
                    if nbr in rest and nbr not in seen:
                        seen.add(nbr)
                        stack.append(nbr)
            comps.append(seen)
            unseen -= seen
        return comps

    def move_delta(self, node: int, target: Optional[int]) -> float:
        """Objective change for moving `node` to cluster `target` (None = new)."""
        src = self.comp[node]
        delta = 0.0
        for nbr, c in self.reg_adj[node]:
            if self.comp[nbr] == src:
                delta += c  # becomes cut
            elif target is not None and self.comp[nbr] == target:
                delta -= c  # becomes joined
        for nbr, c in self.lif_adj[node]:
            if self.comp[nbr] == src:
                delta += c
            elif target is not None and self.comp[nbr] == target:
                delta -= c
        cluster = self.members[src]
        if len(cluster) > 2:
            # Removing the node may disconnect its old cluster, cutting
            # lifted pairs that used to be linked through it.
            internal_lifted = [
                (u, v, c)
                for u, v, c in self.instance.lifted_edges
                if u != node
                and v != node
                and self.comp[u] == src
                and self.comp[v] == src
            ]
            if internal_lifted:
                comps = self._remainder_components(cluster, node)
                if len(comps) > 1:
                    where = {}
                    for k, part in enumerate(comps):
                        for x in part:
                            where[x] = k
                    for u, v, c in internal_lifted:
                        if where[u] != where[v]:
                            delta += c
        return delta

    def apply_move(self, node: int, target: Optional[int], delta: float) -> None:
        src = self.comp[node]
        cluster = self.members[src]
        cluster.discard(node)
        if target is None:
            target = self.next_cid
            self.next_cid += 1
            self.members[target] = set()
        self.members[target].add(node)
        self.comp[node] = target
        if not cluster:
            del self.members[src]
        elif len(cluster) > 1:
            comps = self._remainder_components(cluster | {node}, node)
            if len(comps) > 1:
                # Keep the original id on the component holding the smallest
                # node; fresh ids for the rest, ordered by smallest member.
                comps.sort(key=min)
                self.members[src] = comps[0]
                for part in comps[1:]:
                    cid = self.next_cid
                    self.next_cid += 1
                    self.members[cid] = part
                    for x in part:
                        self.comp[x] = cid
        self.obj += delta

    def merge_delta(self, ca: int, cb: int) -> float:
        a_members = self.members[ca]
        delta = 0.0
        for node in a_members:
            for nbr, c in self.reg_adj[node]:
                if self.comp[nbr] == cb:
                    delta -= c
            for nbr, c in self.lif_adj[node]:
                if self.comp[nbr] == cb:
                    delta -= c
        return delta

    def apply_merge(self, ca: int, cb: int, delta: float) -> None:
        for node in self.members[cb]:
            self.comp[node] = ca
        self.members[ca] |= self.members[cb]
        del self.members[cb]
        self.obj += delta

    def partition(self) -> Partition:
        return Partition.from_labels(self.comp)


def solve_kl(
    instance: MulticutInstance,
    initial: Partition,
    trace: Optional[List[float]] = None,
) -> Tuple[Partition, float]:
    """Local search over node moves, cluster merges, and single-node splits.

    Repeatedly applies the best strictly improving move until none exists.
    Move ties are broken by a fixed lexicographic move encoding: node moves
    (ordered by node, then target cluster representative), then splits,
    then merges (ordered by representative pair). The returned objective is
    never above the initial partition's.
    """
    if initial.num_nodes != instance.num_nodes:
        raise ValueError("initial partition does not cover the instance nodes")
    state = _KLState(instance, initial)
    if trace is not None:
        trace.append(state.obj)

    while True:
        best: Optional[Tuple[float, Tuple, str, object]] = None

        for node in range(instance.num_nodes):
            src = state.comp[node]
            targets = sorted(
                {
                    state.comp[nbr]
                    for nbr, _ in state.reg_adj[node]
                    if state.comp[nbr] != src
                },
                key=state.cluster_key,
            )
            for target in targets:
                delta = state.move_delta(node, target)
                cand = (delta, (0, node, state.cluster_key(target)), "move",
                        (node, target))
                if delta < -_IMPROVEMENT_EPS and (best is None or cand[:2] < best[:2]):
                    best = cand
            if len(state.members[src]) > 1:
                delta = state.move_delta(node, None)
                cand = (delta, (1, node, node), "split", (node, None))
                if delta < -_IMPROVEMENT_EPS and (best is None or cand[:2] < best[:2]):
                    best = cand

        adjacent_pairs = set()
        for u, v, _ in instance.edges:
            cu, cv = state.comp[u], state.comp[v]
            if cu != cv:
                adjacent_pairs.add((min(cu, cv), max(cu, cv)))
        for ca, cb in sorted(
            adjacent_pairs, key=lambda p: (state.cluster_key(p[0]), state.cluster_key(p[1]))
        ):
            delta = state.merge_delta(ca, cb)
            cand = (
                delta,
                (2, state.cluster_key(ca), state.cluster_key(cb)),
                "merge",
                (ca, cb),
            )
            if delta < -_IMPROVEMENT_EPS and (best is None or cand[:2] < best[:2]):
                best = cand

        if best is None:
            break
        delta, _, kind, payload = best
        if kind == "merge":
            ca, cb = payload
            state.apply_merge(ca, cb, delta)
        else:
            node, target = payload
            state.apply_move(node, target, delta)
        if trace is not None:
            trace.append(state.obj)

    partition = state.partition()
    final = objective(instance, partition_to_labeling(instance, partition))
    return partition, final


# ---------------------------------------------------------------------------
# Instance text format: "n m k" header, then m regular and k lifted cost lines.
# ---------------------------------------------------------------------------


def write_instance(instance: MulticutInstance, path) -> None:
    lines = [f"{instance.num_nodes} {instance.num_edges} {instance.num_lifted}"]
    for u, v, c in instance.edges:
        lines.append(f"{u} {v} {c!r}")
    for u, v, c in instance.lifted_edges:
        lines.append(f"{u} {v} {c!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_instance(path) -> MulticutInstance:
    text = Path(path).read_text().split("\n")
    rows = [line.split() for line in text if line.strip()]
    if not rows:
        raise ValueError(f"{path}: empty instance file")
    try:
        n, m, k = (int(x) for x in rows[0])
    except ValueError as exc:
        raise ValueError(f"{path}: bad header {rows[0]!r}") from exc
    if len(rows) != 1 + m + k:
        raise ValueError(
            f"{path}: expected {m} + {k} edge lines, found {len(rows) - 1}"
        )

    def parse(row, lineno):
        try:
            u, v, c = int(row[0]), int(row[1]), float(row[2])
        except (ValueError, IndexError) as exc:
            raise ValueError(f"{path}: bad edge line {lineno}: {row!r}") from exc
        return canonical_edge(u, v) + (c,)

    edges = tuple(parse(rows[i], i + 1) for i in range(1, 1 + m))
    lifted = tuple(parse(rows[i], i + 1) for i in range(1 + m, 1 + m + k))
    return MulticutInstance(n, edges, lifted)
