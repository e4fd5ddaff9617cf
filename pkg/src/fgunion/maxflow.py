"""Exact max-flow / min-cut on two-terminal networks.

Networks are grids of patch nodes plus implicit Source/Target terminals
expressed as per-node terminal capacities. The solver is a shortest-
augmenting-path blocking-flow method over flat CSR arrays, JIT-compiled and
GIL-free so that many independent solves can run on a thread pool. The
returned source side is the residual-reachability set from S, the canonical
minimal source side, so outputs are reproducible when several minimum cuts
exist.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit


@dataclass(frozen=True)
class FlowNetwork:
    """Patch-node network with implicit terminals.

    neighbor_arcs is a sequence of (u, v, capacity_uv, capacity_vu) records,
    at most one per unordered node pair, no self-arcs. source_caps[i] is the
    capacity of S->i, target_caps[i] of i->T.
    """

    node_count: int
    arc_u: np.ndarray
    arc_v: np.ndarray
    cap_uv: np.ndarray
    cap_vu: np.ndarray
    source_caps: np.ndarray
    target_caps: np.ndarray

    @classmethod
    def build(cls, node_count, neighbor_arcs, source_caps, target_caps) -> "FlowNetwork":
        if node_count < 1:
            raise ValueError("node_count must be positive")
        arcs = list(neighbor_arcs)
        if arcs:
            rec = np.asarray(arcs, dtype=np.float64)
            if rec.ndim != 2 or rec.shape[1] != 4:
                raise ValueError("neighbor arcs must be (u, v, cap_uv, cap_vu) records")
            arc_u = rec[:, 0]
            arc_v = rec[:, 1]
            if np.any(arc_u != np.floor(arc_u)) or np.any(arc_v != np.floor(arc_v)):
                raise ValueError("node indices must be integers")
            arc_u = arc_u.astype(np.int64)
            arc_v = arc_v.astype(np.int64)
            cap_uv = np.ascontiguousarray(rec[:, 2])
            cap_vu = np.ascontiguousarray(rec[:, 3])
        else:
            arc_u = np.empty(0, np.int64)
            arc_v = np.empty(0, np.int64)
            cap_uv = np.empty(0, np.float64)
            cap_vu = np.empty(0, np.float64)
        if arc_u.size:
            if arc_u.min() < 0 or arc_v.min() < 0 or arc_u.max() >= node_count or arc_v.max() >= node_count:
                raise ValueError("arc endpoint out of range")
            if np.any(arc_u == arc_v):
                raise ValueError("self-arcs are not allowed")
            lo = np.minimum(arc_u, arc_v)
            hi = np.maximum(arc_u, arc_v)
            pair_keys = lo * node_count + hi
            if np.unique(pair_keys).size != pair_keys.size:
                raise ValueError("duplicate arc record for a node pair")
        src = np.ascontiguousarray(source_caps, dtype=np.float64)
        tgt = np.ascontiguousarray(target_caps, dtype=np.float64)
        if src.shape != (node_count,) or tgt.shape != (node_count,):
            raise ValueError("terminal capacity arrays must have one entry per node")
        for name, a in (("arc", cap_uv), ("arc", cap_vu), ("source", src), ("target", tgt)):
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{name} capacities must be finite")
            if a.size and a.min() < 0:
                raise ValueError(f"{name} capacities must be nonnegative")
        return cls(int(node_count), arc_u, arc_v, cap_uv, cap_vu, src, tgt)


@dataclass(frozen=True)
class MinCutResult:
    flow_value: float
    source_side: np.ndarray  # bool per patch node


class CsrGraph:
    """Frozen CSR residual-graph structure with terminal arc slots.

    The arc layout (including one S->i and one i->T arc per node) is fixed at
    build time; per-solve capacity vectors are produced by fill_caps. One
    structure is shared read-only by all solves over the same grid.
    """

    __slots__ = ("n", "indptr", "head", "rev", "base_cap", "src_pos", "tgt_pos", "source", "target")

    def __init__(self, n: int, arc_u: np.ndarray, arc_v: np.ndarray,
                 cap_uv: np.ndarray, cap_vu: np.ndarray):
        self.n = n
        self.source = n
        self.target = n + 1
        node_total = n + 2
        a = arc_u.size
        # Directed arcs come in mutually-reverse pairs (2k, 2k+1):
        # neighbor pairs first, then S->i / i->S, then i->T / T->i.
        m = 2 * a + 4 * n
        tails = np.empty(m, np.int64)
        heads = np.empty(m, np.int64)
        caps = np.zeros(m, np.float64)
        tails[0:2 * a:2] = arc_u
        heads[0:2 * a:2] = arc_v
        caps[0:2 * a:2] = cap_uv
        tails[1:2 * a:2] = arc_v
        heads[1:2 * a:2] = arc_u
        caps[1:2 * a:2] = cap_vu
        ids = np.arange(n, dtype=np.int64)
        s_fwd = 2 * a + 2 * ids
        tails[s_fwd] = self.source
        heads[s_fwd] = ids
        tails[s_fwd + 1] = ids
        heads[s_fwd + 1] = self.source
        t_fwd = 2 * a + 2 * n + 2 * ids
        tails[t_fwd] = ids
        heads[t_fwd] = self.target
        tails[t_fwd + 1] = self.target
        heads[t_fwd + 1] = ids
        order = np.argsort(tails, kind="stable")
        pos = np.empty(m, np.int64)
        pos[order] = np.arange(m, dtype=np.int64)
        rev_orig = np.empty(m, np.int64)
        rev_orig[0::2] = np.arange(1, m, 2)
        rev_orig[1::2] = np.arange(0, m, 2)
        self.indptr = np.zeros(node_total + 1, np.int64)
        np.add.at(self.indptr, tails + 1, 1)
        np.cumsum(self.indptr, out=self.indptr)
        self.head = heads[order]
        self.rev = np.empty(m, np.int64)
        self.rev[pos] = pos[rev_orig]
        self.base_cap = caps[order]
        self.src_pos = pos[s_fwd]
        self.tgt_pos = pos[t_fwd]

    def fill_caps(self, source_caps: np.ndarray, target_caps: np.ndarray) -> np.ndarray:
        cap = self.base_cap.copy()
        cap[self.src_pos] = source_caps
        cap[self.tgt_pos] = target_caps
        return cap

    def solve(self, cap: np.ndarray) -> tuple[float, np.ndarray]:
        """Run max flow on a capacity vector; returns (flow, patch source side)."""
        level = np.empty(self.n + 2, np.int64)
        flow = _dinic(self.indptr, self.head, self.rev, cap, self.source, self.target, level)
        return float(flow), level[: self.n] >= 0


@njit(cache=True, nogil=True)
def _dinic(indptr, head, rev, cap, s, t, level):
    nv = indptr.shape[0] - 1
    queue = np.empty(nv, np.int64)
    iters = np.empty(nv, np.int64)
    stack = np.empty(nv + 1, np.int64)
    total = 0.0
    while True:
        for i in range(nv):
            level[i] = -1
        level[s] = 0
        queue[0] = s
        qh, qt = 0, 1
        while qh < qt:
            u = queue[qh]
            qh += 1
            for e in range(indptr[u], indptr[u + 1]):
                v = head[e]
                if cap[e] > 0.0 and level[v] < 0:
                    level[v] = level[u] + 1
                    queue[qt] = v
                    qt += 1
        if level[t] < 0:
            return total
        for i in range(nv):
            iters[i] = indptr[i]
        depth = 0
        u = s
        while True:
            if u == t:
                bottleneck = np.inf
                for d in range(depth):
                    e = stack[d]
                    if cap[e] < bottleneck:
                        bottleneck = cap[e]
                total += bottleneck
                retreat = depth
                for d in range(depth):
                    e = stack[d]
                    cap[e] -= bottleneck
                    cap[rev[e]] += bottleneck
                    if cap[e] <= 0.0 and d < retreat:
                        retreat = d
                depth = retreat
                u = s if depth == 0 else head[stack[depth - 1]]
                continue
            found = -1
            e = iters[u]
            stop = indptr[u + 1]
            while e < stop:
                v = head[e]
                if cap[e] > 0.0 and level[v] == level[u] + 1:
                    found = e
                    break
                e += 1
            iters[u] = e
            if found >= 0:
                stack[depth] = found
                depth += 1
                u = head[found]
            else:
                level[u] = -1  # dead end for this phase
                if u == s:
                    break
                depth -= 1
                u = s if depth == 0 else head[stack[depth - 1]]


def solve_min_cut(net: FlowNetwork) -> MinCutResult:
    """Exact minimum s-t cut; deterministic for identical input."""
    graph = CsrGraph(net.node_count, net.arc_u, net.arc_v, net.cap_uv, net.cap_vu)
    flow, side = graph.solve(graph.fill_caps(net.source_caps, net.target_caps))
    return MinCutResult(flow, side)
