"""Capacitated s-t graph and max-flow/min-cut solvers.

The primary solver is a Boykov-Kolmogorov-style augmenting-path algorithm
with reused S/T search trees (grow / augment / adopt). A plain BFS
augmenting-path solver (``method="bfs"``) is kept alongside as the slow
reference; both must agree on the flow value.

Infinite capacity is ``math.inf``: it never saturates during augmentation,
and a bottleneck of inf means every s-t cut crosses an infinite arc.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from ._accel import njit
from .errors import UnboundedFlowError

INFINITE = math.inf

_TREE_FREE = 0
_TREE_S = 1
_TREE_T = 2
_PARENT_TERMINAL = -1
_PARENT_NONE = -2


@dataclass(frozen=True)
class CutResult:
    flow_value: float
    source_side: np.ndarray  # bool per node, True = S

    def side(self, node: int) -> str:
        return "S" if self.source_side[node] else "T"


class FlowGraph:
    """Directed arc-pair graph with per-node terminal capacities."""

    def __init__(self):
        self._node_count = 0
        self._tails = []
        self._heads = []
        self._caps = []
        self._cap_s = []
        self._cap_t = []

    @property
    def node_count(self) -> int:
        return self._node_count

    @property
    def arc_count(self) -> int:
        return len(self._heads)

    def add_node(self) -> int:
        self._node_count += 1
        self._cap_s.append(0.0)
        self._cap_t.append(0.0)
        return self._node_count - 1

    def add_nodes(self, count: int) -> range:
        first = self._node_count
        self._node_count += int(count)
        self._cap_s.extend([0.0] * int(count))
        self._cap_t.extend([0.0] * int(count))
        return range(first, self._node_count)

    def _check_node(self, p):
        if not 0 <= p < self._node_count:
            raise ValueError(f"invalid node id {p}")

    @staticmethod
    def _check_cap(c):
        if not (c >= 0.0):  # rejects negatives and NaN
            raise ValueError(f"capacity must be >= 0 or inf, got {c}")

    def add_nlink(self, p: int, q: int, cap_pq: float, cap_qp: float) -> int:
        self._check_node(p)
        self._check_node(q)
        self._check_cap(cap_pq)
        self._check_cap(cap_qp)
        arc = len(self._heads)
        self._tails.extend((p, q))
        self._heads.extend((q, p))
        self._caps.extend((float(cap_pq), float(cap_qp)))
        return arc

    def add_nlinks(self, ps, qs, cap_pq, cap_qp) -> None:
        """Bulk n-link insertion, equivalent to sequential add_nlink calls."""
        ps = np.asarray(ps, dtype=np.int64)
        qs = np.asarray(qs, dtype=np.int64)
        fw = np.broadcast_to(np.asarray(cap_pq, dtype=np.float64), ps.shape)
        bw = np.broadcast_to(np.asarray(cap_qp, dtype=np.float64), ps.shape)
        if len(ps) == 0:
            return
        if ps.min() < 0 or qs.min() < 0 or max(ps.max(), qs.max()) >= self._node_count:
            raise ValueError("invalid node id in bulk n-links")
        if np.isnan(fw).any() or np.isnan(bw).any() or (fw < 0).any() or (bw < 0).any():
            raise ValueError("capacity must be >= 0 or inf")
        tails = np.empty(2 * len(ps), dtype=np.int64)
        heads = np.empty_like(tails)
        caps = np.empty(2 * len(ps), dtype=np.float64)
        tails[0::2], tails[1::2] = ps, qs
        heads[0::2], heads[1::2] = qs, ps
        caps[0::2], caps[1::2] = fw, bw
        self._tails.extend(tails.tolist())
        self._heads.extend(heads.tolist())
        self._caps.extend(caps.tolist())

    def add_tlink(self, p: int, cap_s: float, cap_t: float) -> None:
        """Terminal capacities accumulate across repeated calls."""
        self._check_node(p)
        self._check_cap(cap_s)
        self._check_cap(cap_t)
        self._cap_s[p] += float(cap_s)
        self._cap_t[p] += float(cap_t)

    def _arrays(self):
        n = self._node_count
        m = len(self._heads)
        tails = np.asarray(self._tails, dtype=np.int64)
        heads = np.asarray(self._heads, dtype=np.int64)
        caps = np.asarray(self._caps, dtype=np.float64)
        # per-node adjacency linked lists in insertion order
        first = np.full(n, -1, dtype=np.int64)
        nxt = np.full(max(m, 1), -1, dtype=np.int64)[:m]
        if m:
            order = np.argsort(tails, kind="stable")
            sorted_tails = tails[order]
            is_first = np.ones(m, dtype=bool)
            is_first[1:] = sorted_tails[1:] != sorted_tails[:-1]
            first[sorted_tails[is_first]] = order[is_first]
            same = sorted_tails[:-1] == sorted_tails[1:]
            nxt[order[:-1][same]] = order[1:][same]
        return first, heads, nxt, caps

    def max_flow(self, method: str = "bk") -> CutResult:
        """Solve; ``side`` is residual source-reachability after max flow."""
        n = self._node_count
        cap_s = np.asarray(self._cap_s, dtype=np.float64)
        cap_t = np.asarray(self._cap_t, dtype=np.float64)
        if n == 0:
            return CutResult(0.0, np.zeros(0, dtype=bool))
        base = np.minimum(cap_s, cap_t)
        if np.isinf(base).any():
            raise UnboundedFlowError("a node carries infinite capacity to both terminals")
        excess = cap_s - cap_t
        first, heads, nxt, caps = self._arrays()
        rcap = caps.copy()
        if method == "bk":
            flow, bad = _bk_solve(first, heads, nxt, rcap, excess)
        elif method == "bfs":
            flow, bad = _bfs_solve(first, heads, nxt, rcap, excess)
        else:
            raise ValueError(f"unknown method {method!r}")
        if bad:
            raise UnboundedFlowError("every s-t cut crosses an infinite-capacity arc")
        side = np.zeros(n, dtype=bool)
        _residual_side(first, heads, nxt, rcap, excess, side)
        return CutResult(float(base.sum()) + float(flow), side)

    def cut_capacity(self, source_side: np.ndarray) -> float:
        """Capacity of the cut induced by a labeling (True = S)."""
        total = 0.0
        for p, cs, ct in zip(range(self._node_count), self._cap_s, self._cap_t):
            total += ct if source_side[p] else cs
        for a in range(len(self._heads)):
            t, h = self._tails[a], self._heads[a]
            if source_side[t] and not source_side[h]:
                total += self._caps[a]
        return total


@njit(cache=True)
def _bk_solve(first, heads, nxt, rcap, excess):
    n = excess.size
    tree = np.zeros(n, dtype=np.uint8)
    parent_arc = np.full(n, _PARENT_NONE, dtype=np.int64)
    dist = np.zeros(n, dtype=np.int64)
    ts = np.zeros(n, dtype=np.int64)
    active = np.empty(n + 1, dtype=np.int64)
    in_active = np.zeros(n, dtype=np.bool_)
    aq_head = 0
    aq_tail = 0
    orph = np.empty(16, dtype=np.int64)
    otop = 0
    flow = 0.0
    time = 0

    for i in range(n):
        if excess[i] > 0.0:
            tree[i] = _TREE_S
        elif excess[i] < 0.0:
            tree[i] = _TREE_T
        else:
            continue
        parent_arc[i] = _PARENT_TERMINAL
        dist[i] = 1
        active[aq_tail] = i
        aq_tail = (aq_tail + 1) % (n + 1)
        in_active[i] = True

    while True:
        # ---- grow S and T trees until they touch ----
        mid = np.int64(-1)
        while aq_head != aq_tail:
            i = active[aq_head]
            aq_head = (aq_head + 1) % (n + 1)
            in_active[i] = False
            ti = tree[i]
            if ti == _TREE_FREE:
                continue
            a = first[i]
            while a != -1:
                r = rcap[a] if ti == _TREE_S else rcap[a ^ 1]
                if r > 0.0:
                    j = heads[a]
                    tj = tree[j]
                    if tj == _TREE_FREE:
                        tree[j] = ti
                        parent_arc[j] = a ^ 1
                        dist[j] = dist[i] + 1
                        ts[j] = ts[i]
                        if not in_active[j]:
                            active[aq_tail] = j
                            aq_tail = (aq_tail + 1) % (n + 1)
                            in_active[j] = True
                    elif tj != ti:
                        mid = a if ti == _TREE_S else (a ^ 1)
                        if not in_active[i]:
                            active[aq_tail] = i
                            aq_tail = (aq_tail + 1) % (n + 1)
                            in_active[i] = True
                        break
                    elif ts[j] <= ts[i] and dist[j] > dist[i] + 1:
                        parent_arc[j] = a ^ 1
                        ts[j] = ts[i]
                        dist[j] = dist[i] + 1
                a = nxt[a]
            if mid != -1:
                break
        if mid == -1:
            return flow, 0
        time += 1

        # ---- augment along the path through mid (oriented S -> T) ----
        u = heads[mid ^ 1]
        v = heads[mid]
        b = rcap[mid]
        i = u
        while parent_arc[i] != _PARENT_TERMINAL:
            ap = parent_arc[i]
            r = rcap[ap ^ 1]
            if r < b:
                b = r
            i = heads[ap]
        if excess[i] < b:
            b = excess[i]
        i = v
        while parent_arc[i] != _PARENT_TERMINAL:
            ap = parent_arc[i]
            r = rcap[ap]
            if r < b:
                b = r
            i = heads[ap]
        if -excess[i] < b:
            b = -excess[i]
        if b == np.inf:
            return flow, 1

        rcap[mid] -= b
        rcap[mid ^ 1] += b
        i = u
        while parent_arc[i] != _PARENT_TERMINAL:
            ap = parent_arc[i]
            rcap[ap] += b
            rcap[ap ^ 1] -= b
            nx = heads[ap]
            if rcap[ap ^ 1] <= 0.0:
                parent_arc[i] = _PARENT_NONE
                if otop == orph.size:
                    grown = np.empty(orph.size * 2, dtype=np.int64)
                    grown[:otop] = orph
                    orph = grown
                orph[otop] = i
                otop += 1
            i = nx
        excess[i] -= b
        if excess[i] <= 0.0:
            parent_arc[i] = _PARENT_NONE
            if otop == orph.size:
                grown = np.empty(orph.size * 2, dtype=np.int64)
                grown[:otop] = orph
                orph = grown
            orph[otop] = i
            otop += 1
        i = v
        while parent_arc[i] != _PARENT_TERMINAL:
            ap = parent_arc[i]
            rcap[ap ^ 1] += b
            rcap[ap] -= b
            nx = heads[ap]
            if rcap[ap] <= 0.0:
                parent_arc[i] = _PARENT_NONE
                if otop == orph.size:
                    grown = np.empty(orph.size * 2, dtype=np.int64)
                    grown[:otop] = orph
                    orph = grown
                orph[otop] = i
                otop += 1
            i = nx
        excess[i] += b
        if excess[i] >= 0.0:
            parent_arc[i] = _PARENT_NONE
            if otop == orph.size:
                grown = np.empty(orph.size * 2, dtype=np.int64)
                grown[:otop] = orph
                orph = grown
            orph[otop] = i
            otop += 1
        flow += b

        # ---- adopt orphans ----
        while otop > 0:
            otop -= 1
            o = orph[otop]
            to = tree[o]
            best_arc = np.int64(-1)
            best_d = np.int64(2**62)
            a = first[o]
            while a != -1:
                j = heads[a]
                if tree[j] == to:
                    r = rcap[a ^ 1] if to == _TREE_S else rcap[a]
                    if r > 0.0:
                        # walk to the root to verify j's origin
                        d = np.int64(0)
                        k = j
                        valid = False
                        while True:
                            if ts[k] == time:
                                d += dist[k]
                                valid = True
                                break
                            pk = parent_arc[k]
                            if pk == _PARENT_TERMINAL:
                                d += 1
                                valid = True
                                break
                            if pk == _PARENT_NONE:
                                break
                            d += 1
                            k = heads[pk]
                        if valid:
                            if d < best_d:
                                best_d = d
                                best_arc = a
                            k = j
                            dd = d
                            while ts[k] != time:
                                ts[k] = time
                                dist[k] = dd
                                dd -= 1
                                pk = parent_arc[k]
                                if pk == _PARENT_TERMINAL:
                                    break
                                k = heads[pk]
                a = nxt[a]
            if best_arc != -1:
                parent_arc[o] = best_arc
                dist[o] = best_d + 1
                ts[o] = time
            else:
                a = first[o]
                while a != -1:
                    j = heads[a]
                    if tree[j] == to:
                        r = rcap[a ^ 1] if to == _TREE_S else rcap[a]
                        if r > 0.0 and not in_active[j]:
                            active[aq_tail] = j
                            aq_tail = (aq_tail + 1) % (n + 1)
                            in_active[j] = True
                        pj = parent_arc[j]
                        if pj >= 0 and heads[pj] == o:
                            parent_arc[j] = _PARENT_NONE
                            if otop == orph.size:
                                grown = np.empty(orph.size * 2, dtype=np.int64)
                                grown[:otop] = orph
                                orph = grown
                            orph[otop] = j
                            otop += 1
                    a = nxt[a]
                tree[o] = _TREE_FREE


@njit(cache=True)
def _residual_side(first, heads, nxt, rcap, excess, side):
    n = excess.size
    queue = np.empty(n, dtype=np.int64)
    qt = 0
    for i in range(n):
        if excess[i] > 0.0:
            side[i] = True
            queue[qt] = i
            qt += 1
    qh = 0
    while qh < qt:
        i = queue[qh]
        qh += 1
        a = first[i]
        while a != -1:
            j = heads[a]
            if rcap[a] > 0.0 and not side[j]:
                side[j] = True
                queue[qt] = j
                qt += 1
            a = nxt[a]


def _bfs_solve(first, heads, nxt, rcap, excess):
    """Plain multi-source BFS augmenting paths; reference implementation."""
    n = excess.size
    flow = 0.0
    while True:
        parent = np.full(n, -3, dtype=np.int64)  # -3 unvisited, -1 source root
        queue = deque()
        sink = -1
        for i in range(n):
            if excess[i] > 0.0:
                parent[i] = _PARENT_TERMINAL
                queue.append(i)
        while queue:
            i = queue.popleft()
            if excess[i] < 0.0:
                sink = i
                break
            a = first[i]
            while a != -1:
                j = heads[a]
                if rcap[a] > 0.0 and parent[j] == -3:
                    parent[j] = a
                    queue.append(j)
                a = nxt[a]
        if sink == -1:
            return flow, 0
        b = -excess[sink]
        i = sink
        while parent[i] != _PARENT_TERMINAL:
            a = parent[i]
            b = min(b, rcap[a])
            i = heads[a ^ 1]
        b = min(b, excess[i])
        if b == math.inf:
            return flow, 1
        i = sink
        while parent[i] != _PARENT_TERMINAL:
            a = parent[i]
            rcap[a] -= b
            rcap[a ^ 1] += b
            i = heads[a ^ 1]
        excess[i] -= b
        excess[sink] += b
        flow += b


def to_dimacs(graph: FlowGraph) -> str:
    """DIMACS max-flow text; terminals become explicit nodes 1 (s) and 2 (t)."""
    lines = []
    arcs = []
    for p in range(graph.node_count):
        cs, ct = graph._cap_s[p], graph._cap_t[p]
        if cs > 0:
            arcs.append((1, p + 3, cs))
        if ct > 0:
            arcs.append((p + 3, 2, ct))
    for a in range(0, graph.arc_count, 2):
        p, q = graph._tails[a], graph._heads[a]
        arcs.append((p + 3, q + 3, graph._caps[a]))
        arcs.append((q + 3, p + 3, graph._caps[a + 1]))
    lines.append(f"p max {graph.node_count + 2} {len(arcs)}")
    lines.append("n 1 s")
    lines.append("n 2 t")
    for u, v, c in arcs:
        cap = "inf" if math.isinf(c) else repr(float(c))
        lines.append(f"a {u} {v} {cap}")
    return "\n".join(lines) + "\n"


def from_dimacs(text: str) -> FlowGraph:
    g = FlowGraph()
    n_nodes = None
    source = sink = None
    pending = []
    for line in text.splitlines():
        parts = line.split()
        if not parts or parts[0] == "c":
            continue
        if parts[0] == "p":
            n_nodes = int(parts[2])
            g.add_nodes(n_nodes - 2)
        elif parts[0] == "n":
            if parts[2] == "s":
                source = int(parts[1])
            else:
                sink = int(parts[1])
        elif parts[0] == "a":
            u, v = int(parts[1]), int(parts[2])
            c = math.inf if parts[3] == "inf" else float(parts[3])
            pending.append((u, v, c))
    for u, v, c in pending:
        if u == source:
            g.add_tlink(v - 3, c, 0.0)
        elif v == sink:
            g.add_tlink(u - 3, 0.0, c)
        else:
            g.add_nlink(u - 3, v - 3, c, 0.0)
    return g
