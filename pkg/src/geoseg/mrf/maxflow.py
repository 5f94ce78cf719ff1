"""Exact s-t max-flow by augmenting paths with search-tree reuse.

Two search trees grow from the terminals; when they touch, the path is
augmented, saturated tree arcs produce orphans, and orphans are re-adopted or
freed instead of rebuilding the trees from scratch (Boykov-Kolmogorov).

Arcs are stored in pairs: arc ``2e`` goes i -> j and arc ``2e + 1`` is its
reverse, so the sister of arc ``a`` is ``a ^ 1``. Terminal capacities are kept
as one signed residual per node (positive: to source, negative: to sink).
"""

from __future__ import annotations

import numba as nb
import numpy as np

SOURCE = 0
SINK = 1

_NONE = -1
_TERMINAL = -2
_ORPHAN = -3
_INF = 1 << 60


@nb.njit(cache=True)
def _push(queue, tail, node):
    queue[tail[0] % queue.shape[0]] = node
    tail[0] += 1


@nb.njit(cache=True)
def _bk_maxflow(n, tr_cap, head, r_cap, adj_start, adj):
    parent = np.full(n, _NONE, np.int64)
    is_sink = np.zeros(n, np.bool_)
    ts = np.zeros(n, np.int64)
    dist = np.zeros(n, np.int64)
    in_active = np.zeros(n, np.bool_)
    active = np.empty(n + 1, np.int64)
    a_head = np.zeros(1, np.int64)
    a_tail = np.zeros(1, np.int64)
    orphans = np.empty(n + 1, np.int64)
    o_head = np.zeros(1, np.int64)
    o_tail = np.zeros(1, np.int64)

    for i in range(n):
        if tr_cap[i] > 0:
            parent[i] = _TERMINAL
            dist[i] = 1
            in_active[i] = True
            _push(active, a_tail, i)
        elif tr_cap[i] < 0:
            parent[i] = _TERMINAL
            is_sink[i] = True
            dist[i] = 1
            in_active[i] = True
            _push(active, a_tail, i)

    flow = 0.0
    time = 0
    current = -1
    while True:
        i = -1
        if current >= 0:
            i = current
            in_active[i] = False
            if parent[i] == _NONE:
                i = -1
        if i < 0:
            while a_head[0] < a_tail[0]:
                cand = active[a_head[0] % active.shape[0]]
                a_head[0] += 1
                in_active[cand] = False
                if parent[cand] != _NONE:
                    i = cand
                    break
            if i < 0:
                break

        # grow
        middle = -1
        if not is_sink[i]:
            for k in range(adj_start[i], adj_start[i + 1]):
                a = adj[k]
                if r_cap[a] > 0:
                    j = head[a]
                    if parent[j] == _NONE:
                        is_sink[j] = False
                        parent[j] = a ^ 1
                        ts[j] = ts[i]
                        dist[j] = dist[i] + 1
                        if not in_active[j]:
                            in_active[j] = True
                            _push(active, a_tail, j)
                    elif is_sink[j]:
                        middle = a
                        break
                    elif ts[j] <= ts[i] and dist[j] > dist[i]:
                        parent[j] = a ^ 1
                        ts[j] = ts[i]
                        dist[j] = dist[i] + 1
        else:
            for k in range(adj_start[i], adj_start[i + 1]):
                a = adj[k]
                if r_cap[a ^ 1] > 0:
                    j = head[a]
                    if parent[j] == _NONE:
                        is_sink[j] = True
                        parent[j] = a ^ 1
                        ts[j] = ts[i]
                        dist[j] = dist[i] + 1
                        if not in_active[j]:
                            in_active[j] = True
                            _push(active, a_tail, j)
                    elif not is_sink[j]:
                        middle = a ^ 1
                        break
                    elif ts[j] <= ts[i] and dist[j] > dist[i]:
                        parent[j] = a ^ 1
                        ts[j] = ts[i]
                        dist[j] = dist[i] + 1

        time += 1
        if middle < 0:
            current = -1
            continue

        # keep processing this node next round
        in_active[i] = True
        current = i

        # augment: bottleneck over source path, middle arc, sink path
        b = r_cap[middle]
        j = head[middle ^ 1]
        while parent[j] != _TERMINAL:
            a = parent[j]
            if r_cap[a ^ 1] < b:
                b = r_cap[a ^ 1]
            j = head[a]
        if tr_cap[j] < b:
            b = tr_cap[j]
        j = head[middle]
        while parent[j] != _TERMINAL:
            a = parent[j]
            if r_cap[a] < b:
                b = r_cap[a]
            j = head[a]
        if -tr_cap[j] < b:
            b = -tr_cap[j]

        r_cap[middle ^ 1] += b
        r_cap[middle] -= b
        j = head[middle ^ 1]
        while parent[j] != _TERMINAL:
            a = parent[j]
            r_cap[a] += b
            r_cap[a ^ 1] -= b
            nxt = head[a]
            if r_cap[a ^ 1] == 0:
                parent[j] = _ORPHAN
                _push(orphans, o_tail, j)
            j = nxt
        tr_cap[j] -= b
        if tr_cap[j] == 0:
            parent[j] = _ORPHAN
            _push(orphans, o_tail, j)
        j = head[middle]
        while parent[j] != _TERMINAL:
            a = parent[j]
            r_cap[a ^ 1] += b
            r_cap[a] -= b
            nxt = head[a]
            if r_cap[a] == 0:
                parent[j] = _ORPHAN
                _push(orphans, o_tail, j)
            j = nxt
        tr_cap[j] += b
        if tr_cap[j] == 0:
            parent[j] = _ORPHAN
            _push(orphans, o_tail, j)
        flow += b

        # adopt orphans
        time += 1
        while o_head[0] < o_tail[0]:
            i2 = orphans[o_head[0] % orphans.shape[0]]
            o_head[0] += 1
            sink_tree = is_sink[i2]
            d_min = _INF
            a_min = _NONE
            for k in range(adj_start[i2], adj_start[i2 + 1]):
                a0 = adj[k]
                ok = r_cap[a0] > 0 if sink_tree else r_cap[a0 ^ 1] > 0
                if not ok:
                    continue
                j = head[a0]
                if is_sink[j] != sink_tree or parent[j] == _NONE:
                    continue
                d = 0
                while True:
                    if ts[j] == time:
                        d += dist[j]
                        break
                    a = parent[j]
                    d += 1
                    if a == _TERMINAL:
                        ts[j] = time
                        dist[j] = 1
                        break
                    if a == _ORPHAN:
                        d = _INF
                        break
                    j = head[a]
                if d < _INF:
                    if d < d_min:
                        a_min = a0
                        d_min = d
                    j = head[a0]
                    while ts[j] != time:
                        ts[j] = time
                        dist[j] = d
                        d -= 1
                        j = head[parent[j]]
            if a_min != _NONE:
                parent[i2] = a_min
                ts[i2] = time
                dist[i2] = d_min + 1
            else:
                parent[i2] = _NONE
                for k in range(adj_start[i2], adj_start[i2 + 1]):
                    a0 = adj[k]
                    j = head[a0]
                    if is_sink[j] != sink_tree or parent[j] == _NONE:
                        continue
                    ok = r_cap[a0] > 0 if sink_tree else r_cap[a0 ^ 1] > 0
                    if ok and not in_active[j]:
                        in_active[j] = True
                        _push(active, a_tail, j)
                    pj = parent[j]
                    if pj != _TERMINAL and pj != _ORPHAN and head[pj] == i2:
                        parent[j] = _ORPHAN
                        _push(orphans, o_tail, j)

    side = np.zeros(n, np.int8)
    for i in range(n):
        if parent[i] != _NONE and is_sink[i]:
            side[i] = SINK
    return flow, side


class FlowGraph:
    """Directed graph with source/sink capacities; nodes are 0..n-1."""

    def __init__(self, num_nodes):
        self.num_nodes = int(num_nodes)
        self._src = np.zeros(self.num_nodes)
        self._snk = np.zeros(self.num_nodes)
        self._ei = []
        self._ej = []
        self._cap = []
        self._rev = []
        self._side = None
        self.flow = None

    @classmethod
    def from_arrays(cls, num_nodes, cap_source, cap_sink, tails, heads, caps, rev_caps):
        g = cls(num_nodes)
        g._src = np.asarray(cap_source, dtype=np.float64).copy()
        g._snk = np.asarray(cap_sink, dtype=np.float64).copy()
        g._ei = [np.asarray(tails, dtype=np.int64)]
        g._ej = [np.asarray(heads, dtype=np.int64)]
        g._cap = [np.asarray(caps, dtype=np.float64)]
        g._rev = [np.asarray(rev_caps, dtype=np.float64)]
        return g

    def add_tweights(self, node, cap_source, cap_sink):
        if cap_source < 0 or cap_sink < 0:
            raise ValueError("capacities must be >= 0")
        self._src[node] += cap_source
        self._snk[node] += cap_sink

    def add_edge(self, i, j, cap, rev_cap=0.0):
        if cap < 0 or rev_cap < 0:
            raise ValueError("capacities must be >= 0")
        if i == j:
            raise ValueError("self loops are not allowed")
        self._ei.append(np.array([i], dtype=np.int64))
        self._ej.append(np.array([j], dtype=np.int64))
        self._cap.append(np.array([cap], dtype=np.float64))
        self._rev.append(np.array([rev_cap], dtype=np.float64))

    def _arrays(self):
        if self._ei:
            ei = np.concatenate(self._ei)
            ej = np.concatenate(self._ej)
            cap = np.concatenate(self._cap)
            rev = np.concatenate(self._rev)
        else:
            ei = ej = np.zeros(0, np.int64)
            cap = rev = np.zeros(0)
        return ei, ej, cap, rev

    def maxflow(self):
        """Run the solver; returns the max-flow value (equal to the min-cut value)."""
        n = self.num_nodes
        ei, ej, cap, rev = self._arrays()
        if np.any(cap < 0) or np.any(rev < 0) or np.any(self._src < 0) or np.any(self._snk < 0):
            raise ValueError("capacities must be >= 0")
        m = len(ei)
        head = np.empty(2 * m, np.int64)
        head[0::2] = ej
        head[1::2] = ei
        tail = np.empty(2 * m, np.int64)
        tail[0::2] = ei
        tail[1::2] = ej
        r_cap = np.empty(2 * m)
        r_cap[0::2] = cap
        r_cap[1::2] = rev
        adj = np.argsort(tail, kind="stable").astype(np.int64)
        adj_start = np.zeros(n + 1, np.int64)
        np.cumsum(np.bincount(tail, minlength=n), out=adj_start[1:])
        base = np.minimum(self._src, self._snk)
        tr_cap = self._src - self._snk
        flow, side = _bk_maxflow(n, tr_cap, head, r_cap, adj_start, adj)
        self.flow = float(flow + base.sum())
        self._side = side
        return self.flow

    def segment(self, node=None):
        """SOURCE (0) or SINK (1) per node after :meth:`maxflow`."""
        if self._side is None:
            raise RuntimeError("maxflow() has not been run")
        return self._side if node is None else int(self._side[node])

    def cut_value(self, side=None):
        """Capacity of the cut given by ``side`` (defaults to the solver's partition)."""
        side = self.segment() if side is None else np.asarray(side)
        ei, ej, cap, rev = self._arrays()
        value = self._src[side == SINK].sum() + self._snk[side == SOURCE].sum()
        value += cap[(side[ei] == SOURCE) & (side[ej] == SINK)].sum()
        value += rev[(side[ej] == SOURCE) & (side[ei] == SINK)].sum()
        return float(value)


def max_flow(graph):
    """Solve ``graph``; returns (flow value, per-node side array)."""
    value = graph.maxflow()
    return value, graph.segment().copy()
