"""Min-cost max-flow via successive shortest augmenting paths.

Dijkstra with Johnson potentials on the residual graph; requires
non-negative integer edge costs, which the callers guarantee by
quantizing their (already non-negative) real costs.  Sized for the small
per-frame association graphs and the global id-assignment problems this
package builds, not for huge networks.
"""

from __future__ import annotations

import heapq

INF = float("inf")


class MinCostMaxFlow:
    """Residual-graph solver.  Nodes are dense integers from add_node()."""

    def __init__(self):
        self._to: list[int] = []
        self._cap: list[int] = []
        self._cost: list[int] = []
        self._adj: list[list[int]] = []

    def add_node(self) -> int:
        self._adj.append([])
        return len(self._adj) - 1

    def add_nodes(self, count: int) -> list[int]:
        return [self.add_node() for _ in range(count)]

    def add_edge(self, u: int, v: int, cap: int, cost: int) -> int:
        """Add a directed edge; returns a handle usable with flow_on()."""
        cap = int(cap)
        if cost != int(cost):
            raise ValueError("edge costs must be integers")
        cost = int(cost)
        if cost < 0:
            raise ValueError("edge costs must be non-negative")
        if cap < 0:
            raise ValueError("edge capacity must be non-negative")
        handle = len(self._to)
        self._to.append(v)
        self._cap.append(cap)
        self._cost.append(cost)
        self._adj[u].append(handle)
        self._to.append(u)
        self._cap.append(0)
        self._cost.append(-cost)
        self._adj[v].append(handle + 1)
        return handle

    def flow_on(self, handle: int) -> int:
        """Units pushed through an edge (reverse residual capacity)."""
        return self._cap[handle ^ 1]

    def solve(self, source: int, sink: int) -> tuple[int, int]:
        """Push flow until no augmenting path remains.

        Returns (max_flow, min_cost_among_max_flows).
        """
        n = len(self._adj)
        to, cap, cost, adj = self._to, self._cap, self._cost, self._adj
        potential = [0] * n
        total_flow = 0
        total_cost = 0
        while True:
            dist = [INF] * n
            dist[source] = 0
            parent_edge = [-1] * n
            heap = [(0, source)]
            while heap:
                d, u = heapq.heappop(heap)
                if d > dist[u]:
                    continue
                pu = potential[u]
                for e in adj[u]:
                    if cap[e] <= 0:
                        continue
                    v = to[e]
                    nd = d + cost[e] + pu - potential[v]
                    if nd < dist[v]:
                        dist[v] = nd
                        parent_edge[v] = e
                        heapq.heappush(heap, (nd, v))
            if dist[sink] == INF:
                break
            for v in range(n):
                if dist[v] < INF:
                    potential[v] += dist[v]
            # bottleneck along the shortest path
            push = INF
            v = sink
            while v != source:
                e = parent_edge[v]
                push = min(push, cap[e])
                v = to[e ^ 1]
            v = sink
            while v != source:
                e = parent_edge[v]
                cap[e] -= push
                cap[e ^ 1] += push
                total_cost += push * cost[e]
                v = to[e ^ 1]
            total_flow += push
        return total_flow, total_cost
