"""Min-cut / max-flow on pixel grids.

Dinic's algorithm over an explicit residual edge list.  Capacities are
floats; n-links are symmetric (same capacity both ways), t-links connect
every pixel to the source and sink.  The solver only ever adds and
subtracts capacities, so flows over dyadic-rational inputs stay exact.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

# Residuals at or below this are treated as saturated to stop float dust
# from generating endless augmenting paths.
_EPS = 1e-12

# (dy, dx) for the four forward neighbors of an 8-connected grid.
GRID_OFFSETS = ((0, 1), (1, 0), (1, 1), (1, -1))


@dataclass
class GridGraph:
    """8-connected pixel grid with terminal links.

    ``cap_source[y, x]`` is the source->pixel capacity, ``cap_sink`` the
    pixel->sink capacity.  ``n_caps[k]`` holds the symmetric capacity between
    each pixel and its neighbor at ``GRID_OFFSETS[k]``; entries whose
    neighbor falls outside the grid are ignored.
    """

    cap_source: np.ndarray
    cap_sink: np.ndarray
    n_caps: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]

    def __post_init__(self) -> None:
        self.cap_source = np.asarray(self.cap_source, dtype=np.float64)
        self.cap_sink = np.asarray(self.cap_sink, dtype=np.float64)
        if self.cap_source.shape != self.cap_sink.shape or self.cap_source.ndim != 2:
            raise ValueError("terminal capacity maps must share a 2-D shape")
        caps = []
        for arr in self.n_caps:
            arr = np.asarray(arr, dtype=np.float64)
            if arr.shape != self.cap_source.shape:
                raise ValueError("n-link capacity maps must match the grid shape")
            caps.append(arr)
        self.n_caps = tuple(caps)
        stacked = [self.cap_source, self.cap_sink, *self.n_caps]
        for arr in stacked:
            if arr.size and arr.min() < 0:
                raise ValueError("capacities must be non-negative")

    @property
    def shape(self) -> tuple[int, int]:
        return self.cap_source.shape


class _Dinic:
    def __init__(self, n_nodes: int):
        self.n = n_nodes
        self.to: list[int] = []
        self.cap: list[float] = []
        self.head: list[list[int]] = [[] for _ in range(n_nodes)]

    def add_edge(self, u: int, v: int, cap_uv: float, cap_vu: float = 0.0) -> None:
        self.head[u].append(len(self.to))
        self.to.append(v)
        self.cap.append(float(cap_uv))
        self.head[v].append(len(self.to))
        self.to.append(u)
        self.cap.append(float(cap_vu))

    def max_flow(self, s: int, t: int) -> float:
        flow = 0.0
        to, cap, head = self.to, self.cap, self.head
        while True:
            level = [-1] * self.n
            level[s] = 0
            queue = deque([s])
            while queue:
                u = queue.popleft()
                for eid in head[u]:
                    v = to[eid]
                    if level[v] < 0 and cap[eid] > _EPS:
                        level[v] = level[u] + 1
                        queue.append(v)
            if level[t] < 0:
                return flow
            it = [0] * self.n
            while True:
                pushed = self._dfs(s, t, level, it)
                if pushed <= 0.0:
                    break
                flow += pushed

    def _dfs(self, s: int, t: int, level: list[int], it: list[int]) -> float:
        # Iterative DFS for one augmenting path in the level graph.
        to, cap, head = self.to, self.cap, self.head
        path: list[int] = []
        u = s
        while True:
            if u == t:
                bottleneck = min(cap[eid] for eid in path)
                for eid in path:
                    cap[eid] -= bottleneck
                    cap[eid ^ 1] += bottleneck
                return bottleneck
            advanced = False
            while it[u] < len(head[u]):
                eid = head[u][it[u]]
                v = to[eid]
                if cap[eid] > _EPS and level[v] == level[u] + 1:
                    path.append(eid)
                    u = v
                    advanced = True
                    break
                it[u] += 1
            if advanced:
                continue
            level[u] = -1  # dead end, prune
            if not path:
                return 0.0
            eid = path.pop()
            u = to[eid ^ 1]
            it[u] += 1

    def reachable_from(self, s: int) -> np.ndarray:
        seen = np.zeros(self.n, dtype=bool)
        seen[s] = True
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for eid in self.head[u]:
                v = self.to[eid]
                if not seen[v] and self.cap[eid] > _EPS:
                    seen[v] = True
                    queue.append(v)
        return seen


def mincut_maxflow(graph: GridGraph) -> tuple[np.ndarray, float]:
    """Solve the grid min-cut.

    Returns (mask, flow) where mask[y, x] is True for pixels on the source
    side of a minimum cut and flow is the max-flow value (equal to the cut
    capacity by duality).
    """
    h, w = graph.shape
    n_pix = h * w
    s, t = n_pix, n_pix + 1
    solver = _Dinic(n_pix + 2)

    src = graph.cap_source.ravel()
    snk = graph.cap_sink.ravel()
    for i in range(n_pix):
        if src[i] > 0.0:
            solver.add_edge(s, i, src[i])
        if snk[i] > 0.0:
            solver.add_edge(i, t, snk[i])

    for (dy, dx), caps in zip(GRID_OFFSETS, graph.n_caps):
        ys = np.arange(max(0, -dy), h - max(0, dy))
        xs = np.arange(max(0, -dx), w - max(0, dx))
        for y in ys:
            base = y * w
            nbase = (y + dy) * w + dx
            row = caps[y]
            for x in xs:
                c = row[x]
                if c > 0.0:
                    solver.add_edge(base + x, nbase + x, c, c)

    flow = solver.max_flow(s, t)
    mask = solver.reachable_from(s)[:n_pix].reshape(h, w)
    return mask, flow
