"""Network simplex for the balanced bipartite transportation problem.

    minimize   sum_ij C_ij x_ij
    subject to sum_j x_ij = a_i,  sum_i x_ij = b_j,  x >= 0

The basis is a spanning tree of the bipartite graph (m + n - 1 cells), seeded
by the north-west corner rule. Entering cells are priced by the most negative
reduced cost; after a run of degenerate pivots the solver switches to Bland's
rule (smallest row-major index for entering and leaving cells) until the
objective strictly decreases again, which rules out cycling.
"""
from __future__ import annotations

from collections import deque

import numpy as np


class TransportResult:
    __slots__ = ("plan", "u", "v", "cost", "iterations")

    def __init__(self, plan, u, v, cost, iterations):
        self.plan = plan
        self.u = u
        self.v = v
        self.cost = cost
        self.iterations = iterations


def _northwest_corner(a, b):
    m, n = a.size, b.size
    ra, rb = a.copy(), b.copy()
    x = np.zeros((m, n))
    basis = []
    i = j = 0
    while True:
        t = min(ra[i], rb[j])
        x[i, j] = t
        basis.append((i, j))
        ra[i] -= t
        rb[j] -= t
        if i == m - 1 and j == n - 1:
            break
        if j == n - 1 or (i < m - 1 and ra[i] <= rb[j]):
            i += 1
        else:
            j += 1
    return x, basis


class _Tree:
    """Adjacency of the basis tree; rows are nodes 0..m-1, columns m..m+n-1."""

    def __init__(self, m, n, basis):
        self.m = m
        self.adj = [set() for _ in range(m + n)]
        for i, j in basis:
            self.add(i, j)

    def add(self, i, j):
        self.adj[i].add(self.m + j)
        self.adj[self.m + j].add(i)

    def remove(self, i, j):
        self.adj[i].discard(self.m + j)
        self.adj[self.m + j].discard(i)

    def potentials(self, C):
        m = self.m
        n = len(self.adj) - m
        u = np.full(m, np.nan)
        v = np.full(n, np.nan)
        u[0] = 0.0
        queue = deque([0])
        seen = np.zeros(m + n, dtype=bool)
        seen[0] = True
        while queue:
            node = queue.popleft()
            for nb in self.adj[node]:
                if seen[nb]:
                    continue
                seen[nb] = True
                if node < m:
                    v[nb - m] = C[node, nb - m] - u[node]
                else:
                    u[nb] = C[nb, node - m] - v[node - m]
                queue.append(nb)
        return u, v

    def path(self, start, goal):
        """Node path start -> goal through the tree."""
        parent = {start: None}
        queue = deque([start])
        while queue:
            node = queue.popleft()
            if node == goal:
                break
            for nb in self.adj[node]:
                if nb not in parent:
                    parent[nb] = node
                    queue.append(nb)
        out = [goal]
        while parent[out[-1]] is not None:
            out.append(parent[out[-1]])
        return out[::-1]


def transport_simplex(a, b, C, tol=1e-12, max_iter=None, pricing="dantzig", degenerate_run=20):
    """Solve the transportation LP exactly.

    Returns plan x (m x n), dual potentials u, v with u_i + v_j <= C_ij and
    equality on the basis, and the optimal cost.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    C = np.asarray(C, dtype=float)
    m, n = a.size, b.size
    if C.shape != (m, n):
        raise ValueError("cost matrix shape does not match marginals")
    b = b * (a.sum() / b.sum())
    x, basis = _northwest_corner(a, b)
    tree = _Tree(m, n, basis)
    scale = max(1.0, float(np.abs(C).max()))
    if max_iter is None:
        max_iter = 50 * (m + n) * max(m, n) + 1000
    it = 0
    stalled = 0
    while True:
        u, v = tree.potentials(C)
        red = C - u[:, None] - v[None, :]
        neg = red.ravel() < -tol * scale
        if not neg.any():
            break
        it += 1
        if it > max_iter:
            raise RuntimeError("network simplex did not converge")
        bland = pricing == "bland" or stalled >= degenerate_run
        k = int(np.argmax(neg)) if bland else int(np.argmin(red))
        ei, ej = divmod(k, n)
        # cycle: entering cell (+), then the tree path col ej -> row ei
        nodes = tree.path(m + ej, ei)
        cells = []
        for p, q in zip(nodes[:-1], nodes[1:]):
            cells.append((q, p - m) if p >= m else (p, q - m))
        minus = cells[0::2]
        plus = cells[1::2]
        theta = min(x[c] for c in minus)
        leave = min(c for c in minus if x[c] == theta)
        stalled = stalled + 1 if theta == 0.0 else 0
        for c in plus:
            x[c] += theta
        for c in minus:
            x[c] -= theta
        x[ei, ej] = theta
        x[leave] = 0.0
        tree.remove(*leave)
        tree.add(ei, ej)
    x = np.maximum(x, 0.0)
    cost = float(np.sum(x * C))
    return TransportResult(x, u, v, cost, it)
