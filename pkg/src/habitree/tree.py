"""Finite filtered probability space.

Processes on a tree are plain numpy arrays indexed by node:

* node processes, shape ``(n,)`` or ``(n, m)``: the value is held constant on
  the node's interval ``[t_k, t_{k+1})`` (cadlag, piecewise constant);
* path processes, shape ``(n, Q)``: values at the ``Q`` left-Radau points of
  the node's interval. Column 0 is the value at the node time ``t_k``. Leaf
  rows carry the terminal value in every column.

Information only arrives at grid times, so anything that is a deterministic
function of time inside an interval is still adapted. Integrals over an
interval use the Radau rule, which is exact for polynomials of degree
``2Q - 2`` and integrates piecewise-constant node processes exactly.
"""
from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.polynomial import legendre

DEFAULT_QUAD = 10
PROB_TOL = 1e-12


class TreeError(ValueError):
    """Malformed tree; ``node`` names the offending node id when known."""

    def __init__(self, msg, node=None):
        super().__init__(msg if node is None else f"{msg} (node {node!r})")
        self.node = node


def radau_rule(q: int) -> tuple[np.ndarray, np.ndarray]:
    """Left Gauss-Radau nodes and weights on ``[0, 1)``; node 0 is ``0``."""
    if q < 1:
        raise ValueError("need at least one quadrature point")
    if q == 1:
        return np.zeros(1), np.ones(1)
    # interior nodes are the roots of (P_{q-1} + P_q) / (1 + x)
    coef = np.zeros(q + 1)
    coef[q - 1] = 1.0
    coef[q] = 1.0
    roots = np.sort(np.real(legendre.legroots(coef)))
    roots = roots[np.argsort(np.abs(roots + 1.0))][1:]
    x = np.concatenate([[-1.0], np.sort(roots)])
    pq1 = legendre.legval(x, np.eye(q)[q - 1])
    w = (1.0 - x) / (q * q * pq1 ** 2)
    w[0] = 2.0 / q ** 2
    return (x + 1.0) / 2.0, w / 2.0


@dataclass(frozen=True)
class Node:
    id: object
    time_index: int
    parent: int | None
    prob: float
    children: tuple[int, ...]


class EventTree:
    """Rooted tree with transition probabilities on a time grid.

    Nodes are stored in breadth-first order, so ``parent[i] < i`` and levels
    are contiguous. ``ids`` maps internal indices back to user ids.
    """

    def __init__(self, times, parents, probs, ids=None, quad_points: int = DEFAULT_QUAD):
        times = np.asarray(times, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise TreeError("time grid needs at least two points")
        if times[0] != 0.0 or np.any(np.diff(times) <= 0):
            raise TreeError("time grid must start at 0 and increase strictly")
        parents = list(parents)
        probs = np.asarray(probs, dtype=float)
        n = len(parents)
        if probs.size != n:
            raise TreeError("one transition probability per node required")
        ids = list(range(n)) if ids is None else list(ids)
        if len(set(ids)) != n:
            raise TreeError("node ids must be unique")

        roots = [i for i, p in enumerate(parents) if p is None]
        if len(roots) != 1:
            raise TreeError(f"expected exactly one root, found {len(roots)}")
        children = [[] for _ in range(n)]
        for i, p in enumerate(parents):
            if p is not None:
                if not 0 <= p < n:
                    raise TreeError("unknown parent", ids[i])
                children[p].append(i)

        # breadth-first renumbering
        order = []
        level = np.full(n, -1)
        level[roots[0]] = 0
        frontier = [roots[0]]
        while frontier:
            order.extend(frontier)
            nxt = []
            for i in frontier:
                for c in children[i]:
                    level[c] = level[i] + 1
                    nxt.append(c)
            frontier = nxt
        if len(order) != n:
            raise TreeError("tree is not connected or has a cycle")
        M = times.size - 1
        for i in range(n):
            if level[i] > M:
                raise TreeError("node deeper than the time grid", ids[i])
            if not children[i] and level[i] != M:
                raise TreeError("leaf before the terminal time", ids[i])
            if children[i]:
                ps = probs[children[i]]
                if np.any(ps <= 0) or np.any(ps > 1):
                    raise TreeError("transition probabilities must lie in (0, 1]", ids[i])
                if abs(ps.sum() - 1.0) > PROB_TOL:
                    raise TreeError(f"child probabilities sum to {ps.sum():.15g}", ids[i])

        pos = np.empty(n, dtype=int)
        pos[order] = np.arange(n)
        self.times = times
        self.ids = [ids[i] for i in order]
        self.parent = np.array([-1 if parents[i] is None else pos[parents[i]] for i in order])
        self.level = level[order]
        self.trans_prob = np.where(self.parent < 0, 1.0, probs[order])
        self.children = [tuple(sorted(pos[c] for c in children[i])) for i in order]
        self._index = {nid: k for k, nid in enumerate(self.ids)}
        self.quad_nodes, self.quad_weights = radau_rule(quad_points)

    # construction helpers -------------------------------------------------

    @classmethod
    def from_nodes(cls, times, nodes: Sequence[dict], quad_points: int = DEFAULT_QUAD):
        """Build from records ``{"id", "parent", "prob", "time_index"}``."""
        ids = [rec["id"] for rec in nodes]
        index = {nid: i for i, nid in enumerate(ids)}
        parents, probs = [], []
        for rec in nodes:
            p = rec.get("parent")
            if p is not None and p not in index:
                raise TreeError("unknown parent id", rec["id"])
            parents.append(None if p is None else index[p])
            probs.append(1.0 if p is None else rec["prob"])
        tree = cls(times, parents, probs, ids, quad_points)
        for rec in nodes:
            if "time_index" in rec and rec["time_index"] != tree.level[tree.index(rec["id"])]:
                raise TreeError("time_index disagrees with depth in the tree", rec["id"])
        return tree

    @classmethod
    def multinomial(cls, M: int, T: float = 1.0, probs=(0.5, 0.5), times=None,
                    quad_points: int = DEFAULT_QUAD):
        """Non-recombining tree where every node has ``len(probs)`` children."""
        times = np.linspace(0.0, T, M + 1) if times is None else np.asarray(times, float)
        parents, tp = [None], [1.0]
        frontier = [0]
        for _ in range(M):
            nxt = []
            for i in frontier:
                for p in probs:
                    parents.append(i)
                    tp.append(p)
                    nxt.append(len(parents) - 1)
            frontier = nxt
        return cls(times, parents, tp, quad_points=quad_points)

    @classmethod
    def binomial(cls, M: int, T: float = 1.0, p: float = 0.5, **kw):
        return cls.multinomial(M, T, (p, 1.0 - p), **kw)

    @classmethod
    def deterministic(cls, M: int, T: float = 1.0, **kw):
        return cls.multinomial(M, T, (1.0,), **kw)

    # structure ------------------------------------------------------------

    def __len__(self):
        return len(self.ids)

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def M(self) -> int:
        return self.times.size - 1

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def Q(self) -> int:
        return self.quad_nodes.size

    def index(self, node_id) -> int:
        try:
            return self._index[node_id]
        except KeyError:
            raise TreeError("unknown node id", node_id) from None

    def node(self, i: int) -> Node:
        p = int(self.parent[i])
        return Node(self.ids[i], int(self.level[i]), None if p < 0 else p,
                    float(self.trans_prob[i]), self.children[i])

    @cached_property
    def is_leaf(self) -> np.ndarray:
        return self.level == self.M

    @property
    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.is_leaf)

    @property
    def internal(self) -> np.ndarray:
        return np.flatnonzero(~self.is_leaf)

    def nodes_at(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.level == k)

    @cached_property
    def dt(self) -> np.ndarray:
        """Length of each node's interval; zero at leaves."""
        out = np.zeros(self.n)
        inner = ~self.is_leaf
        out[inner] = self.times[self.level[inner] + 1] - self.times[self.level[inner]]
        return out

    @property
    def prob(self) -> np.ndarray:
        """Unconditional node probabilities, recomputed from transitions."""
        out = np.empty(self.n)
        for i in range(self.n):
            p = self.parent[i]
            out[i] = self.trans_prob[i] * (out[p] if p >= 0 else 1.0)
        return out

    def path(self, i: int) -> list[int]:
        """Indices from the root to node ``i``."""
        out = [i]
        while self.parent[out[-1]] >= 0:
            out.append(int(self.parent[out[-1]]))
        return out[::-1]

    # path-process grid ----------------------------------------------------

    def point_times(self) -> np.ndarray:
        t0 = self.times[self.level]
        return t0[:, None] + self.dt[:, None] * self.quad_nodes[None, :]

    def point_weights(self) -> np.ndarray:
        """``P(node) * dt * radau weight``; zero on leaf rows."""
        return (self.prob * self.dt)[:, None] * self.quad_weights[None, :]

    def as_path(self, x) -> np.ndarray:
        """Broadcast a node process (or scalar) to path shape ``(n, Q)``."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 0:
            return np.full((self.n, self.Q), float(x))
        if x.shape == (self.n,):
            return np.repeat(x[:, None], self.Q, axis=1)
        if x.shape == (self.n, self.Q):
            return x
        raise ValueError(f"cannot read shape {x.shape} as a process on {self.n} nodes")

    # expectations ---------------------------------------------------------

    def child_mean(self, X) -> np.ndarray:
        """``sum_children p * X_child`` at every node (zero at leaves)."""
        X = np.asarray(X, dtype=float)
        out = np.zeros_like(X)
        kids = self.parent >= 0
        np.add.at(out, self.parent[kids], self.trans_prob[kids].reshape((-1,) + (1,) * (X.ndim - 1)) * X[kids])
        return out

    def descendant_weights(self, k: int) -> np.ndarray:
        """Matrix ``D[i, j] = P(j | i)`` for ``j`` at level ``k`` (0 if not below ``i``)."""
        cols = self.nodes_at(k)
        D = np.zeros((self.n, cols.size))
        D[cols, np.arange(cols.size)] = 1.0
        for lev in range(k - 1, -1, -1):
            at = self.nodes_at(lev)
            for i in at:
                for c in self.children[i]:
                    D[i] += self.trans_prob[c] * D[c]
        return D


def cond_expectation(tree: EventTree, X, node, k: int):
    """``E[X_{t_k} | F_node]`` for a node process ``X``.

    ``node`` may be an internal index (int) or a user id.
    """
    i = node if isinstance(node, (int, np.integer)) and not isinstance(node, bool) and 0 <= node < tree.n else tree.index(node)
    if not 0 <= k <= tree.M:
        raise ValueError(f"horizon index {k} outside 0..{tree.M}")
    if k < tree.level[i]:
        raise ValueError("horizon index precedes the node's time index")
    X = np.asarray(X, dtype=float)
    frontier = {i: 1.0}
    for _ in range(k - tree.level[i]):
        nxt = {}
        for j, w in frontier.items():
            for c in tree.children[j]:
                nxt[c] = w * tree.trans_prob[c]
        frontier = nxt
    return sum(w * X[j] for j, w in frontier.items())


def time_integral_expectation(tree: EventTree, X) -> float:
    """``E[int_0^T X_t dt]`` for a node or path process."""
    if tree.M < 1:
        raise ValueError("need at least one period")
    return float(np.sum(tree.point_weights() * tree.as_path(X)))


def martingale_residual(tree: EventTree, X) -> np.ndarray:
    """``X_node - sum_children p X_child`` on internal nodes (zero on leaves)."""
    X = np.asarray(X, dtype=float)
    res = X - tree.child_mean(X)
    res[tree.is_leaf] = 0.0
    return res


def is_martingale(tree: EventTree, X, tol: float = 1e-9) -> bool:
    return bool(np.all(np.abs(martingale_residual(tree, X)) <= tol))


def leaf_path_integral(tree: EventTree, X) -> np.ndarray:
    """``int_0^T X_t dt`` along the path to each leaf, in ``tree.leaves`` order."""
    X = tree.as_path(X)
    seg = tree.dt * (X @ tree.quad_weights)
    acc = np.zeros(tree.n)
    for i in range(1, tree.n):
        p = tree.parent[i]
        acc[i] = acc[p] + seg[p]
    return acc[tree.leaves]
