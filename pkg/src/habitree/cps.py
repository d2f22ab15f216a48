"""Consistent price systems on a tree.

A price system is a node process ``Z`` with values in ``R_+^{1+d}``, every
component a martingale, ``Z_node`` in the polar of the node's solvency cone
and ``Z0_root = 1``. Martingales on a tree are determined by their leaf
values, so the LPs here use the leaf values as variables and read node
values as conditional averages. Strictness is an ``eps`` margin on every
cone generator outside the lineality space together with the density floor
``Z0_leaf >= eps``.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .linprog import Status, WarmLp
from .tree import EventTree, martingale_residual


class CpsInfeasible(RuntimeError):
    """The eps-strict price-system polytope is empty."""


class CpsSolveError(RuntimeError):
    """The LP over the polytope did not finish cleanly."""


@dataclass
class PriceSystem:
    Z: np.ndarray  # (n, 1+d)
    eps: float = 0.0

    @property
    def Z0(self) -> np.ndarray:
        return self.Z[:, 0]

    @property
    def strict(self) -> bool:
        return self.eps > 0

    def shadow_prices(self) -> np.ndarray:
        return self.Z[:, 1:] / self.Z[:, :1]


class Polytope:
    """LP data of the eps-strict price systems of a scenario."""

    def __init__(self, scenario, eps: float):
        if eps < 0:
            raise ValueError("eps must be nonnegative")
        tree = scenario.tree
        self.tree = tree
        self.eps = eps
        self.D = tree.descendant_weights(tree.M)  # (n, L)
        L = self.D.shape[1]
        dim = 1 + scenario.d
        self.dim = dim
        rows = []
        for i in range(tree.n):
            K = scenario.cones[i]
            R = K.margin_matrix(eps)
            if not tree.is_leaf[i]:
                # unit-vector rows are identical at every node and averaged down from the leaves
                R = R[dim:]
            elif eps == 0:
                R = R[dim:]
            for r in R:
                rows.append(np.kron(self.D[i], r))
        rhs = [0.0] * len(rows)
        if eps > 0:
            # the margin rows are homogeneous and admit Z_leaf = 0; a density
            # floor keeps every leaf charged (Z0_root = 1 fixes the scale)
            for k in range(L):
                r = np.zeros(L * dim)
                r[k * dim] = 1.0
                rows.append(r)
                rhs.append(eps)
        self.A = np.array(rows).reshape(-1, L * dim)
        self.b = np.array(rhs)
        norm = np.zeros(L * dim)
        norm[0::dim] = self.D[0]
        self.norm_row = norm
        self._lp = None  # built on first solve, then warm started

    def solve(self, leaf_obj: np.ndarray, maximize: bool):
        if self._lp is None:
            A = np.vstack([self.A, self.norm_row[None, :]])
            senses = [">="] * self.A.shape[0] + ["="]
            self._lp = WarmLp(A, senses, np.append(self.b, 1.0))
        return self._lp.solve(leaf_obj, maximize)

    def node_values(self, y) -> np.ndarray:
        return self.D @ np.asarray(y).reshape(-1, self.dim)


def optimize_over_cps(scenario, coef, eps: float | None = None, maximize: bool = True,
                      polytope: Polytope | None = None):
    """Optimize ``sum_n <coef_n, Z_n>`` over eps-strict price systems.

    ``coef`` is an ``(n, 1+d)`` array of raw node coefficients; to express an
    expectation, multiply by node probabilities first. Returns
    ``(value, PriceSystem)``.
    """
    eps = scenario.eps if eps is None else eps
    P = polytope if polytope is not None and polytope.eps == eps else Polytope(scenario, eps)
    coef = np.asarray(coef, dtype=float).reshape(scenario.tree.n, P.dim)
    res = P.solve(P.D.T @ coef, maximize)
    if res.status is Status.INFEASIBLE:
        raise CpsInfeasible(f"no {eps:g}-strict consistent price system exists")
    if not res.ok:
        raise CpsSolveError(f"price-system LP ended with status {res.status.value}")
    Z = P.node_values(res.x)
    return float(np.sum(coef * Z)), PriceSystem(Z, eps)


def find_scps(scenario, eps: float | None = None) -> PriceSystem | None:
    """Some eps-strict price system, or ``None`` when none exists."""
    eps = scenario.eps if eps is None else eps
    if eps <= 0:
        raise ValueError("strictness margin must be positive")
    try:
        _, ps = optimize_over_cps(scenario, np.zeros((scenario.tree.n, 1 + scenario.d)), eps)
    except CpsInfeasible:
        return None
    return ps


def sample_price_systems(scenario, k: int = 16, eps: float | None = None, seed: int = 0,
                         polytope: Polytope | None = None) -> list[PriceSystem]:
    """Vertices of the polytope reached from ``k`` random linear objectives."""
    eps = scenario.eps if eps is None else eps
    rng = np.random.default_rng(seed)
    P = polytope if polytope is not None and polytope.eps == eps else Polytope(scenario, eps)
    out, seen = [], []
    for _ in range(k):
        coef = rng.standard_normal((scenario.tree.n, 1 + scenario.d))
        _, ps = optimize_over_cps(scenario, coef, eps, polytope=P)
        if not any(np.allclose(ps.Z, z, atol=1e-12, rtol=0) for z in seen):
            seen.append(ps.Z)
            out.append(ps)
    return out


@dataclass
class PriceSystemReport:
    martingale_residual: float
    min_margin: float
    min_z0: float
    normalization_error: float
    failing_nodes: list = field(default_factory=list)
    martingale_ok: bool = False
    polar_ok: bool = False
    positive_ok: bool = False
    normalized_ok: bool = False

    @property
    def ok(self) -> bool:
        return self.martingale_ok and self.polar_ok and self.positive_ok and self.normalized_ok


def verify_price_system(Z, scenario, eps: float = 0.0, tol: float = 1e-9) -> PriceSystemReport:
    """Check martingale, polar (with margin ``eps``), positivity and ``Z0_root = 1``."""
    Z = Z.Z if isinstance(Z, PriceSystem) else np.asarray(Z, dtype=float)
    tree = scenario.tree
    mres = float(np.abs(martingale_residual(tree, Z)).max())
    margins = np.empty(tree.n)
    bad = []
    for i in range(tree.n):
        K = scenario.cones[i]
        g = K.generators @ Z[i]
        scale = K.norms * np.linalg.norm(Z[i])
        lin = K.lineality
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = np.where(scale > 0, g / scale, -np.inf)
        need = np.where(lin, 0.0, eps)
        slack = np.where(lin, g / np.maximum(scale, 1e-300), rel) - need
        margins[i] = rel[~lin].min() if (~lin).any() else 0.0
        if slack.min() < -tol:
            bad.append(tree.ids[i])
    min_z0 = float(Z[:, 0].min())
    nerr = abs(float(Z[0, 0]) - 1.0)
    return PriceSystemReport(
        mres, float(margins.min()), min_z0, nerr, bad,
        martingale_ok=mres <= tol, polar_ok=not bad, positive_ok=min_z0 > 0,
        normalized_ok=nerr <= tol,
    )


def to_measure_shadow_pair(tree: EventTree, Z):
    """``(Q, S~)``: leaf masses ``Z0_leaf P(leaf)`` and shadow prices ``Z^i / Z0``."""
    Z = Z.Z if isinstance(Z, PriceSystem) else np.asarray(Z, dtype=float)
    if np.any(Z[:, 0] <= 0):
        raise ValueError("Z0 must be strictly positive to define a measure")
    leaves = tree.leaves
    Q = Z[leaves, 0] * tree.prob[leaves]
    return Q, Z[:, 1:] / Z[:, :1]


def from_measure_shadow_pair(tree: EventTree, Q, S_tilde, eps: float = 0.0) -> PriceSystem:
    """Inverse of :func:`to_measure_shadow_pair`."""
    leaves = tree.leaves
    z_leaf = np.asarray(Q, dtype=float) / tree.prob[leaves]
    Z0 = tree.descendant_weights(tree.M) @ z_leaf
    S = np.asarray(S_tilde, dtype=float).reshape(tree.n, -1)
    return PriceSystem(np.column_stack([Z0, Z0[:, None] * S]), eps)


def measure_transitions(tree: EventTree, Q) -> np.ndarray:
    """Transition probabilities of the leaf measure ``Q`` (root entry 1)."""
    mass = tree.descendant_weights(tree.M) @ (np.asarray(Q) / tree.prob[tree.leaves]) * tree.prob
    out = np.ones(tree.n)
    kids = tree.parent >= 0
    out[kids] = mass[kids] / mass[tree.parent[kids]]
    return out


@dataclass
class EpsLadder:
    eps: list
    values: list
    monotone: bool
    final: float


def eps_ladder(fn, ladder=(1e-3, 1e-4, 1e-5), direction: str = "up", tol: float = 1e-10) -> EpsLadder:
    """Evaluate ``fn(eps)`` along a shrinking ladder and report the trend.

    ``direction="up"`` expects values to grow as ``eps`` shrinks (suprema),
    ``"down"`` the opposite (infima).
    """
    vals = [float(fn(e)) for e in ladder]
    diffs = np.diff(vals)
    mono = bool(np.all(diffs >= -tol)) if direction == "up" else bool(np.all(diffs <= tol))
    return EpsLadder(list(ladder), vals, mono, vals[-1])


def export_csv(tree: EventTree, ps: PriceSystem, fh=None) -> str:
    """CSV with columns ``node_id, t, Z0..Zd``; returns the text and writes to ``fh``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["node_id", "t"] + [f"Z{j}" for j in range(ps.Z.shape[1])])
    for i in range(tree.n):
        w.writerow([tree.ids[i], repr(float(tree.times[tree.level[i]]))] + [repr(float(v)) for v in ps.Z[i]])
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text
