"""Superhedging, budget checks and portfolio tests on the tree.

Portfolios are node arrays ``V`` of shape ``(n, 1+d)`` in physical units.
``V[i]`` is the position held after trading at node ``i``; the trade into
it is priced with node ``i``'s solvency cone, so ``V[i] - V[parent]`` must
lie in ``-K_i``. A claim ``g`` is a ``(L, 1+d)`` array over the leaves (in
``tree.leaves`` order) and is covered when ``V_leaf - g_leaf`` lies in
``K_leaf``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cones import cone_contains
from .cps import (Polytope, PriceSystem, optimize_over_cps, sample_price_systems,
                  to_measure_shadow_pair)
from .linprog import LpProblem, solve_lp
from .tree import EventTree


@dataclass
class PortfolioProcess:
    V: np.ndarray  # (n, 1+d)
    V0: np.ndarray | None = None  # position before the first trade

    def __post_init__(self):
        self.V = np.asarray(self.V, dtype=float)
        if self.V.ndim != 2 or not np.all(np.isfinite(self.V)):
            raise ValueError("portfolio must be a finite (n, 1+d) array")
        if self.V0 is not None:
            self.V0 = np.asarray(self.V0, dtype=float).ravel()


@dataclass
class SelfFinancingReport:
    ok: bool
    violating_nodes: list = field(default_factory=list)


def _as_portfolio(V) -> PortfolioProcess:
    return V if isinstance(V, PortfolioProcess) else PortfolioProcess(V)


def self_financing_check(V, scenario, tol: float = 1e-9, terminal=None) -> SelfFinancingReport:
    """Every rebalancing ``V[i] - V[parent]`` (and ``V_root - V0`` when ``V0``
    is set) must lie in ``-K_i``. With ``terminal`` given as a leaf array,
    the liquidation ``terminal - V_leaf`` is checked against ``-K_leaf`` too."""
    P = _as_portfolio(V)
    tree = scenario.tree
    bad = []
    for i in range(tree.n):
        if tree.parent[i] >= 0:
            prev = P.V[tree.parent[i]]
        elif P.V0 is not None:
            prev = P.V0
        else:
            continue
        if not cone_contains(scenario.cones[i], prev - P.V[i], tol):
            bad.append(tree.ids[i])
    if terminal is not None:
        terminal = np.asarray(terminal, dtype=float)
        for k, leaf in enumerate(tree.leaves):
            if not cone_contains(scenario.cones[leaf], P.V[leaf] - terminal[k], tol):
                bad.append(tree.ids[leaf])
    return SelfFinancingReport(not bad, bad)


def _leaf_coef(scenario, g) -> np.ndarray:
    tree = scenario.tree
    g = np.asarray(g, dtype=float).reshape(len(tree.leaves), 1 + scenario.d)
    coef = np.zeros((tree.n, 1 + scenario.d))
    coef[tree.leaves] = tree.prob[tree.leaves, None] * g
    return coef


def cash_claim(scenario, amount) -> np.ndarray:
    """Leaf claim paying ``amount`` (scalar or per leaf) in cash."""
    L = len(scenario.tree.leaves)
    g = np.zeros((L, 1 + scenario.d))
    g[:, 0] = amount
    return g


def share_claim(scenario, i: int = 1, units: float = 1.0) -> np.ndarray:
    """Leaf claim delivering ``units`` of asset ``i`` (physical)."""
    L = len(scenario.tree.leaves)
    g = np.zeros((L, 1 + scenario.d))
    g[:, i] = units
    return g


def call_claim(scenario, strike: float, i: int = 1) -> np.ndarray:
    """Cash-settled call on asset ``i`` at the leaf prices."""
    S = scenario.prices[scenario.tree.leaves, i - 1]
    return cash_claim(scenario, np.maximum(S - strike, 0.0))


def superhedge_price(scenario, g, eps: float | None = None, include_endowment: bool = False,
                     polytope: Polytope | None = None):
    """``sup E<g, Z_T>`` over the eps-strict price systems, with its certificate.

    With ``include_endowment`` the value ``E[q.E_T Z0_T]`` is subtracted, which
    gives the smallest initial cash that finances ``g`` given the endowment.
    """
    coef = _leaf_coef(scenario, g)
    if include_endowment and scenario.N:
        tree = scenario.tree
        coef[tree.leaves, 0] -= tree.prob[tree.leaves] * scenario.endowment()
    val, ps = optimize_over_cps(scenario, coef, eps, maximize=True, polytope=polytope)
    # the constant cash part k is worth k Z0_root = k; pricing it through the
    # root keeps cash claims exact instead of summing rounded leaf values
    tree = scenario.tree
    k = float(np.min(coef[tree.leaves, 0] / tree.prob[tree.leaves]))
    rest = coef.copy()
    rest[tree.leaves, 0] -= k * tree.prob[tree.leaves]
    return k + float(np.sum(rest * ps.Z)), ps


@dataclass
class HedgeResult:
    cost: float
    portfolio: PortfolioProcess | None
    status: str


def hedge_cost(scenario, g, x: float | None = None) -> HedgeResult:
    """Cheapest initial cash, or feasibility at cash ``x``, of a self-financing
    ``V`` with ``V_leaf - g_leaf`` in ``K_leaf``. Solved directly over
    portfolios and cone multipliers, independently of the price systems."""
    tree = scenario.tree
    D = 1 + scenario.d
    gens = [K.generators for K in scenario.cones]
    g = np.asarray(g, dtype=float).reshape(len(tree.leaves), D)
    # variables: x | V (n*D, free) | mu per node trade | mu per leaf liquidation
    nv = 1 + tree.n * D
    offs = []
    k = nv
    for i in range(tree.n):
        offs.append(k)
        k += gens[i].shape[0]
    leaf_offs = []
    for leaf in tree.leaves:
        leaf_offs.append(k)
        k += gens[leaf].shape[0]
    nvar = k
    rows, rhs = [], []

    def vcol(i):
        return 1 + i * D

    for i in range(tree.n):
        Gi = gens[i]
        for a in range(D):
            r = np.zeros(nvar)
            # prev - V_i = sum mu g  (prev = parent position, or (x, 0) at the root)
            if tree.parent[i] >= 0:
                r[vcol(tree.parent[i]) + a] = 1.0
            elif a == 0:
                r[0] = 1.0
            r[vcol(i) + a] -= 1.0
            r[offs[i]:offs[i] + Gi.shape[0]] = -Gi[:, a]
            rows.append(r)
            rhs.append(0.0)
    for kk, leaf in enumerate(tree.leaves):
        Gl = gens[leaf]
        for a in range(D):
            r = np.zeros(nvar)
            r[vcol(leaf) + a] = 1.0
            r[leaf_offs[kk]:leaf_offs[kk] + Gl.shape[0]] = -Gl[:, a]
            rows.append(r)
            rhs.append(g[kk, a])
    lower = np.zeros(nvar)
    upper = np.full(nvar, np.inf)
    lower[:nv] = -np.inf
    if x is not None:
        lower[0] = upper[0] = x
    c = np.zeros(nvar)
    c[0] = 1.0
    res = solve_lp(LpProblem(c, np.array(rows), ["="] * len(rows), np.array(rhs), lower, upper))
    if not res.ok:
        return HedgeResult(np.inf if x is None else float(x), None, res.status.value)
    V = res.x[1:nv].reshape(tree.n, D)
    V0 = np.zeros(D)
    V0[0] = res.x[0]
    return HedgeResult(float(res.x[0]), PortfolioProcess(V, V0), "optimal")


@dataclass
class BudgetReport:
    feasible: bool
    value: float  # sup E[int c Z0 dt] - E[q.E_T Z0_T]
    slack: float  # x - value
    certificate: PriceSystem


def budget_feasible(c, scenario, eps: float | None = None, tol: float = 1e-9,
                    polytope: Polytope | None = None) -> BudgetReport:
    """Robust budget inequality for a consumption plan (node or path process)."""
    tree = scenario.tree
    c = tree.as_path(c)
    if np.any(c < -1e-12):
        raise ValueError("consumption must be nonnegative")
    coef = np.zeros((tree.n, 1 + scenario.d))
    coef[:, 0] = (tree.point_weights() * c).sum(axis=1)
    if scenario.N:
        coef[tree.leaves, 0] -= tree.prob[tree.leaves] * scenario.endowment()
    val, ps = optimize_over_cps(scenario, coef, eps, maximize=True, polytope=polytope)
    slack = scenario.x - val
    return BudgetReport(bool(slack >= -tol * (1.0 + abs(scenario.x))), float(val), float(slack), ps)


def maximal_dominating_wealth(tree: EventTree, S_tilde, Q, h) -> np.ndarray:
    """Minimal superhedge of the leaf claim ``h`` in the frictionless market
    with prices ``S_tilde``; ``Q`` (leaf masses) is only used to check that it
    is a martingale measure for ``S_tilde``."""
    S = np.asarray(S_tilde, dtype=float).reshape(tree.n, -1)
    d = S.shape[1]
    h = np.asarray(h, dtype=float)
    Qv = np.asarray(Q, dtype=float)
    if Qv.shape != (len(tree.leaves),) or np.any(Qv <= 0) or abs(Qv.sum() - 1.0) > 1e-9:
        raise ValueError("Q must be a strictly positive probability on the leaves")
    X = np.zeros(tree.n)
    X[tree.leaves] = h
    for k in range(tree.M - 1, -1, -1):
        for i in tree.nodes_at(k):
            kids = tree.children[i]
            # min v  s.t.  v + theta . (S_c - S_i) >= X_c for each child
            A = np.array([[1.0] + list(S[c] - S[i]) for c in kids])
            b = np.array([X[c] for c in kids])
            lower = np.full(1 + d, -np.inf)
            res = solve_lp(LpProblem(np.eye(1 + d)[0], A, [">="] * len(kids), b, lower))
            if not res.ok:
                raise ValueError(f"no finite superhedge at node {tree.ids[i]!r} ({res.status.value})")
            X[i] = res.x[0]
    return X


@dataclass
class PairResult:
    index: int
    ok: bool
    X0: float
    min_pairing: float
    terminal_ok: bool
    failing_nodes: list


@dataclass
class AcceptabilityReport:
    floor_test: bool | None
    pairs: list
    sample_size: int

    @property
    def ok(self) -> bool:
        if self.floor_test:
            return True
        return bool(self.pairs) and all(p.ok for p in self.pairs)


def floor_test(V, scenario, a: float, k: float = 0.0, tol: float = 1e-9) -> bool:
    """Sufficient test with the floor ``B = a + (1 - lam) k sum(S - S_0)``:
    ``V + (B, 0)`` solvent at every node and ``a > (1 - lam) k sum S_0``."""
    lam = scenario.flat_lambda()
    if lam is None:
        raise ValueError("the floor test needs a flat transaction cost")
    P = _as_portfolio(V)
    S = scenario.prices
    if not a > (1.0 - lam) * k * S[0].sum():
        return False
    B = a + (1.0 - lam) * k * (S - S[0]).sum(axis=1)
    for i in range(scenario.tree.n):
        w = P.V[i].copy()
        w[0] += B[i]
        if not cone_contains(scenario.cones[i], w, tol):
            return False
    return True


def acceptability_check(V, scenario, eps: float | None = None, a: float = 0.0,
                        floor_k: float | None = None, samples: int = 16, seed: int = 0,
                        price_systems=None, tol: float = 1e-9) -> AcceptabilityReport:
    """Desk-scale acceptability certificate.

    For each sampled price system ``Z`` (or the supplied ``price_systems``)
    with pair ``(Q, S~)``, ``X`` is the minimal superhedge of
    ``a + sum_i E^i_T`` in the ``S~`` market. The pair passes when
    ``V_leaf + (X_leaf, 0)`` is solvent and ``<V + (X, 0), Z> >= 0`` at every
    node. With ``floor_k`` set, the floor test with constant ``a`` runs first
    and short-circuits on success.
    """
    tree = scenario.tree
    ft = None
    if floor_k is not None:
        ft = floor_test(V, scenario, a, floor_k, tol)
        if ft:
            return AcceptabilityReport(True, [], 0)
    P = _as_portfolio(V)
    if price_systems is None:
        price_systems = sample_price_systems(scenario, samples, eps, seed)
    h = a + (scenario.payoffs.sum(axis=1) if scenario.N else np.zeros(len(tree.leaves)))
    pairs = []
    for idx, ps in enumerate(price_systems):
        Z = ps.Z if isinstance(ps, PriceSystem) else np.asarray(ps, dtype=float)
        Q, St = to_measure_shadow_pair(tree, Z)
        X = maximal_dominating_wealth(tree, St, Q, h)
        W = P.V.copy()
        W[:, 0] += X
        pairing = np.einsum("ij,ij->i", W, Z)
        scale = 1.0 + np.abs(W).sum(axis=1) * np.abs(Z).sum(axis=1)
        bad = [tree.ids[i] for i in np.flatnonzero(pairing < -tol * scale)]
        term = all(cone_contains(scenario.cones[l], W[l], tol) for l in tree.leaves)
        pairs.append(PairResult(idx, not bad and term, float(X[0]), float(pairing.min()), term, bad))
    return AcceptabilityReport(ft, pairs, len(pairs))
