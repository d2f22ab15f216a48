"""Habit formation on a tree.

Rates ``alpha`` and ``delta`` are node processes (constant over each node's
interval). Consumption and habit are path processes sampled at the Radau
points of each interval; inside an interval consumption is read as the
polynomial through its samples, and the habit ODE

    dF = (delta c - alpha F) dt

is integrated exactly for that polynomial. For a constant ``c`` on the
interval this is the familiar one-step update
``F' = e^{-a} F + delta c (1 - e^{-a}) / alpha`` with ``a = alpha * dt``.

``recover`` inverts ``reduce`` through the same kernel, so the two are exact
inverses up to rounding.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .tree import EventTree, radau_rule

NEG_TOL = 1e-12


class HabitError(ValueError):
    pass


@dataclass(frozen=True)
class HabitParams:
    """Node arrays ``alpha``, ``delta`` (>= 0) and initial habit ``z`` (>= 0)."""

    alpha: np.ndarray
    delta: np.ndarray
    z: float = 0.0

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=float)
        d = np.asarray(self.delta, dtype=float)
        if a.shape != d.shape or a.ndim != 1:
            raise HabitError("alpha and delta must be node arrays of equal length")
        if np.any(~np.isfinite(a)) or np.any(~np.isfinite(d)) or np.any(a < 0) or np.any(d < 0):
            raise HabitError("alpha and delta must be finite and nonnegative")
        if not (np.isfinite(self.z) and self.z >= 0):
            raise HabitError("initial habit z must be finite and nonnegative")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "delta", d)

    @property
    def rho(self) -> np.ndarray:
        return self.delta - self.alpha

    @classmethod
    def constant(cls, tree: EventTree, alpha=0.0, delta=0.0, z=0.0) -> "HabitParams":
        return cls(per_node(tree, alpha), per_node(tree, delta), float(z))


def per_node(tree: EventTree, spec) -> np.ndarray:
    """Expand a scalar, a per-interval sequence (length ``M``) or a per-node
    array into a node array. Leaf entries are set to zero (they never enter
    an integral)."""
    v = np.asarray(spec, dtype=float)
    if v.ndim == 0:
        out = np.full(tree.n, float(v))
    elif v.shape == (tree.M,):
        out = v[np.minimum(tree.level, tree.M - 1)]
    elif v.shape == (tree.n,):
        out = v.copy()
    else:
        raise HabitError(f"rate of shape {v.shape} is neither scalar, per-interval ({tree.M}) nor per-node ({tree.n})")
    out[tree.is_leaf] = 0.0
    return out


# kernels ------------------------------------------------------------------

def _bary_weights(x):
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    return 1.0 / diff.prod(axis=1)


def _lagrange(x, w, s):
    """Matrix ``L[k, i] = l_i(s_k)`` of Lagrange basis values."""
    d = s[:, None] - x[None, :]
    hit = np.isclose(d, 0.0, atol=1e-15)
    d[hit] = 1.0
    t = w[None, :] / d
    L = t / t.sum(axis=1, keepdims=True)
    rows = hit.any(axis=1)
    L[rows] = hit[rows].astype(float)
    return L


@lru_cache(maxsize=4096)
def _kernel(Q: int, a: float):
    """``(M, m_end)`` for decay ``a = alpha * dt`` on the unit interval.

    ``M[q, i] = int_0^{tau_q} exp(-a (tau_q - s)) l_i(s) ds`` and ``m_end`` is
    the same integral up to 1.
    """
    tau, _ = radau_rule(Q)
    bw = _bary_weights(tau)
    gx, gw = np.polynomial.legendre.leggauss(max(2 * Q + 10, 30))
    gx = (gx + 1.0) / 2.0
    gw = gw / 2.0
    ends = np.concatenate([tau, [1.0]])
    out = np.zeros((Q + 1, Q))
    for r, e in enumerate(ends):
        if e == 0.0:
            continue
        s = e * gx
        out[r] = (e * gw * np.exp(-a * (e - s))) @ _lagrange(tau, bw, s)
    M, m_end = out[:Q], out[Q]
    M.flags.writeable = False
    m_end.flags.writeable = False
    return M, m_end


@lru_cache(maxsize=4096)
def _recover_lu(Q: int, a: float, b: float):
    M, _ = _kernel(Q, a)
    return np.linalg.inv(np.eye(Q) - b * M)


# habit maps ---------------------------------------------------------------

def habit_process(tree: EventTree, c, h: HabitParams) -> np.ndarray:
    """``F(c)`` as a path process ``(n, Q)``; column 0 is the value at each
    node time, leaf rows hold ``F_T``."""
    c = tree.as_path(c)
    if np.any(c < 0):
        raise HabitError("consumption must be nonnegative")
    tau = tree.quad_nodes
    F = np.zeros((tree.n, tree.Q))
    start = np.zeros(tree.n)
    start[0] = h.z
    for i in range(tree.n):
        if tree.is_leaf[i]:
            F[i] = start[i]
            continue
        a = float(h.alpha[i] * tree.dt[i])
        b = float(h.delta[i] * tree.dt[i])
        M, m_end = _kernel(tree.Q, a)
        F[i] = np.exp(-a * tau) * start[i] + b * (M @ c[i])
        nxt = np.exp(-a) * start[i] + b * (m_end @ c[i])
        for ch in tree.children[i]:
            start[ch] = nxt
    return F


@dataclass
class Reduction:
    c_tilde: np.ndarray
    violations: list
    min_value: float

    @property
    def feasible(self) -> bool:
        return not self.violations


def reduce(tree: EventTree, c, h: HabitParams) -> Reduction:
    """``c~ = c - F(c)``; nodes where ``c~ < -1e-12`` are reported, not raised."""
    c = tree.as_path(c)
    ct = c - habit_process(tree, c, h)
    bad = np.flatnonzero((ct < -NEG_TOL).any(axis=1))
    return Reduction(ct, [tree.ids[i] for i in bad], float(ct.min()))


def recover(tree: EventTree, c_tilde, h: HabitParams) -> np.ndarray:
    """Consumption whose reduction is ``c_tilde`` (path process in, path out)."""
    ct = tree.as_path(c_tilde)
    if np.any(ct < -NEG_TOL):
        raise HabitError("auxiliary consumption must be nonnegative")
    tau = tree.quad_nodes
    c = np.zeros((tree.n, tree.Q))
    start = np.zeros(tree.n)
    start[0] = h.z
    for i in range(tree.n):
        if tree.is_leaf[i]:
            c[i] = ct[i] + start[i]
            continue
        a = float(h.alpha[i] * tree.dt[i])
        b = float(h.delta[i] * tree.dt[i])
        _, m_end = _kernel(tree.Q, a)
        c[i] = _recover_lu(tree.Q, a, b) @ (ct[i] + np.exp(-a * tau) * start[i])
        nxt = np.exp(-a) * start[i] + b * (m_end @ c[i])
        for ch in tree.children[i]:
            start[ch] = nxt
    return c


# weights ------------------------------------------------------------------

def _cumulative(tree: EventTree, rate) -> np.ndarray:
    """``int_0^t rate`` at every path point."""
    start = np.zeros(tree.n)
    for i in range(1, tree.n):
        p = tree.parent[i]
        start[i] = start[p] + rate[p] * tree.dt[p]
    return start[:, None] + (rate * tree.dt)[:, None] * tree.quad_nodes[None, :]


def growth_weight(tree: EventTree, h: HabitParams) -> np.ndarray:
    """``w_t = exp(int_0^t (delta - alpha))`` as a path process."""
    return np.exp(_cumulative(tree, h.rho))


def decay_weight(tree: EventTree, h: HabitParams) -> np.ndarray:
    """``w~_t = exp(-int_0^t alpha)`` as a path process."""
    return np.exp(-_cumulative(tree, h.alpha))


def subsistence_path(tree: EventTree, h: HabitParams) -> np.ndarray:
    """The plan that equals its own habit: ``z * w``."""
    return h.z * growth_weight(tree, h)


def growth_coefficients(tree: EventTree, h: HabitParams) -> np.ndarray:
    """Node coefficients ``k`` with ``E[int w Z0 dt] = k @ Z0`` for node-valued ``Z0``."""
    return (tree.point_weights() * growth_weight(tree, h)).sum(axis=1)


# dual process -------------------------------------------------------------

def _segment(tree: EventTree, h: HabitParams, tau):
    """``L(tau) = int_{tau}^{1} e^{rho dt (s - tau)} dt ds`` and ``E(tau) = e^{rho dt (1 - tau)}``."""
    rho = h.rho[:, None]
    dt = tree.dt[:, None]
    u = dt * (1.0 - np.asarray(tau))[None, :]
    E = np.exp(rho * u)
    with np.errstate(divide="ignore", invalid="ignore"):
        L = np.where(rho == 0.0, u, np.expm1(rho * u) / np.where(rho == 0.0, 1.0, rho))
    return L, E


def gamma_process(tree: EventTree, Z0, h: HabitParams) -> np.ndarray:
    """``Gamma_t = Z0_t + delta_t E[int_t^T e^{int_t^s (delta - alpha)} Z0_s ds | F_t]``.

    ``Z0`` is a node process (one value per node, or ``(n, m)`` for ``m``
    processes at once); the result is a path process ``(n, Q)`` (or
    ``(n, Q, m)``). Leaf rows equal ``Z0`` at the leaves.
    """
    Z = np.asarray(Z0, dtype=float)
    vec = Z.ndim == 1
    if vec:
        Z = Z[:, None]
    L, E = _segment(tree, h, tree.quad_nodes)
    L0, E0 = L[:, 0], E[:, 0]
    n, m = Z.shape
    H = np.zeros((n, m))
    J = np.zeros((n, m))  # value at the node's own start time of the forward integral
    for k in range(tree.M - 1, -1, -1):
        at = tree.nodes_at(k)
        H[at] = tree.child_mean(J)[at]
        J[at] = Z[at] * L0[at, None] + E0[at, None] * H[at]
    G = Z[:, None, :] + h.delta[:, None, None] * (Z[:, None, :] * L[:, :, None] + E[:, :, None] * H[:, None, :])
    G[tree.is_leaf] = Z[tree.is_leaf][:, None, :]
    return G[:, :, 0] if vec else G


def gamma_operator(tree: EventTree, h: HabitParams) -> np.ndarray:
    """Matrix ``A`` with ``gamma_process(Z0).ravel() == A @ Z0``."""
    G = gamma_process(tree, np.eye(tree.n), h)
    return G.reshape(tree.n * tree.Q, tree.n)


def numeraire_path(tree: EventTree, h: HabitParams) -> np.ndarray:
    """``G_t = 1 + delta_t int_t^T e^{int_t^s (delta - alpha)} ds``; ``G_T = 1``."""
    return gamma_process(tree, np.ones(tree.n), h)


def deterministic_growth(tree: EventTree, h: HabitParams, tol: float = 1e-12) -> bool:
    """Is ``delta - alpha`` a function of time only?"""
    rho = h.rho
    return all(np.ptp(rho[tree.nodes_at(k)]) <= tol for k in range(tree.M))


# effective domain ---------------------------------------------------------

@dataclass
class DomainReport:
    status: str  # interior | boundary | outside
    value: float
    certificate: object  # PriceSystem attaining the minimum

    @property
    def interior(self) -> bool:
        return self.status == "interior"


def effective_domain_check(scenario, eps: float | None = None, tol: float = 1e-9) -> DomainReport:
    """Minimize ``x + E[q.E_T Z0_T] - z E[int w Z0 dt]`` over the eps-strict
    price systems and classify the sign."""
    from .cps import optimize_over_cps

    tree, h = scenario.tree, scenario.habit
    eps = scenario.eps if eps is None else eps
    coef = np.zeros((tree.n, 1 + scenario.d))
    coef[:, 0] = -h.z * growth_coefficients(tree, h)
    coef[tree.leaves, 0] += tree.prob[tree.leaves] * scenario.endowment()
    val, Z = optimize_over_cps(scenario, coef, eps, maximize=False)
    val += scenario.x
    if val > tol:
        status = "interior"
    elif val >= -tol:
        status = "boundary"
    else:
        status = "outside"
    return DomainReport(status, float(val), Z)
