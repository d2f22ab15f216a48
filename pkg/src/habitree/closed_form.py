"""Log-utility closed forms and the change-of-numeraire reduction.

With constant ``delta``, ``alpha`` and a strictly positive martingale ``Y``
the dual process factors as ``Gamma = y Y G`` where ``G`` is the
deterministic numeraire ``G_t = 1 + delta int_t^T e^{(delta-alpha)(s-t)} ds``.
Log utility then gives ``c~_t = 1 / (y Y_t G_t)`` and the consumption plan
follows from the habit recovery formula, whose path integral has a closed
antiderivative because ``Y`` is piecewise constant on the tree.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import habit as hb
from .habit import HabitParams
from .tree import EventTree, is_martingale, leaf_path_integral, martingale_residual

BRANCH_TOL = 1e-12


class IsomorphismError(ValueError):
    """``delta - alpha`` is not a deterministic function of time."""


def initial_consumption(delta: float, alpha: float, z: float, T: float) -> float:
    """Optimal time-0 consumption under log utility with ``Y_0 = 1``, ``y = 1``."""
    rho = delta - alpha
    if abs(rho) <= BRANCH_TOL:
        return z + 1.0 / (1.0 + delta * T)
    return z + rho / (delta * np.exp(rho * T) - alpha)


def numeraire(delta: float, alpha: float, T: float, t):
    """``G_t`` for constant rates."""
    rho = delta - alpha
    u = T - np.asarray(t, dtype=float)
    if abs(rho) <= BRANCH_TOL:
        return 1.0 + delta * u
    return 1.0 + delta * np.expm1(rho * u) / rho


def _antiderivative(delta, alpha, T, s):
    """``A`` with ``A'(s) = delta e^{-rho s} / G_s`` (the factor delta keeps tiny rates finite)."""
    rho = delta - alpha
    u = T - np.asarray(s, dtype=float)
    if abs(rho) <= BRANCH_TOL:
        return -np.log1p(delta * u)
    return -np.log(np.abs(delta * np.exp(rho * u) - alpha)) / np.exp(rho * T)


@dataclass
class LogPolicyInputs:
    tree: EventTree
    delta: float
    alpha: float
    z: float
    Y: np.ndarray  # node martingale, Y_root = 1
    y: float = 1.0
    r: np.ndarray | None = None  # (r0, r_1..r_N)
    x: float | None = None
    q: np.ndarray | None = None

    def __post_init__(self):
        self.Y = np.asarray(self.Y, dtype=float)
        if self.Y.shape != (self.tree.n,):
            raise ValueError("Y must be a node process")
        if self.delta < 0 or self.alpha < 0 or self.z < 0:
            raise ValueError("delta, alpha and z must be nonnegative")
        if not self.y > 0:
            raise ValueError("y must be positive")
        if self.Y.min() <= 0:
            raise ValueError("Y must be strictly positive")
        if not is_martingale(self.tree, self.Y, 1e-9):
            raise ValueError("Y is not a martingale")
        if abs(self.Y[0] - 1.0) > 1e-12:
            raise ValueError("Y must start at 1")
        res = self.normalization_residual()
        if res is not None and res > 1e-10:
            raise ValueError(f"(y, r) does not satisfy the normalization (residual {res:.2e})")

    @property
    def T(self) -> float:
        return self.tree.T

    def normalization_residual(self) -> float | None:
        """``|x y - z r0 + q . r - T|`` when ``x`` and ``r`` are given."""
        if self.x is None or self.r is None:
            return None
        r = np.asarray(self.r, dtype=float)
        q = np.zeros(r.size - 1) if self.q is None else np.asarray(self.q, dtype=float)
        return abs(self.x * self.y - self.z * r[0] + float(q @ r[1:]) - self.T)


def log_policy(inp: LogPolicyInputs):
    """``(c*, F(c*))`` as path processes on the tree's quadrature grid."""
    tree = inp.tree
    d, a, z, T = inp.delta, inp.alpha, inp.z, inp.T
    rho = d - a
    t = tree.point_times()
    G = numeraire(d, a, T, t)
    Yp = tree.as_path(inp.Y)
    ct = 1.0 / (inp.y * Yp * G)
    F = z * np.exp(rho * t)
    if d > 0:
        # delta int_0^t e^{rho (t - s)} c~_s ds, summed interval by interval along the path
        t0 = tree.times[tree.level]
        acc = np.zeros(tree.n)  # accumulated integral of e^{-rho s} c~_s up to the node time
        for i in range(1, tree.n):
            p = tree.parent[i]
            seg = _antiderivative(d, a, T, tree.times[tree.level[i]]) - _antiderivative(d, a, T, t0[p])
            acc[i] = acc[p] + seg / (inp.y * inp.Y[p])
        partial = (_antiderivative(d, a, T, t) - _antiderivative(d, a, T, t0)[:, None]) / (inp.y * Yp)
        F = F + np.exp(rho * t) * (acc[:, None] + partial)
    return F + ct, F


@dataclass
class PolicyReport:
    habit_monotone: bool | None
    habit_min_increment: float
    submartingale: bool | None
    martingale: bool | None
    min_drift: float
    max_abs_residual: float
    ratchet_ratio: float | None
    checks: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(v is not False for v in (self.habit_monotone, self.submartingale, self.martingale))


def _path_increments(tree: EventTree, X) -> np.ndarray:
    """Differences of consecutive grid values along every path."""
    X = tree.as_path(X)
    inner = np.diff(X[tree.internal], axis=1).ravel()
    kids = np.flatnonzero(tree.parent >= 0)
    cross = X[kids, 0] - X[tree.parent[kids], -1]
    return np.concatenate([inner, cross])


def node_values(tree: EventTree, X) -> np.ndarray:
    """Value of a path process at each node's own time."""
    return tree.as_path(X)[:, 0]


def check_policy_properties(inp: LogPolicyInputs, c, F, tol_mono: float = 1e-10,
                            tol_mart: float = 1e-9) -> PolicyReport:
    tree = inp.tree
    d, a = inp.delta, inp.alpha
    inc = _path_increments(tree, F)
    min_inc = float(inc.min()) if inc.size else 0.0
    mono = None
    if d > a or (d == a and d > 0):
        mono = min_inc >= -tol_mono
    cY = node_values(tree, c) * inp.Y
    res = martingale_residual(tree, cY)  # X_node - E[X_next]
    drift = -res[tree.internal]
    min_drift = float(drift.min()) if drift.size else 0.0
    max_abs = float(np.abs(drift).max()) if drift.size else 0.0
    sub = min_drift >= -tol_mart if d >= a else None
    mart = max_abs <= tol_mart if d == 0 and a == 0 else None
    ratio = None
    if a == 0 and inp.z > 0:
        t = tree.point_times()
        base = inp.z * np.exp(d * t)
        ratio = float(np.max(np.abs(tree.as_path(c) - base) / base))
    return PolicyReport(mono, min_inc, sub, mart, min_drift, max_abs, ratio)


def export_policy_csv(inp: LogPolicyInputs, c, F, fh=None) -> str:
    """Columns ``node_id, t, c, F, cY`` at each node time."""
    tree = inp.tree
    cv, Fv = node_values(tree, c), node_values(tree, F)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["node_id", "t", "c", "F", "cY"])
    for i in range(tree.n):
        w.writerow([tree.ids[i], repr(float(tree.times[tree.level[i]])), repr(float(cv[i])),
                    repr(float(Fv[i])), repr(float(cv[i] * inp.Y[i]))])
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text


def gamma_decomposition_residual(tree: EventTree, Y, delta: float, alpha: float) -> float:
    """``sup |Gamma(Y) - Y G|`` for constant rates."""
    h = HabitParams.constant(tree, alpha, delta)
    G = numeraire(delta, alpha, tree.T, tree.point_times())
    return float(np.max(np.abs(hb.gamma_process(tree, Y, h) - tree.as_path(Y) * G)))


# change of numeraire ------------------------------------------------------

@dataclass
class Isomorphism:
    original: object
    transformed: object
    G: np.ndarray  # path process
    branch: str  # unit-numeraire | log | generic
    offset: float  # E int beta ln G dt, used by the log branch

    def back_map(self, c_hat) -> np.ndarray:
        """Transformed consumption ``c^`` to the habit plan ``c``."""
        sc = self.original
        ct = sc.tree.as_path(c_hat) / self.G
        return hb.recover(sc.tree, ct, sc.habit)

    def value_to_original(self, pi: float) -> float:
        return pi - self.offset if self.branch == "log" else pi


def build_isomorphic_scenario(scenario) -> Isomorphism:
    """Habit-free scenario with an extra short endowment and numeraire ``G``.

    The new endowment column pays ``int_0^T e^{-int alpha} G_t dt`` and is
    held in quantity ``-z``. When ``G == 1`` (no habit weight) or the
    utility is log, the numeraire drops out of the objective.
    """
    sc = scenario
    tree, h = sc.tree, sc.habit
    if not hb.deterministic_growth(tree, h):
        raise IsomorphismError("delta - alpha must be a deterministic function of time")
    G = hb.numeraire_path(tree, h)
    column = leaf_path_integral(tree, hb.decay_weight(tree, h) * G)
    payoffs = np.column_stack([sc.payoffs, column]) if sc.N else column[:, None]
    q = np.append(sc.q, -h.z)
    zero = HabitParams(np.zeros(tree.n), np.zeros(tree.n), 0.0)
    inner = ~tree.is_leaf
    if np.all(np.abs(G[inner] - 1.0) <= BRANCH_TOL):
        branch, num, offset = "unit-numeraire", None, 0.0
    elif sc.utility.kind == "log":
        beta = sc.utility.beta(tree.level)
        beta = np.broadcast_to(beta, (tree.n,))[:, None]
        branch, num = "log", None
        offset = float(np.sum(tree.point_weights() * beta * np.log(G)))
    else:
        branch, num, offset = "generic", HabitParams(h.alpha.copy(), h.delta.copy(), 0.0), 0.0
    new = sc.replace(habit=zero, q=q, payoffs=payoffs, numeraire=num)
    return Isomorphism(sc, new, G, branch, offset)


@dataclass
class IsomorphismReport:
    branch: str
    max_abs_diff: float
    value_original: float
    value_transformed: float
    value_mapped: float
    value_diff: float
    offset: float
    tol: float

    @property
    def ok(self) -> bool:
        return self.max_abs_diff <= self.tol and self.value_diff <= self.tol


def verify_isomorphism(scenario, tol: float = 1e-6, solve=None) -> IsomorphismReport:
    """Solve both problems and compare plans and values."""
    if solve is None:
        from .solver import solve_primal as solve
    iso = build_isomorphic_scenario(scenario)
    s0 = solve(scenario)
    s1 = solve(iso.transformed)
    c_map = iso.back_map(s1.c)
    diff = float(np.max(np.abs(c_map - s0.c)))
    mapped = iso.value_to_original(s1.value)
    return IsomorphismReport(iso.branch, diff, s0.value, s1.value, mapped,
                             abs(mapped - s0.value), iso.offset, tol)
