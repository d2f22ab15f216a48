"""Cutting-plane solver for the reduced consumption problem.

After the habit reduction the problem is time separable:

    maximize  E int U(t, c~_t) dt
    s.t.      E int c~ Gamma(Z) dt <= x - z p0(Z) + q . p(Z)   for every price system Z

with ``p0(Z) = E int w Z0 dt`` and ``p(Z) = E[E_T Z0_T]``. Each price system
gives one linear constraint ("cut"). With a finite set of cuts the Lagrange
dual

    Phi(lam) = E int V(t, sum_k lam_k Gamma^k) dt + sum_k lam_k b_k,   lam >= 0

is smooth and convex in a handful of variables; its minimizer gives the
primal plan ``c~ = I(sum_k lam_k Gamma^k)``. A separation LP over the price
system polytope then either certifies the plan or returns the most violated
price system, which becomes the next cut.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import habit as hb
from .cps import CpsInfeasible, Polytope, PriceSystem, optimize_over_cps
from .preferences import DomainError
from .tree import leaf_path_integral

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Cutting planes or the inner dual solve did not finish."""


class DomainBoundaryError(DomainError):
    """Initial data on or outside the boundary of the effective domain."""

    def __init__(self, report):
        super().__init__(f"initial data not in the interior of the effective domain "
                         f"({report.status}, margin {report.value:.3e})")
        self.report = report


@dataclass
class Cut:
    ps: PriceSystem
    gamma: np.ndarray  # path process (n, Q)
    p0: float
    p: np.ndarray  # (N,)
    b: float


@dataclass
class Solution:
    c_tilde: np.ndarray
    c: np.ndarray
    habit: np.ndarray
    value: float
    lam: np.ndarray
    y: float
    r: np.ndarray  # (1 + N,): (r0, r_1..r_N)
    gamma_star: np.ndarray
    dual_value: float
    phi: float
    gap: float
    cuts: list
    iterations: int
    violation: float
    converged: bool
    diagnostics: dict = field(default_factory=dict)


@dataclass
class DualityReport:
    gap: float
    foc_residual: float
    pairing_residual: float
    cut_slack: list
    cs_residual: list
    n_cuts: int
    iterations: int
    single_cut: bool
    tol: float
    passed: bool


class _Problem:
    """Per-scenario data shared by the inner and outer loops."""

    def __init__(self, sc, eps):
        self.sc = sc
        tree, h = sc.tree, sc.habit
        self.tree = tree
        w = tree.point_weights()
        self.mask = w.ravel() > 0
        self.rho = w.ravel()[self.mask]
        beta = np.asarray(sc.utility.beta(tree.level), dtype=float)
        self.beta_full = np.repeat(np.broadcast_to(beta, (tree.n,))[:, None], tree.Q, axis=1).ravel()
        self.beta = self.beta_full[self.mask]
        if sc.numeraire is not None:
            self.scale_full = hb.numeraire_path(tree, sc.numeraire).ravel()
        else:
            self.scale_full = np.ones(tree.n * tree.Q)
        self.scale = self.scale_full[self.mask]
        self.Gop = hb.gamma_operator(tree, h)
        self.growth = hb.growth_coefficients(tree, h)
        self.leaf_prob = tree.prob[tree.leaves]
        self.endow = sc.endowment()
        self.polytope = Polytope(sc, eps)
        self.eps = eps

    # scaled conjugate maps: U_s(c) = beta U(c / s)
    def I(self, y):
        return self.scale * self.sc.utility.I(self.scale * y, self.beta)

    def V(self, y):
        return self.sc.utility.V(self.scale * y, self.beta)

    def d2V(self, y):
        return self.scale ** 2 * self.sc.utility.d2V(self.scale * y, self.beta)

    def U(self, c):
        return self.sc.utility.U(c / self.scale, self.beta)

    def dU(self, c):
        return self.sc.utility.dU(c / self.scale, self.beta) / self.scale

    def make_cut(self, ps: PriceSystem) -> Cut:
        sc, tree = self.sc, self.tree
        Z0 = ps.Z0
        gamma = (self.Gop @ Z0).reshape(tree.n, tree.Q)
        p0 = float(self.growth @ Z0)
        zT = Z0[tree.leaves] * self.leaf_prob
        p = sc.payoffs.T @ zT if sc.N else np.zeros(0)
        b = sc.x - sc.habit.z * p0 + (float(sc.q @ p) if sc.N else 0.0)
        return Cut(ps, gamma, p0, p, b)

    def separate(self, c_tilde_pts):
        """Most violated price system for the plan given at weighted points."""
        sc, tree = self.sc, self.tree
        full = np.zeros(tree.n * tree.Q)
        full[self.mask] = self.rho * c_tilde_pts
        coef0 = self.Gop.T @ full + sc.habit.z * self.growth
        coef0[tree.leaves] -= self.leaf_prob * self.endow
        coef = np.zeros((tree.n, 1 + sc.d))
        coef[:, 0] = coef0
        val, ps = optimize_over_cps(sc, coef, self.eps, maximize=True, polytope=self.polytope)
        return val - sc.x, ps


def _phi(prob: _Problem, G, b, lam):
    Lam = lam @ G
    if np.any(~(Lam > 0)):
        return np.inf, Lam
    return float(prob.rho @ prob.V(Lam) + lam @ b), Lam


def _inner(prob: _Problem, G, b, lam0, tol=1e-13, max_iter=200):
    """Projected Newton for ``min Phi(lam)`` over ``lam >= 0``."""
    lam = np.maximum(np.asarray(lam0, dtype=float), 0.0)
    if not np.any(lam > 0):
        lam = np.ones_like(lam)
    f, Lam = _phi(prob, G, b, lam)
    while not np.isfinite(f):
        lam = lam * 2.0 + 1.0
        f, Lam = _phi(prob, G, b, lam)
    bscale = 1.0 + np.abs(b)
    for it in range(max_iter):
        c = prob.I(Lam)
        g = b - G @ (prob.rho * c)
        pg = np.where((lam > 0) | (g < 0), g, 0.0)
        if np.all(np.abs(pg) <= tol * bscale):
            return lam, it
        # active: at the bound and pushing outward (with a small margin)
        eps_a = min(1e-12, float(np.linalg.norm(lam - np.maximum(lam - g, 0.0))))
        active = (lam <= eps_a) & (g > 0)
        free = ~active
        H = (G[free] * (prob.rho * prob.d2V(Lam))) @ G[free].T
        H += 1e-14 * np.trace(H) * np.eye(H.shape[0]) / max(H.shape[0], 1)
        d = np.zeros_like(lam)
        try:
            d[free] = np.linalg.solve(H, g[free])
        except np.linalg.LinAlgError:
            d[free] = g[free] / np.maximum(np.diag(H), 1e-300)
        d[active] = g[active] / max(float(np.max(np.diag(H))) if H.size else 1.0, 1e-300)
        t = 1.0
        while True:
            new = np.maximum(lam - t * d, 0.0)
            fn, Ln = _phi(prob, G, b, new)
            decrease = g[free] @ (lam[free] - new[free]) + g[active] @ (lam[active] - new[active])
            if np.isfinite(fn) and f - fn >= 1e-4 * decrease - 1e-15 * (1 + abs(f)):
                break
            t *= 0.5
            if t < 1e-20:
                return lam, it
        if np.all(new == lam):
            return lam, it
        lam, f, Lam = new, fn, Ln
    log.warning("inner dual solve hit its iteration cap")
    return lam, max_iter


def solve_primal(scenario, eps: float | None = None, tol: float | None = None,
                 max_cuts: int | None = None, check_domain: bool = True) -> Solution:
    """Cutting-plane solve of the reduced problem; see the module docstring."""
    sc = scenario
    eps = sc.eps if eps is None else eps
    tol = sc.tol if tol is None else tol
    max_cuts = sc.max_cuts if max_cuts is None else max_cuts

    if check_domain:
        rep = hb.effective_domain_check(sc, eps)
        if not rep.interior:
            raise DomainBoundaryError(rep)
    try:
        prob = _Problem(sc, eps)
        # first cut: the price system that binds hardest for a flat plan
        _, ps = prob.separate(np.ones(prob.rho.size))
    except CpsInfeasible as e:
        raise SolverError(str(e)) from None

    cuts = [prob.make_cut(ps)]
    lam = np.ones(1)
    viol = np.inf
    converged = False
    inner_iters = 0
    vtol = tol * (1.0 + abs(sc.x))
    for it in range(1, max_cuts + 1):
        G = np.array([c.gamma.ravel()[prob.mask] for c in cuts])
        b = np.array([c.b for c in cuts])
        lam, k = _inner(prob, G, b, lam)
        inner_iters += k
        ct = prob.I(lam @ G)
        viol, ps = prob.separate(ct)
        log.debug("iteration %d: %d cuts, violation %.3e", it, len(cuts), viol)
        if viol <= vtol:
            converged = True
            break
        cut = prob.make_cut(ps)
        gv = cut.gamma.ravel()[prob.mask]
        cos = G @ gv / (np.linalg.norm(G, axis=1) * np.linalg.norm(gv))
        if np.any(cos >= 1.0 - 1e-10):
            # the LP returned a cut we already hold; the inner solve is the bottleneck
            log.warning("separation repeated an existing cut (violation %.3e)", viol)
            break
        cuts.append(cut)
        lam = np.append(lam, 0.0)
    else:
        raise SolverError(f"no convergence within {max_cuts} cuts (violation {viol:.3e})")

    G = np.array([c.gamma.ravel()[prob.mask] for c in cuts])
    b = np.array([c.b for c in cuts])
    return _assemble(prob, cuts, lam, G, b, it, viol, converged)


def _assemble(prob, cuts, lam, G, b, iterations, viol, converged) -> Solution:
    sc, tree = prob.sc, prob.tree
    gstar_full = np.tensordot(lam, np.array([c.gamma for c in cuts]), axes=1)
    Lam = gstar_full.ravel()[prob.mask]
    ct_pts = prob.I(Lam)
    ct = np.zeros(tree.n * tree.Q)
    ct[prob.mask] = ct_pts
    # unweighted points (leaves) carry the first-order value for completeness
    rest = ~prob.mask
    ct[rest] = prob.scale_full[rest] * sc.utility.I(prob.scale_full[rest] * gstar_full.ravel()[rest],
                                                   prob.beta_full[rest])
    ct = ct.reshape(tree.n, tree.Q)
    c = hb.recover(tree, ct, sc.habit)
    value = float(prob.rho @ prob.U(ct_pts))
    dual = float(prob.rho @ prob.V(Lam))
    phi = dual + float(lam @ b)
    y = float(lam.sum())
    r = np.concatenate([[lam @ np.array([k.p0 for k in cuts])],
                        lam @ np.array([k.p for k in cuts]).reshape(len(cuts), sc.N)])
    diag = {"shadow_claim_replicable": None, "lower_utility_integral": None}
    if sc.x > 0:
        # E int U^-(t, x e^{-int alpha}) dt; finite on any tree, reported only
        xs = sc.x * hb.decay_weight(tree, sc.habit)
        neg = np.maximum(-sc.utility.U(xs, prob.beta_full.reshape(tree.n, tree.Q)), 0.0)
        diag["lower_utility_integral"] = float(np.sum(tree.point_weights() * neg))
    try:
        claim = sc.endowment() - sc.habit.z * leaf_path_integral(tree, hb.growth_weight(tree, sc.habit))
        diag["shadow_claim_replicable"] = replicability_check(sc, claim, prob.eps, polytope=prob.polytope)
    except CpsInfeasible:
        pass
    return Solution(ct, c, c - ct, value, lam, y, r, gstar_full, dual, phi, abs(value - phi),
                    cuts, iterations, float(viol), converged, diag)


def evaluate_dual(solution: Solution, scenario) -> float:
    """``E int V(t, Gamma*) dt`` for the multipliers stored in ``solution``."""
    prob = _Problem(scenario, scenario.eps)
    G = np.array([c.gamma.ravel()[prob.mask] for c in solution.cuts])
    return float(prob.rho @ prob.V(solution.lam @ G))


def verify_first_order(solution: Solution, scenario, tol: float = 1e-8) -> DualityReport:
    """Gap, ``Gamma* = U'(c~*)`` and the pairing identity, all recomputed
    from the multipliers, cuts and plan stored in ``solution``."""
    sc = scenario
    prob = _Problem(sc, solution.cuts[0].ps.eps if solution.cuts else sc.eps)
    lam = np.asarray(solution.lam, dtype=float)
    G = np.array([c.gamma.ravel()[prob.mask] for c in solution.cuts])
    b = np.array([c.b for c in solution.cuts])
    Lam = lam @ G
    ct = np.asarray(solution.c_tilde, dtype=float).ravel()[prob.mask]
    y = float(lam.sum())
    r0 = float(lam @ np.array([k.p0 for k in solution.cuts]))
    rq = lam @ np.array([k.p for k in solution.cuts]).reshape(len(solution.cuts), sc.N)
    budget = sc.x * y - sc.habit.z * r0 + (float(sc.q @ rq) if sc.N else 0.0)
    value = float(prob.rho @ prob.U(ct))
    dual = float(prob.rho @ prob.V(Lam))
    gap = abs(value - (dual + budget))
    foc = float(np.max(np.abs(Lam - prob.dU(ct))))
    pairing = abs(float(prob.rho @ (ct * Lam)) - budget)
    slack = [float(bk - prob.rho @ (ct * gk)) for bk, gk in zip(b, G)]
    cs = [abs(lk * s) for lk, s in zip(lam, slack)]
    # does a single discovered price system already carry Gamma*?
    single = False
    for gk in G:
        ratio = Lam / gk
        if np.ptp(ratio) <= tol * max(1.0, abs(ratio.mean())):
            single = True
            break
    passed = gap <= tol and foc <= tol and pairing <= tol
    return DualityReport(gap, foc, pairing, slack, cs, len(solution.cuts), solution.iterations,
                         single, tol, passed)


def replicability_check(scenario, claim, eps: float | None = None, tol: float = 1e-9,
                        polytope: Polytope | None = None) -> bool:
    """A cash claim at the leaves is replicable when its price interval
    ``[min, max] E[claim Z0_T]`` over the price systems is degenerate."""
    tree = scenario.tree
    coef = np.zeros((tree.n, 1 + scenario.d))
    coef[tree.leaves, 0] = tree.prob[tree.leaves] * np.asarray(claim, dtype=float)
    hi, _ = optimize_over_cps(scenario, coef, eps, True, polytope)
    lo, _ = optimize_over_cps(scenario, coef, eps, False, polytope)
    return bool(hi - lo <= tol * (1.0 + abs(hi)))


def rebuild_cuts(scenario, price_systems, eps: float | None = None) -> list:
    """Cuts for stored price systems (``(n, 1+d)`` arrays or ``PriceSystem``)."""
    eps = scenario.eps if eps is None else eps
    prob = _Problem(scenario, eps)
    out = []
    for ps in price_systems:
        if not isinstance(ps, PriceSystem):
            ps = PriceSystem(np.asarray(ps, dtype=float), eps)
        out.append(prob.make_cut(ps))
    return out
