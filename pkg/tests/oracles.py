"""Independent reference computations used by the tests."""
import itertools

import numpy as np
from scipy.optimize import minimize

from habitree import habit as hb


def cps_vertices_d1(sc, eps=0.0):
    """Vertices of the closed price-system polytope for one risky asset.

    Variables are the leaf values ``(Z0, Z1)``; interior nodes are
    conditional means. Constraints: ``Z0_root = 1``, ``Z0 >= eps`` at
    leaves, and ``S/(1+lam) Z0 <= Z1 <= (1+lam) S Z0`` at every node.
    Every choice of ``2L - 1`` active inequalities is solved and the
    feasible solutions kept.
    """
    tree = sc.tree
    assert sc.d == 1 and sc.flat_lambda() is not None
    lam = sc.flat_lambda()
    L = len(tree.leaves)
    D = tree.descendant_weights(tree.M)  # node value = D @ leaf value
    S = sc.prices[:, 0]
    rows, rhs = [], []
    for k in range(L):
        r = np.zeros(2 * L); r[k] = 1.0
        rows.append(r); rhs.append(eps)
    for i in range(tree.n):
        lo = np.zeros(2 * L); lo[L:] = D[i]; lo[:L] = -S[i] / (1 + lam) * D[i]
        hi = np.zeros(2 * L); hi[:L] = (1 + lam) * S[i] * D[i]; hi[L:] = -D[i]
        rows += [lo, hi]; rhs += [0.0, 0.0]
    A = np.array(rows); b = np.array(rhs)
    eq = np.zeros(2 * L); eq[:L] = D[0]
    combos = np.array(list(itertools.combinations(range(len(A)), 2 * L - 1)))
    M = np.concatenate([A[combos], np.broadcast_to(eq, (len(combos), 1, 2 * L))], axis=1)
    rhsM = np.concatenate([b[combos], np.ones((len(combos), 1))], axis=1)
    ok = np.abs(np.linalg.det(M)) > 1e-12
    sol = np.linalg.solve(M[ok], rhsM[ok][..., None])[..., 0]
    feas = np.all(sol @ A.T >= b - 1e-10, axis=1)
    V = np.unique(np.round(sol[feas], 12), axis=0)
    Z0 = V[:, :L] @ D.T
    Z1 = V[:, L:] @ D.T
    return np.stack([Z0, Z1], axis=-1)  # (nv, n, 2)


def brute_force_value(sc, vertices):
    """Maximize ``E int U(c - F(c)) dt`` over the consumption vector at the
    weighted quadrature points, subject to the budget against each vertex
    and the addictive constraint. Returns ``(value, c)``."""
    tree, h = sc.tree, sc.habit
    w = tree.point_weights()
    mask = w > 0
    npts = int(mask.sum())

    def full(v):
        c = np.zeros((tree.n, tree.Q))
        c[mask] = v
        return c

    # F is linear in c: build its matrix column by column
    F0 = hb.habit_process(tree, np.zeros((tree.n, tree.Q)), h)[mask]
    Fm = np.zeros((npts, npts))
    for j in range(npts):
        e = np.zeros(npts); e[j] = 1.0
        Fm[:, j] = hb.habit_process(tree, full(e), h)[mask] - F0
    R = np.eye(npts) - Fm  # c~ = R c - F0
    rho = w[mask]
    Z0pts = np.repeat(vertices[:, :, 0][:, :, None], tree.Q, axis=2)[:, mask]  # (nv, npts)
    Abud = Z0pts * rho  # sum_j Abud c_j <= x
    u = sc.utility
    beta = np.repeat(np.broadcast_to(np.asarray(u.beta(tree.level), float), (tree.n,))[:, None],
                     tree.Q, axis=1)[mask]

    def obj(c):
        ct = R @ c - F0
        if np.any(ct <= 0):
            return 1e10
        return -float(rho @ u.U(ct, beta))

    def grad(c):
        ct = np.maximum(R @ c - F0, 1e-300)
        return -R.T @ (rho * u.dU(ct, beta))

    # feasible start: a small flat c~ recovered into c
    base = hb.recover(tree, np.full((tree.n, tree.Q), 1.0), h)[mask]
    sub = hb.recover(tree, np.zeros((tree.n, tree.Q)), h)[mask]
    cost = lambda c: np.max(Abud @ c)
    s = 0.5 * (sc.x - cost(sub)) / (cost(base) - cost(sub))
    c0 = sub + s * (base - sub)
    cons = [{"type": "ineq", "fun": lambda c: sc.x - Abud @ c, "jac": lambda c: -Abud},
            {"type": "ineq", "fun": lambda c: R @ c - F0 - 1e-12, "jac": lambda c: R}]
    res = minimize(obj, c0, jac=grad, constraints=cons, method="SLSQP",
                   options={"ftol": 1e-14, "maxiter": 2000})
    return -res.fun, full(res.x), res
